"""Compiled inner loops shared by the policy functions and the simulator."""

import numpy as np
from numba import njit

QUALITY = 0
POPULARITY = 1
PERFORMANCE = 2
RANDOM = 3

MAX_DINKELBACH_ITERATIONS = 100


@njit(cache=True, nogil=True)
def assign_by_keys(pos_order, keys):
    """Give the k-th largest key the k-th position of ``pos_order``; ties by index."""
    prod_order = np.argsort(-keys, kind="mergesort")
    sigma = np.empty(keys.size, dtype=np.int64)
    for k in range(keys.size):
        sigma[prod_order[k]] = pos_order[k]
    return sigma


@njit(cache=True, nogil=True)
def ranking_value(v, sigma, a, q):
    num = 0.0
    den = 0.0
    for i in range(a.size):
        w = v[sigma[i]] * a[i]
        num += w * q[i]
        den += w
    return num / den


@njit(cache=True, nogil=True)
def dinkelbach(v, pos_order, a, q):
    """Maximize ``sum v[s_i] a_i q_i / sum v[s_i] a_i`` over permutations s.

    For a fixed ratio guess lam the parametric problem
    ``max_s sum v[s_i] a_i (q_i - lam)`` is a rearrangement: pair the
    positions sorted by visibility with products sorted by ``a_i (q_i - lam)``.
    Returns (sigma, value, iterations); iterations == -1 signals no fixed point.
    """
    n = a.size
    keys = np.empty(n)
    lam = 0.0
    sigma = np.empty(0, dtype=np.int64)
    for it in range(MAX_DINKELBACH_ITERATIONS):
        for i in range(n):
            keys[i] = a[i] * (q[i] - lam)
        cand = assign_by_keys(pos_order, keys)
        if it > 0:
            same = True
            for i in range(n):
                if cand[i] != sigma[i]:
                    same = False
                    break
            if same:
                return sigma, lam, it
        cand_value = ranking_value(v, cand, a, q)
        if it > 0 and cand_value <= lam:
            return sigma, lam, it
        sigma = cand
        lam = cand_value
    return sigma, lam, -1


@njit(cache=True, nogil=True)
def run_world(
    v,
    pos_order,
    appeals,
    q,
    social,
    policy,
    refresh,
    sigma0,
    static_sigma,
    first_refresh,
    policy_keys,
    uniforms,
    snap_every,
    tried,
    bought,
    snapshots,
):
    """Run ``uniforms.shape[0]`` trials of a single world in place.

    Policies that do not react to the state use ``static_sigma`` at every
    refresh. ``uniforms[t, 0]`` picks the product by inverse CDF, ``uniforms[t, 1]``
    decides the purchase. Rows of ``policy_keys`` are consumed in order by
    the random policy. ``snapshots[k]`` receives the download vector after
    trial ``(k + 1) * snap_every`` (and the final one after the last trial).
    Returns the final download vector.
    """
    n = appeals.size
    steps = uniforms.shape[0]
    d = np.zeros(n, dtype=np.int64)
    a = appeals.copy()
    sigma = sigma0.copy()
    cum = np.empty(n)
    key_row = 0
    snap = 0
    for t in range(steps):
        if t >= first_refresh and t % refresh == 0:
            if policy == POPULARITY and social:
                keys = d.astype(np.float64)
                sigma = assign_by_keys(pos_order, keys)
            elif policy == PERFORMANCE and social:
                sigma, _, _ = dinkelbach(v, pos_order, a, q)
            elif policy == RANDOM:
                sigma = np.argsort(policy_keys[key_row], kind="mergesort")
                key_row += 1
            else:
                sigma = static_sigma
        total = 0.0
        for i in range(n):
            total += v[sigma[i]] * a[i]
            cum[i] = total
        target = uniforms[t, 0] * total
        pick = n - 1
        for i in range(n):
            if target < cum[i]:
                pick = i
                break
        tried[t] = pick
        if uniforms[t, 1] < q[pick]:
            bought[t] = True
            d[pick] += 1
            if social:
                a[pick] = appeals[pick] + d[pick]
        else:
            bought[t] = False
        if (t + 1) % snap_every == 0 or t + 1 == steps:
            for i in range(n):
                snapshots[snap, i] = d[i]
            snap += 1
    return d

"""Exact finite-horizon expectations for small markets.

``optimal_value`` solves the dynamic program over purchase-count vectors,
maximizing over every ranking in every state. ``policy_value`` computes the
exact expected purchases of a given policy schedule by recursing over all
purchase / no-purchase branches.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, SizeError, UsageError
from .market import (
    Condition,
    MarketState,
    ProductCatalog,
    Ranking,
    VisibilityProfile,
    effective_appeals,
)
from .policies import PolicyKind, PolicySchedule, all_rankings, compute_ranking

MAX_STATES = 10**7
MAX_ENUMERATED_N = 6


@dataclass(frozen=True)
class HorizonSpec:
    horizon: int
    max_state_bound: Optional[int] = None

    def __post_init__(self) -> None:
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise UsageError(f"horizon must be a positive integer, got {self.horizon!r}")
        if self.max_state_bound is None:
            object.__setattr__(self, "max_state_bound", int(self.horizon))

    def check(self, n: int) -> None:
        if (self.horizon + 1) ** n > MAX_STATES:
            raise SizeError(
                f"state space bound ({self.horizon}+1)^{n} exceeds {MAX_STATES}"
            )


@dataclass
class ValueReport:
    """Expected purchases over the horizon.

    ``per_state_values`` (when requested) maps ``(t, downloads)`` with 1-based
    period ``t`` to the value-to-go from that state.
    """

    value: float
    per_state_values: Optional[dict] = field(default=None, repr=False)


def _check_instance(catalog: ProductCatalog, vis: VisibilityProfile, spec: HorizonSpec) -> None:
    if vis.n != catalog.n:
        raise DimensionError(f"{vis.n} positions for {catalog.n} products")
    spec.check(catalog.n)


def _compositions(n: int, total_max: int):
    """All length-n non-negative integer vectors with sum <= total_max, sorted."""
    if n == 1:
        for k in range(total_max + 1):
            yield (k,)
        return
    for first in range(total_max + 1):
        for rest in _compositions(n - 1, total_max - first):
            yield (first,) + rest


def optimal_value(
    catalog: ProductCatalog,
    vis: VisibilityProfile,
    spec: HorizonSpec,
    *,
    condition: Condition = Condition.SOCIAL_INFLUENCE,
    keep_states: bool = False,
) -> ValueReport:
    """Optimal expected purchases over ``spec.horizon`` trials, any ranking in any state."""
    _check_instance(catalog, vis, spec)
    n = catalog.n
    if n > MAX_ENUMERATED_N:
        raise SizeError(f"optimal_value enumerates rankings only for n <= {MAX_ENUMERATED_N}")
    social = Condition.parse(condition) is Condition.SOCIAL_INFLUENCE
    T = spec.horizon
    V = vis.visibilities[all_rankings(n)]
    A = catalog.appeals
    q = catalog.qualities
    unit = np.eye(n, dtype=np.int64)

    later: dict = {}
    table: dict = {}
    for t in range(T, 0, -1):
        current: dict = {}
        states = _compositions(n, t - 1) if social else [(0,) * n]
        for d in states:
            stay = later.get(d, 0.0)
            if social:
                gain = np.array([later.get(tuple(np.add(d, unit[i])), 0.0) for i in range(n)])
                a = A + np.asarray(d, dtype=float)
            else:
                gain = np.full(n, stay)
                a = A
            w = q * (1.0 + gain - stay)
            scores = (V @ (a * w)) / (V @ a)
            current[d] = stay + float(scores.max())
        if keep_states:
            for d, value in current.items():
                table[(t, d)] = value
        later = current
    return ValueReport(later[(0,) * n], table if keep_states else None)


def policy_value(
    schedule: PolicySchedule,
    catalog: ProductCatalog,
    vis: VisibilityProfile,
    spec: HorizonSpec,
    *,
    keep_states: bool = False,
) -> ValueReport:
    """Exact expected purchases of ``schedule`` over ``spec.horizon`` trials.

    The random policy is averaged over all n! rankings at each refresh.
    """
    _check_instance(catalog, vis, spec)
    n = catalog.n
    kind = schedule.kind
    cond = schedule.condition
    social = cond is Condition.SOCIAL_INFLUENCE
    T = spec.horizon
    r = schedule.refresh_rate
    if kind is PolicyKind.RANDOM:
        if n > MAX_ENUMERATED_N:
            raise SizeError(f"the random policy is enumerated only for n <= {MAX_ENUMERATED_N}")
        every = [Ranking(tuple(p)) for p in all_rankings(n)]
    q = catalog.qualities
    unit = np.eye(n, dtype=np.int64)

    memo: dict = {}

    def value(t: int, d: tuple, sigma: Optional[Ranking]) -> float:
        if t > T:
            return 0.0
        key = (t, d, sigma)
        if key in memo:
            return memo[key]
        if (t - 1) % r == 0:
            if kind is PolicyKind.RANDOM:
                result = sum(from_ranking(t, d, s) for s in every) / len(every)
            else:
                state = MarketState(np.asarray(d, dtype=np.int64), sum(d))
                result = from_ranking(t, d, compute_ranking(kind, catalog, vis, state, cond))
        else:
            result = from_ranking(t, d, sigma)
        memo[key] = result
        return result

    def from_ranking(t: int, d: tuple, sigma: Ranking) -> float:
        keep = sigma if t % r != 0 else None
        state = MarketState(np.asarray(d, dtype=np.int64), sum(d))
        a = effective_appeals(catalog, state, cond)
        w = vis.for_ranking(sigma) * a
        buy = w * q / w.sum()
        total = (1.0 - buy.sum()) * value(t + 1, d, keep)
        for i in range(n):
            nxt = tuple(int(x) for x in np.add(d, unit[i])) if social else d
            total += buy[i] * (1.0 + value(t + 1, nxt, keep))
        return float(total)

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * T + 1000))
    try:
        result = value(1, (0,) * n, None)
    finally:
        sys.setrecursionlimit(old_limit)
    table = None
    if keep_states:
        table = {(t, d): v for (t, d, sigma), v in memo.items() if sigma is None}
    return ValueReport(result, table)

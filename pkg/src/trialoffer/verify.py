"""Self-checking suites for the market theory, runnable from the command line."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import analysis
from .dp import HorizonSpec, optimal_value, policy_value
from .market import (
    Condition,
    ProductCatalog,
    Ranking,
    VisibilityProfile,
    expected_purchases,
    next_purchase_distribution,
    one_step_expected,
    purchase_probabilities,
    trial_probabilities,
)
from .policies import PolicySchedule, brute_force_ranking, performance_ranking, quality_ranking
from .simulator import SimulationConfig, run_experiment

DEFAULT_SEED = 2015
ROUNDED_TOL = 5e-4
IDENTITY_TOL = 1e-12
ORACLE_TOL = 1e-10

EXAMPLE_VIS = (0.7, 0.2, 0.01)
EXAMPLE_Q = (0.8, 0.5, 0.1)
EXAMPLE_A = (0.01, 0.1, 0.9)


@dataclass
class SuiteReport:
    suite: str
    seed: int
    checks: int = 0
    failures: list[str] = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.checks > 0 and not self.failures

    def check(self, ok: bool, message: str) -> bool:
        self.checks += 1
        if not ok:
            self.failures.append(message)
        return ok

    def close(self, name: str, value: float, expected: float, tol: float) -> bool:
        self.details[name] = {"value": float(value), "expected": float(expected), "tol": tol}
        return self.check(
            abs(value - expected) <= tol, f"{name}: {value:.6g} differs from {expected} by more than {tol}"
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _unit(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform draws on (0, 1]."""
    return 1.0 - rng.random(n)


def example_instance() -> tuple[ProductCatalog, VisibilityProfile]:
    return ProductCatalog(EXAMPLE_Q, EXAMPLE_A), VisibilityProfile(EXAMPLE_VIS)


def example1(seed: int = DEFAULT_SEED) -> SuiteReport:
    rep = SuiteReport("example1", seed, tolerances={"rounded_values": ROUNDED_TOL})
    cat, vis = example_instance()
    A, q = cat.appeals, cat.qualities
    perf = performance_ranking(vis, A, q)
    qual = quality_ranking(cat, vis)
    rep.check(perf.one_based() == (2, 1, 3), f"performance ranking {perf.one_based()} != (2, 1, 3)")
    rep.check(qual.one_based() == (1, 2, 3), f"quality ranking {qual.one_based()} != (1, 2, 3)")
    rep.close("lambda_star", expected_purchases(perf, vis, A, q), 0.463, ROUNDED_TOL)
    rep.close("lambda_q_s0", expected_purchases(qual, vis, A, q), 0.458, ROUNDED_TOL)
    for name, ranking, expected in (
        ("P_star", perf, (0.0198, 0.432, 0.0111)),
        ("P_q", qual, (0.156, 0.278, 0.025)),
    ):
        probs = purchase_probabilities(ranking, vis, A, q)
        for i, e in enumerate(expected):
            rep.close(f"{name}_{i + 1}", probs[i], e, ROUNDED_TOL)
    states = [np.zeros(3), np.eye(3)[0], np.eye(3)[1], np.eye(3)[2]]
    star = (0.463, 0.783, 0.496, 0.423)
    quality = (0.458, 0.783, 0.494, 0.380)
    for k, d in enumerate(states):
        a = A + d
        best = performance_ranking(vis, a, q)
        rep.close(f"lambda_star_s{k}", expected_purchases(best, vis, a, q), star[k], ROUNDED_TOL)
        rep.close(f"lambda_q_s{k}", expected_purchases(qual, vis, a, q), quality[k], ROUNDED_TOL)
    two = HorizonSpec(2)
    rep.close("two_period_performance", policy_value(PolicySchedule("performance"), cat, vis, two).value, 0.946, ROUNDED_TOL)
    rep.close("two_period_quality", policy_value(PolicySchedule("quality"), cat, vis, two).value, 0.975, ROUNDED_TOL)
    rep.details["two_period_optimal"] = optimal_value(cat, vis, two).value
    return rep


def dinkelbach_oracle(seed: int = DEFAULT_SEED, instances: int = 200, max_n: int = 6) -> SuiteReport:
    rep = SuiteReport("dinkelbach-oracle", seed, tolerances={"value": ORACLE_TOL})
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(instances):
        n = int(rng.integers(1, max_n + 1))
        v, a, q = _unit(rng, n), _unit(rng, n), _unit(rng, n)
        fast = expected_purchases(performance_ranking(v, a, q), v, a, q)
        slow = expected_purchases(brute_force_ranking(v, a, q), v, a, q)
        worst = max(worst, abs(fast - slow))
        rep.check(abs(fast - slow) <= ORACLE_TOL, f"instance {k}: {fast!r} vs exhaustive {slow!r}")
    rep.details["max_abs_gap"] = worst
    return rep


def _sorted_instance(rng: np.random.Generator, max_n: int):
    n = int(rng.integers(1, max_n + 1))
    v = np.sort(_unit(rng, n))[::-1]
    q = np.sort(_unit(rng, n))[::-1]
    a = _unit(rng, n)
    return v, a, q


def theorem1(seed: int = DEFAULT_SEED, instances: int = 10_000, max_n: int = 32) -> SuiteReport:
    """Position bias never hurts the quality ranking."""
    rep = SuiteReport("theorem1", seed, tolerances={"slack": IDENTITY_TOL})
    rng = np.random.default_rng(seed)
    for k in range(instances):
        v, a, q = _sorted_instance(rng, max_n)
        lam = expected_purchases(Ranking.identity(v.size), v, a, q)
        unbiased = float(np.dot(a, q) / a.sum())
        rep.check(lam >= unbiased - IDENTITY_TOL, f"instance {k}: {lam!r} < {unbiased!r}")
    for k in range(instances // 10):
        _, a, q = _sorted_instance(rng, max_n)
        v = np.full(a.size, float(_unit(rng, 1)[0]))
        lam = expected_purchases(Ranking.identity(a.size), v, a, q)
        unbiased = float(np.dot(a, q) / a.sum())
        rep.check(abs(lam - unbiased) <= IDENTITY_TOL, f"flat instance {k}: {lam!r} != {unbiased!r}")
    return rep


def theorem2(seed: int = DEFAULT_SEED, instances: int = 10_000, max_n: int = 32) -> SuiteReport:
    """Expected purchases never decrease from one trial to the next under the quality ranking."""
    rep = SuiteReport("theorem2", seed, tolerances={"slack": IDENTITY_TOL})
    rng = np.random.default_rng(seed)
    for k in range(instances):
        v, a, q = _sorted_instance(rng, max_n)
        ident = Ranking.identity(v.size)
        now = expected_purchases(ident, v, a, q)
        nxt = one_step_expected(ident, v, a, q)
        rep.check(nxt >= now - IDENTITY_TOL, f"instance {k}: {nxt!r} < {now!r}")
    return rep


def geometric_next_purchase(v, a, q, tail: float = 1e-13) -> np.ndarray:
    """Next-purchase distribution by summing 'no purchase for m trials, then i' over m.

    Stops once the mass of all remaining terms is below ``tail``.
    """
    w = np.asarray(v) * np.asarray(a)
    trial = w / w.sum()
    buy = trial * np.asarray(q)
    miss = 1.0 - buy.sum()
    total = np.zeros_like(buy)
    term = buy.copy()
    while True:
        total += term
        if term.sum() * miss / (1.0 - miss) < tail:
            return total
        term = term * miss


def lemma1(
    seed: int = DEFAULT_SEED, instances: int = 20, purchases: int = 100_000, max_n: int = 6
) -> SuiteReport:
    """Empirical next-purchase frequencies against the closed form (qualities drawn from [0.05, 1])."""
    rep = SuiteReport("lemma1", seed, tolerances={"standard_errors": 3.0, "series": IDENTITY_TOL})
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(instances):
        n = int(rng.integers(2, max_n + 1))
        v, a = _unit(rng, n), _unit(rng, n)
        q = rng.uniform(0.05, 1.0, n)
        p = next_purchase_distribution(v, a, q)
        series = geometric_next_purchase(v, a, q)
        rep.check(np.allclose(series, p, rtol=0, atol=IDENTITY_TOL), f"instance {k}: series {series} vs {p}")
        trial = trial_probabilities(Ranking.identity(n), v, a)
        bought: list[np.ndarray] = []
        count = 0
        while count < purchases:
            picks = rng.choice(n, size=4 * purchases, p=trial)
            hits = picks[rng.random(picks.size) < q[picks]]
            bought.append(hits)
            count += hits.size
        sample = np.concatenate(bought)[:purchases]
        freq = np.bincount(sample, minlength=n) / purchases
        se = np.sqrt(p * (1 - p) / purchases)
        z = np.abs(freq - p) / se
        worst = max(worst, float(z.max()))
        rep.check(bool(np.all(z <= 3.0)), f"instance {k}: |z| up to {z.max():.2f}")
    rep.details["max_abs_z"] = worst
    return rep


def alpha_bound(seed: int = DEFAULT_SEED, instances: int = 10_000, max_n: int = 32) -> SuiteReport:
    """The quality ranking is within a factor v_1 / v_n of the best static ranking."""
    rep = SuiteReport("alpha-bound", seed, tolerances={"bound": ORACLE_TOL, "tightness": 0.95})
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(instances):
        v, a, q = _sorted_instance(rng, max_n)
        cat = ProductCatalog(q, a)
        best = expected_purchases(performance_ranking(v, a, q), v, a, q)
        qual = expected_purchases(quality_ranking(cat, VisibilityProfile(v)), v, a, q)
        alpha = v[0] / v[-1]
        worst = max(worst, best / (alpha * qual))
        rep.check(best <= alpha * qual + ORACLE_TOL, f"instance {k}: {best!r} > {alpha!r} * {qual!r}")
    rep.details["max_ratio_over_alpha"] = worst
    ratio, limit = tightness_ratio()
    rep.details["tightness_ratio"] = ratio
    rep.details["tightness_limit"] = limit
    rep.check(ratio >= 0.95 / 0.25, f"tightness ratio {ratio} < 0.95 / v3")
    return rep


def tightness_ratio(eps: float = 1e-6, x: float = 1e4, v3: float = 0.25) -> tuple[float, float]:
    """Best-over-quality ratio on the 3-product instance where the bound is nearly attained."""
    q = np.array([1.0, eps, 0.0])
    a = np.array([1.0, x, 0.0])
    v = np.array([1.0, 1.0, v3])
    ident = Ranking.identity(3)
    best = performance_ranking(v, a, q, allow_zero_appeals=True)
    lam_best = expected_purchases(best, v, a, q, allow_zero_appeals=True)
    lam_q = expected_purchases(ident, v, a, q, allow_zero_appeals=True)
    return lam_best / lam_q, (1 + x) / (1 + v3 * x)


def monopoly(seed: int = DEFAULT_SEED, steps: int = 50_000, worlds: int = 100, threads: int = 1) -> SuiteReport:
    rep = SuiteReport("monopoly", seed, tolerances={"share": 0.9, "min_worlds": 0.95})
    cfg = SimulationConfig(
        ProductCatalog([0.6, 0.3], [1.0, 1.0]),
        VisibilityProfile([1.0, 1.0]),
        PolicySchedule("quality", Condition.SOCIAL_INFLUENCE),
        steps=steps,
        worlds=worlds,
        master_seed=seed,
    )
    res = run_experiment(cfg, threads=threads)
    final = analysis.shares_at(res, steps)
    early = analysis.shares_at(res, steps // 10)
    above = int((final > 0.9).sum())
    rep.details.update(
        worlds_above=above, median_final=float(np.median(final)), median_early=float(np.median(early))
    )
    rep.check(above >= math.ceil(0.95 * worlds), f"only {above}/{worlds} worlds above 0.9")
    rep.check(
        np.median(final) > np.median(early),
        f"median share did not grow: {np.median(early)} -> {np.median(final)}",
    )
    return rep


def beta(seed: int = DEFAULT_SEED, steps: int = 50_000, worlds: int = 400, threads: int = 1) -> SuiteReport:
    """Equal-quality market: final shares against Beta(A1/q, A2/q) and against Beta(A1, A2)."""
    rep = SuiteReport("beta", seed, tolerances={"ks_alpha": analysis.KS_ALPHA})
    cfg = SimulationConfig(
        ProductCatalog([0.5, 0.5], [1.0, 1.0]),
        VisibilityProfile([1.0, 1.0]),
        PolicySchedule("quality", Condition.SOCIAL_INFLUENCE),
        steps=steps,
        worlds=worlds,
        master_seed=seed,
    )
    res = run_experiment(cfg, threads=threads)
    stated = analysis.beta_limit_from_result(res)
    shares = res.final_downloads[:, 0] / res.final_downloads.sum(axis=1)
    urn = analysis.beta_limit_test(shares, 1.0, 1.0, 1.0)
    for name, fit in (("beta_A_over_q", stated), ("beta_A", urn)):
        rep.details[name] = {"a": float(fit.a), "b": float(fit.b), "ks": fit.statistic, "pvalue": fit.pvalue}
        rep.check(fit.accept, f"{name}: KS {fit.statistic:.4f} rejected (p={fit.pvalue:.2g})")
    return rep


SUITES: dict[str, Callable[..., SuiteReport]] = {
    "theorem1": theorem1,
    "theorem2": theorem2,
    "lemma1": lemma1,
    "monopoly": monopoly,
    "beta": beta,
    "alpha-bound": alpha_bound,
    "dinkelbach-oracle": dinkelbach_oracle,
    "example1": example1,
}

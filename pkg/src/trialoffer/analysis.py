"""Post-processing of simulated markets: urn view, monopoly, beta limit, efficiency."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import special
from .errors import DomainError, UsageError
from .market import Condition, MarketState, ProductCatalog, Ranking, VisibilityProfile, effective_appeals
from .simulator import ExperimentResult

KS_ALPHA = 0.01
MIN_BETA_WORLDS = 200


@dataclass(frozen=True)
class UrnView:
    """Purchases seen as a generalized Polya urn.

    ``qhat[j] = v_j q_j`` balls of type j are added per purchase of j;
    ``X[j] = a_j qhat[j]`` is the current ball count and ``Z`` the draw
    probabilities.
    """

    qhat: np.ndarray
    X: np.ndarray
    Z: np.ndarray

    def after_purchase(self, j: int) -> "UrnView":
        X = self.X.copy()
        X[j] += self.qhat[j]
        return UrnView(self.qhat, X, X / X.sum())


def urn_view(
    catalog: ProductCatalog,
    vis: VisibilityProfile,
    state: MarketState,
    ranking: Optional[Ranking] = None,
    cond: Condition = Condition.SOCIAL_INFLUENCE,
) -> UrnView:
    """Urn composition for ``state``; products sit at positions ``ranking`` (identity by default)."""
    ranking = ranking or Ranking.identity(catalog.n)
    qhat = vis.for_ranking(ranking) * catalog.qualities
    X = effective_appeals(catalog, state, cond) * qhat
    total = X.sum()
    if not total > 0:
        raise DomainError("urn is empty: no product can be purchased")
    return UrnView(qhat, X, X / total)


def _shares(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.nan_to_num(counts / totals, nan=0.0)


def top_product(catalog: ProductCatalog) -> int:
    """Index of the highest-quality product (lowest index on ties)."""
    return int(np.argmax(catalog.qualities))


@dataclass
class MonopolyStats:
    top_product: int
    threshold: float
    first_step: list[Optional[int]]
    final_shares: np.ndarray

    @property
    def reached_fraction(self) -> float:
        return sum(s is not None for s in self.first_step) / len(self.first_step)


def monopoly_stats(result: ExperimentResult, threshold: float, product: Optional[int] = None) -> MonopolyStats:
    """First recorded step at which ``product`` (default: best quality) holds ``threshold`` of all purchases."""
    if not 0.5 < threshold < 1.0:
        raise UsageError("threshold must lie in (0.5, 1)")
    top = top_product(result.config.catalog) if product is None else product
    first: list[Optional[int]] = []
    finals = []
    for trace in result.traces:
        share = _shares(trace.checkpoint_downloads)[:, top]
        hit = np.flatnonzero(share >= threshold)
        first.append(int(trace.checkpoint_steps[hit[0]]) if hit.size else None)
        finals.append(_shares(trace.final_downloads)[top])
    return MonopolyStats(top, threshold, first, np.array(finals))


def shares_at(result: ExperimentResult, step: int, product: Optional[int] = None) -> np.ndarray:
    """Per-world purchase share of ``product`` after trial ``step``."""
    top = top_product(result.config.catalog) if product is None else product
    return _shares(result.downloads_at(step))[:, top]


@dataclass(frozen=True)
class BetaFit:
    statistic: float
    pvalue: float
    accept: bool
    a: float
    b: float
    worlds: int
    alpha: float = KS_ALPHA


def beta_limit_test(
    final_shares: Sequence[float],
    A1: float,
    A2: float,
    q: float,
    alpha: float = KS_ALPHA,
    min_worlds: int = MIN_BETA_WORLDS,
) -> BetaFit:
    """KS distance between final shares of product 1 and Beta(A1/q, A2/q).

    Passing ``q=1`` tests against Beta(A1, A2), which is the limit the
    simulated urn actually reaches: each purchase adds one unit of appeal,
    i.e. ``v q`` balls on top of an initial ``A v q``, so the composition
    converges to Beta(A1, A2) whatever the common quality.
    """
    shares = np.asarray(final_shares, dtype=float)
    if shares.ndim != 1 or shares.size < min_worlds:
        raise UsageError(f"need at least {min_worlds} worlds, got {shares.size}")
    if min(A1, A2, q) <= 0:
        raise UsageError("A1, A2 and q must be positive")
    a, b = A1 / q, A2 / q
    stat = special.ks_statistic(shares, lambda x: special.beta_cdf(x, a, b))
    p = special.ks_pvalue(stat, shares.size)
    return BetaFit(stat, p, p >= alpha, a, b, int(shares.size), alpha)


def beta_limit_from_result(result: ExperimentResult, alpha: float = KS_ALPHA) -> BetaFit:
    """Beta-limit test for a 2-product, equal-quality, equal-visibility experiment."""
    cfg = result.config
    q = cfg.catalog.qualities
    v = cfg.visibility.visibilities
    A = cfg.catalog.appeals
    if cfg.n != 2 or q[0] != q[1] or v[0] != v[1]:
        raise UsageError("the beta limit applies to two products of equal quality and visibility")
    if cfg.schedule.condition is not Condition.SOCIAL_INFLUENCE:
        raise UsageError("the beta limit needs the social-influence condition")
    if cfg.steps * q.min() < 100 * A.max():
        raise UsageError("too few steps: need steps * q >= 100 * max(A)")
    shares = _shares(result.final_downloads)[:, 0]
    return beta_limit_test(shares, A[0], A[1], q[0], alpha)


@dataclass(frozen=True)
class EfficiencyRow:
    policy: str
    condition: str
    downloads_per_trial: float
    stderr: float
    worlds: int


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def efficiency_table(results: Sequence[ExperimentResult]) -> list[EfficiencyRow]:
    """Mean and standard error over worlds of total purchases / trials, one row per result."""
    if not results:
        raise UsageError("no results given")
    first = results[0].config
    rows = []
    for res in results:
        cfg = res.config
        if cfg.catalog != first.catalog or cfg.steps != first.steps:
            raise UsageError("results must share the catalog and the number of steps")
        rate = res.final_downloads.sum(axis=1) / cfg.steps
        mean, se = _mean_se(rate)
        rows.append(
            EfficiencyRow(cfg.schedule.kind.value, cfg.schedule.condition.value, mean, se, rate.size)
        )
    return rows


@dataclass
class PredictabilityReport:
    """Cross-world spread of final downloads, songs in increasing quality order."""

    song_order: np.ndarray
    quantile_levels: tuple[float, ...]
    quantiles: np.ndarray  # songs x levels, in song_order
    top_win_rate: float
    unpredictability: float


def predictability_report(
    result: ExperimentResult, levels: tuple[float, ...] = (0.05, 0.25, 0.5, 0.75, 0.95)
) -> PredictabilityReport:
    finals = result.final_downloads
    if finals.shape[0] < 2:
        raise UsageError("predictability needs at least two worlds")
    q = result.config.catalog.qualities
    order = np.argsort(q, kind="stable")
    quantiles = np.quantile(finals[:, order], levels, axis=0).T
    top = top_product(result.config.catalog)
    others = np.delete(finals, top, axis=1)
    if others.shape[1]:
        wins = finals[:, top] > others.max(axis=1)
    else:
        wins = np.ones(finals.shape[0], dtype=bool)
    score = float(_shares(finals).std(axis=0).mean())
    return PredictabilityReport(order, tuple(levels), quantiles, float(wins.mean()), score)

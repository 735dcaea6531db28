"""Ranking policies: quality, popularity, performance and random.

Ties are always broken by ascending product index, and equally visible
positions are filled top-down, so every deterministic policy is a pure
function of its inputs.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError, SizeError, UsageError
from .market import (
    Condition,
    MarketState,
    ProductCatalog,
    Ranking,
    VisibilityProfile,
    _appeals,
    _same_length,
    _vector,
    _visibility,
    effective_appeals,
)

BRUTE_FORCE_MAX_N = 10


class PolicyKind(enum.Enum):
    QUALITY = "quality"
    POPULARITY = "popularity"
    PERFORMANCE = "performance"
    RANDOM = "random"

    @classmethod
    def parse(cls, text) -> "PolicyKind":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown policy {text!r} (expected one of {choices})") from None

    @property
    def code(self) -> int:
        return {
            PolicyKind.QUALITY: _kernels.QUALITY,
            PolicyKind.POPULARITY: _kernels.POPULARITY,
            PolicyKind.PERFORMANCE: _kernels.PERFORMANCE,
            PolicyKind.RANDOM: _kernels.RANDOM,
        }[self]


@dataclass(frozen=True)
class PolicySchedule:
    """Which policy to run, under which condition, recomputed every ``refresh_rate`` trials."""

    kind: PolicyKind
    condition: Condition = Condition.SOCIAL_INFLUENCE
    refresh_rate: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PolicyKind.parse(self.kind))
        object.__setattr__(self, "condition", Condition.parse(self.condition))
        if int(self.refresh_rate) != self.refresh_rate or self.refresh_rate < 1:
            raise UsageError(f"refresh_rate must be a positive integer, got {self.refresh_rate!r}")
        object.__setattr__(self, "refresh_rate", int(self.refresh_rate))

    @property
    def label(self) -> str:
        return f"{self.kind.value}({self.condition.value})"


def position_order(vis) -> np.ndarray:
    """Positions from most to least visible, ties top-down."""
    v = _visibility(vis)
    return np.argsort(-v, kind="stable")


def _rank_by(vis, keys: np.ndarray) -> Ranking:
    v = _visibility(vis)
    _same_length(v, keys)
    sigma = _kernels.assign_by_keys(position_order(v), np.asarray(keys, dtype=float))
    return Ranking(tuple(sigma))


def quality_ranking(catalog: ProductCatalog, vis) -> Ranking:
    """Best product in the most visible position, second best in the next, and so on."""
    return _rank_by(vis, catalog.qualities)


def popularity_ranking(state: MarketState, vis) -> Ranking:
    """Products ordered by purchase count, most purchased in the most visible position."""
    return _rank_by(vis, state.downloads.astype(float))


def performance_ranking(vis, appeals, qualities, *, allow_zero_appeals: bool = False) -> Ranking:
    """Ranking maximizing the expected purchases of the next trial."""
    v = _visibility(vis)
    a = _appeals(appeals, allow_zero_appeals)
    q = _vector(qualities, "qualities")
    _same_length(v, a, q)
    sigma, _, iterations = _kernels.dinkelbach(v, position_order(v), a, q)
    if iterations < 0:
        raise RuntimeError(
            f"parametric search did not reach a fixed point in "
            f"{_kernels.MAX_DINKELBACH_ITERATIONS} iterations"
        )
    return Ranking(tuple(sigma))


def all_rankings(n: int) -> np.ndarray:
    """Every ranking of n products, one per row, in lexicographic order."""
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)


def brute_force_ranking(vis, appeals, qualities, *, allow_zero_appeals: bool = False) -> Ranking:
    """Exhaustive argmax of the expected purchases; the lexicographically first maximizer wins."""
    v = _visibility(vis)
    a = _appeals(appeals, allow_zero_appeals)
    q = _vector(qualities, "qualities")
    _same_length(v, a, q)
    if v.size > BRUTE_FORCE_MAX_N:
        raise SizeError(f"brute force is limited to n <= {BRUTE_FORCE_MAX_N}, got {v.size}")
    perms = all_rankings(v.size)
    w = v[perms] * a
    values = (w @ q) / w.sum(axis=1)
    return Ranking(tuple(perms[int(np.argmax(values))]))


def random_ranking(n: int, rng: np.random.Generator) -> Ranking:
    """Uniformly random ranking: products sorted by i.i.d. uniform keys."""
    if n < 1:
        raise UsageError("n must be positive")
    keys = rng.random(n)
    return Ranking(tuple(np.argsort(keys, kind="stable")))


def policy_state(state: MarketState, cond: Condition) -> MarketState:
    """State visible to a policy; the independent condition hides purchase counts."""
    if Condition.parse(cond) is Condition.INDEPENDENT:
        return MarketState.initial(state.n)
    return state


def compute_ranking(
    kind: PolicyKind,
    catalog: ProductCatalog,
    vis: VisibilityProfile,
    state: MarketState,
    cond: Condition,
    rng: np.random.Generator | None = None,
) -> Ranking:
    kind = PolicyKind.parse(kind)
    if vis.n != catalog.n or state.n != catalog.n:
        raise DimensionError("catalog, visibility profile and state disagree on n")
    seen = policy_state(state, cond)
    if kind is PolicyKind.QUALITY:
        return quality_ranking(catalog, vis)
    if kind is PolicyKind.POPULARITY:
        return popularity_ranking(seen, vis)
    if kind is PolicyKind.PERFORMANCE:
        return performance_ranking(vis, effective_appeals(catalog, seen, cond), catalog.qualities)
    if rng is None:
        raise UsageError("the random policy needs a random generator")
    return random_ranking(catalog.n, rng)


def next_ranking(
    schedule: PolicySchedule,
    catalog: ProductCatalog,
    vis: VisibilityProfile,
    state: MarketState,
    current: Ranking,
    rng: np.random.Generator | None = None,
) -> Ranking:
    """Ranking for the upcoming trial: recomputed every ``refresh_rate`` trials."""
    if state.trials % schedule.refresh_rate != 0:
        return current
    return compute_ranking(schedule.kind, catalog, vis, state, schedule.condition, rng)

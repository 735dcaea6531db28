"""Choice model of a trial-offer market.

A consumer sees all products in a list. Product ``i`` sits at position
``sigma[i]`` with visibility ``v[sigma[i]]`` and is tried with probability
proportional to ``v[sigma[i]] * a[i]``, where ``a[i]`` is its appeal (static
appeal plus the purchase count when the social signal is shown). A tried
product is purchased with probability equal to its quality.

Everything in here is a pure function of immutable inputs. Indices are
0-based; ``Ranking.from_one_based`` / ``Ranking.one_based`` convert to the
1-based notation used in reports and config files.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import DimensionError, DomainError, NoPurchasePossibleError

ArrayLike = Union[Sequence[float], np.ndarray]


def _frozen(values: ArrayLike, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class Condition(enum.Enum):
    SOCIAL_INFLUENCE = "SI"
    INDEPENDENT = "IN"

    @classmethod
    def parse(cls, text: Union[str, "Condition"]) -> "Condition":
        if isinstance(text, cls):
            return text
        key = str(text).strip().upper()
        aliases = {
            "SI": cls.SOCIAL_INFLUENCE,
            "SOCIAL_INFLUENCE": cls.SOCIAL_INFLUENCE,
            "IN": cls.INDEPENDENT,
            "INDEPENDENT": cls.INDEPENDENT,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown condition {text!r} (expected SI or IN)") from None


@dataclass(frozen=True, eq=False)
class ProductCatalog:
    """Per-product quality (purchase probability given a trial) and static appeal."""

    qualities: np.ndarray
    appeals: np.ndarray

    def __post_init__(self) -> None:
        q = _frozen(self.qualities)
        a = _frozen(self.appeals)
        if q.size == 0:
            raise DomainError("a catalog needs at least one product")
        if q.shape != a.shape:
            raise DimensionError(f"{q.size} qualities but {a.size} appeals")
        if not np.all(np.isfinite(q)) or np.any(q <= 0.0) or np.any(q > 1.0):
            raise DomainError("qualities must lie in (0, 1]")
        if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
            raise DomainError("appeals must be strictly positive")
        object.__setattr__(self, "qualities", q)
        object.__setattr__(self, "appeals", a)

    @property
    def n(self) -> int:
        return int(self.qualities.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProductCatalog):
            return NotImplemented
        return np.array_equal(self.qualities, other.qualities) and np.array_equal(
            self.appeals, other.appeals
        )

    def __hash__(self) -> int:
        return hash((self.qualities.tobytes(), self.appeals.tobytes()))


@dataclass(frozen=True, eq=False)
class VisibilityProfile:
    """Visibility of each list position (position 0 is the top of the list)."""

    visibilities: np.ndarray

    def __post_init__(self) -> None:
        v = _frozen(self.visibilities)
        if v.size == 0:
            raise DomainError("visibility profile is empty")
        if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
            raise DomainError("visibilities must be strictly positive")
        object.__setattr__(self, "visibilities", v)

    @property
    def n(self) -> int:
        return int(self.visibilities.size)

    @property
    def monotone(self) -> bool:
        """True iff visibility never increases down the list."""
        return bool(np.all(np.diff(self.visibilities) <= 0.0))

    @property
    def alpha(self) -> float:
        """Ratio of the largest to the smallest visibility."""
        return float(self.visibilities.max() / self.visibilities.min())

    def for_ranking(self, ranking: "Ranking") -> np.ndarray:
        """Visibility seen by each product under ``ranking``."""
        if ranking.n != self.n:
            raise DimensionError(f"ranking has {ranking.n} products, profile {self.n} positions")
        return self.visibilities[ranking.array]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VisibilityProfile):
            return NotImplemented
        return np.array_equal(self.visibilities, other.visibilities)

    def __hash__(self) -> int:
        return hash(self.visibilities.tobytes())


@dataclass(frozen=True)
class Ranking:
    """Assignment of products to positions: ``positions[i]`` is where product i is shown."""

    positions: tuple[int, ...]
    _array: np.ndarray = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        pos = tuple(int(p) for p in self.positions)
        if sorted(pos) != list(range(len(pos))):
            raise DomainError(f"{pos} is not a permutation of 0..{len(pos) - 1}")
        arr = np.array(pos, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "_array", arr)

    @classmethod
    def identity(cls, n: int) -> "Ranking":
        return cls(tuple(range(n)))

    @classmethod
    def from_one_based(cls, positions: Sequence[int]) -> "Ranking":
        return cls(tuple(int(p) - 1 for p in positions))

    @classmethod
    def from_list(cls, products: Sequence[int]) -> "Ranking":
        """Build from a displayed list, ``products[p]`` being the product at position p."""
        pos = [0] * len(products)
        for p, i in enumerate(products):
            pos[int(i)] = p
        return cls(tuple(pos))

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def array(self) -> np.ndarray:
        return self._array

    def one_based(self) -> tuple[int, ...]:
        return tuple(p + 1 for p in self.positions)

    def as_list(self) -> tuple[int, ...]:
        """Position -> product view (the displayed list)."""
        out = [0] * self.n
        for i, p in enumerate(self.positions):
            out[p] = i
        return tuple(out)


@dataclass(frozen=True, eq=False)
class MarketState:
    """Cumulative purchase counts per product and the number of trials so far."""

    downloads: np.ndarray
    trials: int = 0

    def __post_init__(self) -> None:
        d = _frozen(self.downloads, dtype=np.int64)
        if np.any(d < 0):
            raise DomainError("download counts must be non-negative")
        if self.trials < 0 or int(d.sum()) > self.trials:
            raise DomainError(f"{int(d.sum())} downloads cannot happen in {self.trials} trials")
        object.__setattr__(self, "downloads", d)
        object.__setattr__(self, "trials", int(self.trials))

    @classmethod
    def initial(cls, n: int) -> "MarketState":
        return cls(np.zeros(n, dtype=np.int64), 0)

    @property
    def n(self) -> int:
        return int(self.downloads.size)

    def advance(self, product: int, purchased: bool) -> "MarketState":
        """State after one more trial of ``product``."""
        d = self.downloads.copy()
        if purchased:
            d[product] += 1
        return MarketState(d, self.trials + 1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MarketState):
            return NotImplemented
        return self.trials == other.trials and np.array_equal(self.downloads, other.downloads)

    def __hash__(self) -> int:
        return hash((self.downloads.tobytes(), self.trials))


def _vector(values, name: str) -> np.ndarray:
    if isinstance(values, VisibilityProfile):
        return values.visibilities
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    return arr


def _visibility(vis) -> np.ndarray:
    v = _vector(vis, "visibilities")
    if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
        raise DomainError("visibilities must be strictly positive")
    return v


def _appeals(appeals, allow_zero: bool) -> np.ndarray:
    a = _vector(appeals, "appeals")
    bad = np.any(a < 0.0) if allow_zero else np.any(a <= 0.0)
    if bad or not np.all(np.isfinite(a)):
        raise DomainError("appeals must be " + ("non-negative" if allow_zero else "strictly positive"))
    return a


def _same_length(*vectors: np.ndarray) -> None:
    sizes = {v.size for v in vectors}
    if len(sizes) != 1:
        raise DimensionError(f"inconsistent dimensions {[v.size for v in vectors]}")


def effective_appeals(catalog: ProductCatalog, state: MarketState, cond: Condition) -> np.ndarray:
    """Appeals a consumer reacts to: ``A + d`` under social influence, ``A`` otherwise."""
    if state.n != catalog.n:
        raise DimensionError(f"state has {state.n} products, catalog {catalog.n}")
    if Condition.parse(cond) is Condition.INDEPENDENT:
        return catalog.appeals.copy()
    return catalog.appeals + state.downloads


def _weights(ranking: Ranking, vis, appeals, allow_zero: bool) -> tuple[np.ndarray, np.ndarray]:
    v = _visibility(vis)
    a = _appeals(appeals, allow_zero)
    _same_length(v, a)
    if ranking.n != a.size:
        raise DimensionError(f"ranking has {ranking.n} products, appeals {a.size}")
    v_prod = v[ranking.array]
    return v_prod, v_prod * a


def trial_probabilities(
    ranking: Ranking, vis, appeals, *, allow_zero_appeals: bool = False
) -> np.ndarray:
    """Probability that each product is the one tried by the next consumer."""
    _, w = _weights(ranking, vis, appeals, allow_zero_appeals)
    total = w.sum()
    if total <= 0.0:
        raise DomainError("all trial weights are zero")
    return w / total


def purchase_probabilities(
    ranking: Ranking, vis, appeals, qualities, *, allow_zero_appeals: bool = False
) -> np.ndarray:
    """Probability that the next consumer tries *and* buys each product."""
    p = trial_probabilities(ranking, vis, appeals, allow_zero_appeals=allow_zero_appeals)
    q = _vector(qualities, "qualities")
    _same_length(p, q)
    return p * q


def expected_purchases(
    ranking: Ranking, vis, appeals, qualities, *, allow_zero_appeals: bool = False
) -> float:
    """Expected purchases per trial, ``sum_i p_i(sigma) q_i``."""
    _, w = _weights(ranking, vis, appeals, allow_zero_appeals)
    q = _vector(qualities, "qualities")
    _same_length(w, q)
    total = w.sum()
    if total <= 0.0:
        raise DomainError("all trial weights are zero")
    return float(np.dot(w, q) / total)


def next_purchase_distribution(vis, appeals, qualities) -> np.ndarray:
    """Distribution of the identity of the next purchased product.

    ``vis[i]`` is the visibility of product ``i`` (products already placed).
    Trials that end without a purchase leave the state unchanged, so the
    outcome is ``v_i a_i q_i`` normalized.
    """
    v = _visibility(vis)
    a = _appeals(appeals, allow_zero=True)
    q = _vector(qualities, "qualities")
    _same_length(v, a, q)
    w = v * a * q
    total = w.sum()
    if not total > 0.0:
        raise NoPurchasePossibleError("no product can ever be purchased")
    return w / total


def one_step_expected(ranking: Ranking, vis, appeals, qualities) -> float:
    """Expected purchases at the next trial, averaged over the outcome of this one.

    The ranking is held fixed; a purchase of product j raises its appeal by one.
    """
    v_prod, w = _weights(ranking, vis, appeals, allow_zero=False)
    q = _vector(qualities, "qualities")
    _same_length(w, q)
    total = w.sum()
    wq_total = np.dot(w, q)
    lam = wq_total / total
    buy = w * q / total
    after = (wq_total + v_prod * q) / (total + v_prod)
    return float(np.dot(buy, after) + (1.0 - buy.sum()) * lam)

"""Agent-based Monte Carlo simulation of many independent market worlds.

Each world draws its randomness from two Philox streams keyed by
``(master_seed, world_index)``: one for the per-trial uniforms (selection
and purchase) and one for policy randomness. Worlds therefore give the same
trace whatever order or degree of parallelism they are run with.
"""

from __future__ import annotations

import enum
import functools
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np

from . import _kernels
from .errors import DimensionError, UsageError
from .market import (
    Condition,
    MarketState,
    ProductCatalog,
    Ranking,
    VisibilityProfile,
    effective_appeals,
)
from .policies import (
    PolicyKind,
    PolicySchedule,
    compute_ranking,
    next_ranking,
    position_order,
    random_ranking,
)

logger = logging.getLogger(__name__)

TRIAL_STREAM = 0
POLICY_STREAM = 1
MAX_SEED = 2**64


class TraceGranularity(enum.Enum):
    FULL = "full"
    DOWNLOADS = "downloads"
    FINAL = "final"

    @classmethod
    def parse(cls, text) -> "TraceGranularity":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise ValueError(f"unknown trace granularity {text!r}") from None


@dataclass(frozen=True)
class SimulationConfig:
    catalog: ProductCatalog
    visibility: VisibilityProfile
    schedule: PolicySchedule
    steps: int
    worlds: int = 1
    master_seed: int = 0
    trace_granularity: TraceGranularity = TraceGranularity.DOWNLOADS
    initial_shuffle: bool = False
    checkpoint_every: int = 100

    def __post_init__(self) -> None:
        if self.visibility.n != self.catalog.n:
            raise DimensionError(
                f"{self.visibility.n} positions for {self.catalog.n} products"
            )
        for name in ("steps", "worlds", "checkpoint_every"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise UsageError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        seed = self.master_seed
        if isinstance(seed, bool) or int(seed) != seed or not 0 <= seed < MAX_SEED:
            raise UsageError(f"master_seed must be an unsigned 64-bit integer, got {seed!r}")
        object.__setattr__(self, "master_seed", int(seed))
        object.__setattr__(
            self, "trace_granularity", TraceGranularity.parse(self.trace_granularity)
        )

    @property
    def n(self) -> int:
        return self.catalog.n

    def canonical(self) -> dict:
        return {
            "qualities": [float(x) for x in self.catalog.qualities],
            "appeals": [float(x) for x in self.catalog.appeals],
            "visibilities": [float(x) for x in self.visibility.visibilities],
            "policy": self.schedule.kind.value,
            "condition": self.schedule.condition.value,
            "refresh_rate": self.schedule.refresh_rate,
            "steps": self.steps,
            "worlds": self.worlds,
            "master_seed": self.master_seed,
            "trace_granularity": self.trace_granularity.value,
            "initial_shuffle": self.initial_shuffle,
            "checkpoint_every": self.checkpoint_every,
        }

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


class TrialEvent(NamedTuple):
    step: int  # 1-based trial number
    tried: int  # 0-based product index
    purchased: bool


@dataclass(eq=False)
class WorldTrace:
    """Outcome of one world.

    ``download_curve[k]`` is the cumulative number of purchases after trial
    ``curve_steps[k]``; ``checkpoint_downloads[k]`` is the per-product
    count after trial ``checkpoint_steps[k]``.
    """

    world_id: int
    final_downloads: np.ndarray
    curve_steps: np.ndarray
    download_curve: np.ndarray
    checkpoint_steps: np.ndarray
    checkpoint_downloads: np.ndarray
    tried: Optional[np.ndarray] = field(default=None, repr=False)
    purchased: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def share_trajectory(self) -> np.ndarray:
        totals = self.checkpoint_downloads.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            shares = self.checkpoint_downloads / totals
        return np.nan_to_num(shares, nan=0.0)

    def events(self) -> Iterator[TrialEvent]:
        if self.tried is None:
            raise UsageError("events are only kept with the 'full' trace granularity")
        for t, (i, b) in enumerate(zip(self.tried, self.purchased)):
            yield TrialEvent(t + 1, int(i), bool(b))

    def same_as(self, other: "WorldTrace") -> bool:
        return (
            self.world_id == other.world_id
            and np.array_equal(self.final_downloads, other.final_downloads)
            and np.array_equal(self.curve_steps, other.curve_steps)
            and np.array_equal(self.download_curve, other.download_curve)
            and np.array_equal(self.checkpoint_downloads, other.checkpoint_downloads)
        )


@dataclass(eq=False)
class ExperimentResult:
    config: SimulationConfig
    config_digest: str
    traces: list[WorldTrace]
    elapsed_seconds: float = 0.0
    started_at: float = 0.0
    finished_at: float = 0.0

    @property
    def final_downloads(self) -> np.ndarray:
        """Worlds x products matrix of final purchase counts."""
        return np.stack([t.final_downloads for t in self.traces])

    @property
    def curve_steps(self) -> np.ndarray:
        return self.traces[0].curve_steps

    @property
    def download_curves(self) -> np.ndarray:
        return np.stack([t.download_curve for t in self.traces])

    def downloads_at(self, step: int) -> np.ndarray:
        """Worlds x products purchase counts after trial ``step`` (must be a checkpoint)."""
        steps = self.traces[0].checkpoint_steps
        hit = np.flatnonzero(steps == step)
        if hit.size == 0:
            raise UsageError(f"step {step} is not a recorded checkpoint")
        return np.stack([t.checkpoint_downloads[hit[0]] for t in self.traces])


def world_streams(master_seed: int, world_index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (trial, policy) generators for one world."""
    streams = []
    for purpose in (TRIAL_STREAM, POLICY_STREAM):
        seq = np.random.SeedSequence(master_seed, spawn_key=(world_index, purpose))
        streams.append(np.random.Generator(np.random.Philox(seq)))
    return streams[0], streams[1]


def step(
    state: MarketState,
    ranking: Ranking,
    catalog: ProductCatalog,
    vis: VisibilityProfile,
    cond: Condition,
    rng: np.random.Generator,
) -> tuple[TrialEvent, MarketState]:
    """One consumer arrives, tries a product and maybe buys it."""
    u_pick, u_buy = rng.random(2)
    a = effective_appeals(catalog, state, cond)
    cum = np.cumsum(vis.for_ranking(ranking) * a)
    pick = min(int(np.searchsorted(cum, u_pick * cum[-1], side="right")), catalog.n - 1)
    bought = bool(u_buy < catalog.qualities[pick])
    return TrialEvent(state.trials + 1, pick, bought), state.advance(pick, bought)


def _checkpoints(steps: int, every: int) -> np.ndarray:
    marks = np.arange(every, steps + 1, every, dtype=np.int64)
    if marks.size == 0 or marks[-1] != steps:
        marks = np.append(marks, steps)
    return marks


@functools.lru_cache(maxsize=64)
def _static_ranking(config: SimulationConfig) -> Ranking:
    # the same for every world of a config, so computed once
    sched = config.schedule
    if sched.kind is PolicyKind.RANDOM:
        return Ranking.identity(config.n)
    return compute_ranking(
        sched.kind,
        config.catalog,
        config.visibility,
        MarketState.initial(config.n),
        sched.condition,
    )


def _initial(config: SimulationConfig, policy_rng: np.random.Generator) -> tuple[Ranking, int]:
    if config.initial_shuffle:
        return random_ranking(config.n, policy_rng), config.schedule.refresh_rate
    return _static_ranking(config), 0


def run_world(config: SimulationConfig, world_index: int) -> WorldTrace:
    """Simulate world ``world_index`` (1-based) for ``config.steps`` trials."""
    if not 1 <= world_index <= config.worlds:
        raise UsageError(f"world_index must be in 1..{config.worlds}, got {world_index}")
    n, N = config.n, config.steps
    sched = config.schedule
    trial_rng, policy_rng = world_streams(config.master_seed, world_index)
    sigma0, first_refresh = _initial(config, policy_rng)
    if sched.kind is PolicyKind.RANDOM:
        first = -(-first_refresh // sched.refresh_rate) * sched.refresh_rate
        refreshes = len(range(first, N, sched.refresh_rate))
        keys = policy_rng.random((refreshes, n))
    else:
        keys = np.empty((0, n))
    uniforms = trial_rng.random((N, 2))

    granularity = config.trace_granularity
    every = N if granularity is TraceGranularity.FINAL else min(config.checkpoint_every, N)
    marks = _checkpoints(N, every)
    tried = np.empty(N, dtype=np.int64)
    bought = np.empty(N, dtype=np.bool_)
    snapshots = np.zeros((marks.size, n), dtype=np.int64)
    final = _kernels.run_world(
        config.visibility.visibilities,
        position_order(config.visibility),
        config.catalog.appeals,
        config.catalog.qualities,
        sched.condition is Condition.SOCIAL_INFLUENCE,
        sched.kind.code,
        sched.refresh_rate,
        sigma0.array.copy(),
        _static_ranking(config).array.copy(),
        first_refresh,
        keys,
        uniforms,
        every,
        tried,
        bought,
        snapshots,
    )

    if granularity is TraceGranularity.FULL:
        curve_steps = np.arange(1, N + 1, dtype=np.int64)
        curve = np.cumsum(bought, dtype=np.int64)
    else:
        curve_steps = marks
        curve = snapshots.sum(axis=1)
    full = granularity is TraceGranularity.FULL
    return WorldTrace(
        world_id=world_index,
        final_downloads=final,
        curve_steps=curve_steps,
        download_curve=curve,
        checkpoint_steps=marks,
        checkpoint_downloads=snapshots,
        tried=tried if full else None,
        purchased=bought if full else None,
    )


def run_world_reference(config: SimulationConfig, world_index: int) -> list[TrialEvent]:
    """Trial-by-trial simulation of one world in plain Python.

    Consumes the same random streams as :func:`run_world` and is used to
    cross-check the compiled kernel.
    """
    trial_rng, policy_rng = world_streams(config.master_seed, world_index)
    sched = config.schedule
    state = MarketState.initial(config.n)
    ranking, first_refresh = _initial(config, policy_rng)
    events = []
    for t in range(config.steps):
        if t >= first_refresh:
            ranking = next_ranking(
                sched, config.catalog, config.visibility, state, ranking, policy_rng
            )
        event, state = step(
            state, ranking, config.catalog, config.visibility, sched.condition, trial_rng
        )
        events.append(event)
    return events


def run_experiment(config: SimulationConfig, threads: int = 1) -> ExperimentResult:
    """Run every world of ``config``; ``threads=0`` uses one thread per CPU."""
    if threads < 0:
        raise UsageError("threads must be >= 0")
    workers = threads or os.cpu_count() or 1
    started = time.time()
    clock = time.perf_counter()

    def one(index: int) -> WorldTrace:
        trace = run_world(config, index)
        logger.info("world %d/%d: %d downloads", index, config.worlds, int(trace.final_downloads.sum()))
        return trace

    indices = range(1, config.worlds + 1)
    if workers == 1 or config.worlds == 1:
        traces = [one(i) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(one, indices))
    traces.sort(key=lambda tr: tr.world_id)
    return ExperimentResult(
        config=config,
        config_digest=config.digest(),
        traces=traces,
        elapsed_seconds=time.perf_counter() - clock,
        started_at=started,
        finished_at=time.time(),
    )

import itertools
import math

import numpy as np
import pytest

from trialoffer.errors import DimensionError, UsageError
from trialoffer.market import (
    Condition,
    MarketState,
    ProductCatalog,
    Ranking,
    VisibilityProfile,
    expected_purchases,
)
from trialoffer.policies import PolicySchedule
from trialoffer.scenario import SettingKind, VisibilitySpec, musiclab_visibility, setting_catalog
from trialoffer.simulator import (
    SimulationConfig,
    TraceGranularity,
    TrialEvent,
    run_experiment,
    run_world,
    run_world_reference,
    step,
    world_streams,
)


def small_market(n=6, seed=3):
    cat = setting_catalog(SettingKind.GAUSSIAN_INDEPENDENT, n, seed)
    vis = musiclab_visibility(VisibilitySpec(n=n))
    return cat, vis


def config(kind="quality", cond="SI", r=1, steps=500, worlds=3, seed=11, **kw):
    cat, vis = small_market()
    return SimulationConfig(cat, vis, PolicySchedule(kind, cond, r), steps=steps, worlds=worlds, master_seed=seed, **kw)


def test_config_validation():
    cat, vis = small_market()
    sched = PolicySchedule("quality")
    with pytest.raises(UsageError):
        SimulationConfig(cat, vis, sched, steps=0)
    with pytest.raises(UsageError):
        SimulationConfig(cat, vis, sched, steps=10, worlds=0)
    with pytest.raises(UsageError):
        SimulationConfig(cat, vis, sched, steps=10, master_seed=2**64)
    with pytest.raises(DimensionError):
        SimulationConfig(cat, VisibilityProfile([1.0, 0.5]), sched, steps=10)
    with pytest.raises(ValueError):
        SimulationConfig(cat, vis, sched, steps=10, trace_granularity="everything")


def test_digest_tracks_content():
    a, b = config(), config()
    assert a.digest() == b.digest()
    assert a.digest() != config(seed=12).digest()


def test_step_single_certain_product():
    cat = ProductCatalog([1.0], [0.5])
    vis = VisibilityProfile([0.3])
    state = MarketState.initial(1)
    rng = np.random.default_rng(0)
    for t in range(1, 6):
        event, state = step(state, Ranking.identity(1), cat, vis, Condition.SOCIAL_INFLUENCE, rng)
        assert event == TrialEvent(t, 0, True)
    assert list(state.downloads) == [5] and state.trials == 5


def test_step_draws_two_uniforms_per_trial():
    cat, vis = small_market()
    rng = np.random.default_rng(8)
    _, state = step(MarketState.initial(cat.n), Ranking.identity(cat.n), cat, vis, "SI", rng)
    ref = np.random.default_rng(8)
    ref.random(2)
    assert rng.random() == ref.random()


def test_single_step_world():
    trace = run_world(config(steps=1, worlds=1, trace_granularity="full"), 1)
    assert len(list(trace.events())) == 1
    with pytest.raises(UsageError):
        run_world(config(worlds=2), 3)


def test_world_streams_are_distinct_and_reproducible():
    t1, p1 = world_streams(5, 1)
    t2, p2 = world_streams(5, 2)
    draws = [g.random(4) for g in (t1, p1, t2, p2)]
    for x, y in itertools.combinations(draws, 2):
        assert not np.array_equal(x, y)
    again, _ = world_streams(5, 1)
    np.testing.assert_array_equal(again.random(4), draws[0])


SCHEDULES = [
    (kind, cond, r, shuffle)
    for kind in ("quality", "popularity", "performance", "random")
    for cond in ("SI", "IN")
    for r in (1, 3)
    for shuffle in (False, True)
]


@pytest.mark.parametrize("kind,cond,r,shuffle", SCHEDULES)
def test_kernel_matches_reference(kind, cond, r, shuffle):
    cfg = config(kind, cond, r, steps=200, worlds=2, trace_granularity="full", initial_shuffle=shuffle)
    for w in (1, 2):
        fast = list(run_world(cfg, w).events())
        slow = run_world_reference(cfg, w)
        assert fast == slow


@pytest.mark.parametrize("kind", ["quality", "popularity", "performance", "random"])
def test_thread_count_does_not_change_results(kind):
    cfg = config(kind, steps=800, worlds=8)
    serial = run_experiment(cfg, threads=1)
    parallel = run_experiment(cfg, threads=4)
    assert len(parallel.traces) == 8
    assert [t.world_id for t in parallel.traces] == list(range(1, 9))
    for a, b in zip(serial.traces, parallel.traces):
        assert a.same_as(b)


def test_world_order_does_not_matter():
    cfg = config("random", steps=300, worlds=5)
    forward = [run_world(cfg, w) for w in range(1, 6)]
    backward = [run_world(cfg, w) for w in range(5, 0, -1)][::-1]
    assert all(a.same_as(b) for a, b in zip(forward, backward))


@pytest.mark.parametrize("granularity", list(TraceGranularity))
def test_conservation(granularity):
    res = run_experiment(config("popularity", steps=777, worlds=4, trace_granularity=granularity))
    for trace in res.traces:
        assert trace.final_downloads.sum() <= 777
        assert trace.download_curve[-1] == trace.final_downloads.sum()
        assert trace.curve_steps[-1] == 777
        np.testing.assert_array_equal(trace.checkpoint_downloads[-1], trace.final_downloads)
        assert np.all(np.diff(trace.download_curve) >= 0)
        if granularity is TraceGranularity.FULL:
            assert trace.purchased.sum() == trace.final_downloads.sum()
            np.testing.assert_array_equal(
                np.bincount(trace.tried[trace.purchased], minlength=trace.final_downloads.size),
                trace.final_downloads,
            )


def test_granularity_does_not_change_the_outcome():
    finals = [
        run_experiment(config("performance", steps=450, trace_granularity=g)).final_downloads
        for g in TraceGranularity
    ]
    for f in finals[1:]:
        np.testing.assert_array_equal(f, finals[0])


def test_checkpoint_grid():
    res = run_experiment(config(steps=250, worlds=1, checkpoint_every=100))
    np.testing.assert_array_equal(res.curve_steps, [100, 200, 250])
    assert res.downloads_at(200).shape == (1, 6)
    with pytest.raises(UsageError):
        res.downloads_at(150)
    events_trace = run_world(config(steps=250, worlds=1), 1)
    with pytest.raises(UsageError):
        list(events_trace.events())


def test_independent_quality_rate_is_constant(example):
    cat, vis = example
    lam = expected_purchases(Ranking.identity(3), vis, cat.appeals, cat.qualities)
    N = 100_000
    cfg = SimulationConfig(cat, vis, PolicySchedule("quality", "IN"), steps=N, master_seed=2024, checkpoint_every=1000)
    trace = run_experiment(cfg).traces[0]
    rate = trace.final_downloads.sum() / N
    se = math.sqrt(lam * (1 - lam) / N)
    assert abs(rate - lam) <= 3 * se
    assert abs(rate - 0.458) <= 3 * se
    # least-squares slope of a random-walk curve has variance about 6/5 of the plain rate's
    slope = np.polyfit(trace.curve_steps, trace.download_curve, 1)[0]
    assert abs(slope - lam) <= 3 * math.sqrt(1.2) * se
    half = N // 2
    first = trace.download_curve[trace.curve_steps == half][0] / half
    second = (trace.download_curve[-1] - trace.download_curve[trace.curve_steps == half][0]) / half
    assert abs(first - second) <= 3 * math.sqrt(2) * math.sqrt(lam * (1 - lam) / half)


def test_social_quality_rate_does_not_decrease():
    cat = setting_catalog("gaussian_independent", 20, 1)
    vis = musiclab_visibility(VisibilitySpec(n=20))
    N = 4000
    ok = 0
    batches = 10
    for b in range(batches):
        cfg = SimulationConfig(cat, vis, PolicySchedule("quality"), steps=N, worlds=20, master_seed=1000 + b)
        res = run_experiment(cfg)
        curves = res.download_curves.mean(axis=0)
        steps = res.curve_steps
        q1 = curves[steps == N // 4][0] / (N // 4)
        q4 = (curves[-1] - curves[steps == 3 * N // 4][0]) / (N // 4)
        ok += q4 >= q1
    assert ok >= 0.9 * batches


def test_top_product_share_grows():
    cat = ProductCatalog([0.6, 0.3], [1.0, 1.0])
    vis = VisibilityProfile([1.0, 1.0])
    cfg = SimulationConfig(cat, vis, PolicySchedule("quality"), steps=20_000, worlds=50, master_seed=4)
    res = run_experiment(cfg)
    early = res.downloads_at(2000)
    late = res.downloads_at(20_000)
    share = lambda d: d[:, 0] / d.sum(axis=1)
    assert np.median(share(late)) > np.median(share(early))


def test_random_policy_differs_across_worlds():
    res = run_experiment(config("random", steps=300, worlds=2, trace_granularity="full"))
    a, b = res.traces
    assert not np.array_equal(a.tried, b.tried)

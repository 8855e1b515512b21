import math

import numpy as np
import pytest

from parisian_levy import JumpComponent, LevyModel, Scenario
from parisian_levy.simulation.simulator import (
    Mode,
    SimConfig,
    SimulationError,
    StopReason,
    _params,
    estimate,
    estimate_many,
    get_kernel,
    simulate_path,
)
from parisian_levy.simulation import _pykernel

BASE = Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=0.0)

try:
    compiled, _ = get_kernel("compiled")
except ImportError:
    compiled = None
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernel not built")


def _mixed_jumps():
    return LevyModel.with_drift(3.0, jumps=[
        JumpComponent.erlang(0.5, 2, 0.8),
        JumpComponent.uniform(0.4, 0.1, 1.1),
        JumpComponent.deterministic(0.3, 0.6),
    ])


@needs_compiled
@pytest.mark.parametrize("mode", [_pykernel.PARISIAN, _pykernel.BARRIER, _pykernel.KILLED])
@pytest.mark.parametrize("which", ["cl", "jd", "mixed"])
@pytest.mark.parametrize("antithetic", [False, True])
def test_kernels_bit_identical(cl, jd, mode, which, antithetic):
    model = {"cl": cl, "jd": jd, "mixed": _mixed_jumps()}[which]
    cfg = SimConfig(400, seed=11, euler_step=1e-2, antithetic=antithetic)
    upper = 0.0 if mode == _pykernel.KILLED else 2.0
    x = -0.3 if mode == _pykernel.KILLED else 0.4
    P = _params(model, 0.1, 1.0, -1.0, upper if mode != _pykernel.KILLED else math.inf, x, mode, cfg)
    py = _pykernel.run_batch_arrays(P, 0, cfg.n_paths)
    cc = compiled.run_batch_arrays(P, 0, cfg.n_paths)
    for u, v in zip(py, cc):
        np.testing.assert_array_equal(u, v)


def test_seed_determinism(cl):
    cfg = SimConfig(3000, seed=5)
    first = estimate("g", cl, BASE, cfg)
    assert estimate("g", cl, BASE, cfg) == first
    assert estimate("g", cl, BASE, SimConfig(3000, seed=6)) != first


def test_worker_count_does_not_change_results(cl, jd):
    for model, step in ((cl, None), (jd, 1e-2)):
        one = estimate_many(["g", "f"], model, BASE, SimConfig(5000, seed=2, euler_step=step, workers=1))
        four = estimate_many(["g", "f"], model, BASE, SimConfig(5000, seed=2, euler_step=step, workers=4))
        assert one == four


def test_theta_cache_reuses_paths(cl):
    cache = {}
    cfg = SimConfig(2000, seed=3)
    est0 = estimate_many(["g"], cl, BASE, cfg, cache=cache)["g"]
    assert len(cache) == 1
    est1 = estimate_many(["g"], cl, Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=0.0, theta=0.5),
                         cfg, cache=cache)["g"]
    assert len(cache) == 1
    assert est1.mean < est0.mean


@pytest.mark.parametrize("mode", list(Mode))
@pytest.mark.parametrize("which", ["cl", "jd"])
def test_trace_level_is_free_plus_injections_minus_dividends(cl, jd, mode, which):
    model = cl if which == "cl" else jd
    x = -0.2 if mode is Mode.KilledAtObservation else 0.5
    s = Scenario(q=0.05, r=1.0, a=-1.0, b=None if mode is Mode.KilledAtObservation else 1.0, x=x)
    cfg = SimConfig(1, seed=9, euler_step=1e-2)
    kinds = set()
    for index in range(30):
        out = simulate_path(model, s, mode, cfg, index, trace=True)
        lines = out.trace_lines()
        assert lines
        last_t = 0.0
        for line in lines:
            t, kind, level, *detail = line.split()
            fields = dict(d.split("=") for d in detail if "=" in d)
            X, R, L = float(fields["X"]), float(fields["R"]), float(fields["L"])
            assert float(level) == pytest.approx(X + R - L, abs=1e-9), line
            assert float(t) >= last_t - 1e-12
            last_t = float(t)
            kinds.add(kind)
        assert float(lines[-1].split()[0]) == pytest.approx(out.stop_time)
    assert "JUMP" in kinds and "OBSERVE" in kinds


def test_pure_drift_is_deterministic():
    # X_t = x + t: upcrossing b = 2 from x = 0.5 at t = 1.5, never ruined
    model = LevyModel(gamma=1.0)
    s = Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=0.5)
    out = simulate_path(model, s, Mode.ParisianOnly, SimConfig(1), 0)
    assert out.stop_reason is StopReason.UpcrossB
    assert out.stop_time == pytest.approx(1.5, rel=1e-15)
    assert out.n_injections == 0
    est = estimate("g", model, s, SimConfig(100, seed=1))
    assert est.mean == pytest.approx(math.exp(-0.05 * 1.5), rel=1e-14)
    assert est.std_error < 1e-15


def test_start_below_a_is_immediate_ruin(cl, jd):
    s = Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=-1.5)
    for model in (cl, jd):
        for mode in (Mode.ParisianOnly, Mode.ParisianPlusBarrier):
            out = simulate_path(model, s, mode, SimConfig(1, euler_step=1e-2), 0)
            assert out.stop_reason is StopReason.AbsoluteRuinA
            assert out.stop_time == 0.0


def test_start_above_barrier_pays_overshoot(cl):
    s = Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=2.5)
    out = simulate_path(cl, s, Mode.ParisianPlusBarrier, SimConfig(1), 0)
    assert out.discounted_dividends >= 0.5


def test_injection_brings_level_to_zero(cl):
    s = Scenario(q=0.05, r=1.0, a=-5.0, b=2.0, x=0.0)
    cfg = SimConfig(1, seed=4)
    for index in range(50):
        out = simulate_path(cl, s, Mode.ParisianOnly, cfg, index, trace=True)
        for line in out.trace_lines():
            if " INJECT " in line:
                assert float(line.split()[2]) == 0.0
        if out.n_injections:
            return
    pytest.fail("no injection in 50 paths")


def test_invalid_requests(cl, jd):
    with pytest.raises(SimulationError, match="horizon"):
        estimate("g", cl, Scenario(q=0.0, r=1.0, a=-1.0, b=2.0), SimConfig(10))
    # an explicit horizon makes q = 0 admissible
    estimate("g", cl, Scenario(q=0.0, r=1.0, a=-1.0, b=2.0), SimConfig(10, horizon=50.0))
    with pytest.raises(SimulationError, match="euler_step"):
        estimate("g", jd, BASE, SimConfig(10))
    with pytest.raises(SimulationError, match="unknown target"):
        estimate("nope", cl, BASE, SimConfig(10))
    with pytest.raises(SimulationError, match="x <= 0"):
        estimate("u1", cl, Scenario(q=0.05, r=1.0, a=-1.0, x=0.5), SimConfig(10))
    with pytest.raises(SimulationError, match="upper level"):
        estimate("g", cl, Scenario(q=0.05, r=1.0, a=-1.0), SimConfig(10))
    for bad in (dict(n_paths=0), dict(n_paths=3, antithetic=True), dict(n_paths=5, euler_step=0.0),
                dict(n_paths=5, horizon=-1.0), dict(n_paths=5, workers=0)):
        with pytest.raises(SimulationError):
            SimConfig(**bad)


def test_antithetic_pairs_share_the_draws(cl):
    cfg = SimConfig(2, seed=1, antithetic=True)
    first = simulate_path(cl, BASE, Mode.ParisianOnly, cfg, 0)
    again = simulate_path(cl, BASE, Mode.ParisianOnly, cfg, 0)
    mirror = simulate_path(cl, BASE, Mode.ParisianOnly, cfg, 1)
    assert first == again
    assert mirror != first


def test_horizon_cap_reported(cl):
    s = Scenario(q=0.05, r=1.0, a=-50.0, b=40.0, x=0.0)
    out = simulate_path(cl, s, Mode.ParisianOnly, SimConfig(1, horizon=0.5), 0)
    assert out.stop_reason is StopReason.HorizonCap
    assert out.stop_time == 0.5
    assert "capped" in estimate("g", cl, s, SimConfig(20, horizon=0.5)).bias_note

"""Monte Carlo oracle for the identities.

Each target is a path functional of one of these simulated runs:

=================  =================================  =========================
run                process                            targets
=================  =================================  =========================
``P(a, b)``        ``X_r`` stopped at exit of [a, b]  g, h, f
``P(a, inf)``      ``X_r`` stopped at ruin            ruin_laplace, injections_i
``P(-inf, b)``     ``X_r`` stopped above ``b``        upcross_laplace,
                                                      upcross_no_bailout,
                                                      injections_ii
``P(-inf, inf)``   ``X_r`` up to the horizon          injections_iii
``B(a, b)``        ``Y_r^b`` stopped at ruin          h_hat, j_hat, f_hat
``B(-inf, b)``     ``Y_r^b`` up to the horizon        j_hat_limit, f_hat_limit
``K(a)``           ``X`` killed at the first          u1, u2, u3
                   observation, above 0 or below a
=================  =================================  =========================

Paths are generated from a counter-based generator keyed by
``(seed, path index)`` and cut into fixed chunks, so the estimate does not
depend on the number of worker threads.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..identities import Scenario
from ..levy_model import JumpLaw, LevyModel
from . import _pykernel
from ._pykernel import BARRIER, KILLED, PARISIAN, Params

__all__ = [
    "KERNEL_NAME",
    "MCEstimate",
    "Mode",
    "PathOutcome",
    "SimConfig",
    "SimulationError",
    "StopReason",
    "TARGETS",
    "estimate",
    "estimate_many",
    "get_kernel",
    "simulate_path",
]

KERNEL_ENV = "PARISIAN_LEVY_KERNEL"
THREADS_ENV = "PARISIAN_LEVY_THREADS"
CHUNK = 2048
HORIZON_RATE = 20.0  # default horizon is HORIZON_RATE / q


def get_kernel(name="auto"):
    """Return ``(module, name)`` for ``'python'``, ``'compiled'`` or ``'auto'``."""
    if name == "python":
        return _pykernel, "python"
    try:
        from . import _ckernel
    except ImportError:
        if name == "compiled":
            raise
        return _pykernel, "python"
    return _ckernel, "compiled"


_KERNEL, KERNEL_NAME = get_kernel(os.environ.get(KERNEL_ENV, "auto").strip().lower() or "auto")


class SimulationError(ValueError):
    """Invalid simulation request."""


class Mode(str, enum.Enum):
    ParisianOnly = "parisian"
    ParisianPlusBarrier = "barrier"
    KilledAtObservation = "killed"


class StopReason(str, enum.Enum):
    UpcrossB = "upcross_b"
    AbsoluteRuinA = "ruin_a"
    HorizonCap = "horizon"
    ObservationClock = "clock"


_REASONS = (StopReason.UpcrossB, StopReason.AbsoluteRuinA, StopReason.HorizonCap,
            StopReason.ObservationClock)
_MODE_CODE = {Mode.ParisianOnly: PARISIAN, Mode.ParisianPlusBarrier: BARRIER,
              Mode.KilledAtObservation: KILLED}
_LAW_CODE = {JumpLaw.EXPONENTIAL: 0, JumpLaw.ERLANG: 1, JumpLaw.DETERMINISTIC: 2,
             JumpLaw.UNIFORM: 3}


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``horizon=None`` means ``20 / q`` (truncation weight ``exp(-20)``) and is
    rejected when ``q = 0``.  ``euler_step`` is the finest dyadic cell of the
    Brownian construction and is required exactly when ``sigma > 0``.
    """

    n_paths: int
    seed: int = 0
    euler_step: float | None = None
    horizon: float | None = None
    antithetic: bool = False
    workers: int | None = None

    def __post_init__(self):
        if not (isinstance(self.n_paths, (int, np.integer)) and self.n_paths > 0):
            raise SimulationError(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if self.antithetic and self.n_paths % 2:
            raise SimulationError("antithetic sampling needs an even number of paths")
        if self.euler_step is not None and not self.euler_step > 0:
            raise SimulationError(f"euler_step must be positive, got {self.euler_step}")
        if self.horizon is not None and not self.horizon > 0:
            raise SimulationError(f"horizon must be positive, got {self.horizon}")
        if self.workers is not None and self.workers < 1:
            raise SimulationError(f"workers must be >= 1, got {self.workers}")


@dataclass
class PathOutcome:
    stop_reason: StopReason
    stop_time: float
    discounted_injections: float
    discounted_dividends: float
    injection_total_at_stop: float
    n_injections: int
    level: float
    log: list | None = None

    def trace_lines(self):
        """The event trace as ``time kind level detail`` lines."""
        return [f"{t!r} {kind} {level!r} {detail}".rstrip() for t, kind, level, detail in self.log or ()]


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n: int
    bias_note: str = ""


def _horizon(cfg: SimConfig, q: float) -> float:
    if cfg.horizon is not None:
        return float(cfg.horizon)
    if q > 0:
        return HORIZON_RATE / q
    raise SimulationError("q = 0 needs an explicit horizon")


def _step(model: LevyModel, cfg: SimConfig) -> float:
    if model.sigma > 0:
        if cfg.euler_step is None:
            raise SimulationError("a Gaussian component needs euler_step")
        return float(cfg.euler_step)
    return math.inf


def _params(model, q, r, a, b, x, mode, cfg) -> Params:
    if mode == BARRIER and not math.isfinite(b):
        if cfg.horizon is None and not q > 0:
            raise SimulationError("reflection at b without a lower level needs q > 0 or a horizon")
    return Params(
        sigma=float(model.sigma),
        drift=float(model.linear_drift),
        rates=[float(j.rate) for j in model.jumps],
        laws=[_LAW_CODE[j.law] for j in model.jumps],
        p1=[float(j.params[0]) for j in model.jumps],
        p2=[float(j.params[1]) if len(j.params) > 1 else 0.0 for j in model.jumps],
        q=float(q), r=float(r), a=float(a), b=float(b), x=float(x), mode=mode,
        horizon=_horizon(cfg, q), step=_step(model, cfg), seed=int(cfg.seed),
        antithetic=bool(cfg.antithetic),
    )


def simulate_path(model: LevyModel, scenario: Scenario, mode: Mode, cfg: SimConfig,
                  path_index: int, trace: bool = False) -> PathOutcome:
    """Simulate a single path with the reference kernel.

    ``scenario.a`` / ``scenario.b`` of ``None`` mean no lower / upper level.
    Results agree bit for bit with the compiled kernel used by
    :func:`estimate`.
    """
    mode = Mode(mode)
    a = -math.inf if scenario.a is None else scenario.a
    b = math.inf if scenario.b is None else scenario.b
    if mode == Mode.ParisianPlusBarrier and scenario.b is None:
        raise SimulationError("barrier mode needs a finite b")
    P = _params(model, scenario.q, scenario.r, a, b, scenario.x, _MODE_CODE[mode], cfg)
    log = [] if trace else None
    reason, t, dinj, ddiv, inj, ninj, level = _pykernel.run_path(P, int(path_index), log)
    return PathOutcome(_REASONS[reason], t, dinj, ddiv, inj, ninj, level, log)


def _run(P: Params, n: int, workers: int, kernel):
    bounds = [(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]
    if workers <= 1 or len(bounds) == 1:
        parts = [kernel.run_batch_arrays(P, s, e) for s, e in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda be: kernel.run_batch_arrays(P, *be), bounds))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(7))


# target -> (run signature, functional)
def _laplace(code):
    def fn(o, s):
        hit = o["reason"] == code
        return np.where(hit, np.exp(-s.q * o["time"] - s.theta * o["inj"]), 0.0)
    return fn


def _discount(code):
    def fn(o, s):
        return np.where(o["reason"] == code, np.exp(-s.q * o["time"]), 0.0)
    return fn


def _no_bailout(o, s):
    hit = (o["reason"] == 0) & (o["ninj"] == 0)
    return np.where(hit, np.exp(-s.q * o["time"]), 0.0)


def _clock(o, s):
    hit = o["reason"] == 3
    return np.where(hit, np.exp(-s.q * o["time"] + s.theta * np.where(hit, o["level"], 0.0)), 0.0)


TARGETS = {
    "g": ("P", True, True, _laplace(0)),
    "h": ("P", True, True, _laplace(1)),
    "f": ("P", True, True, lambda o, s: o["dinj"]),
    "ruin_laplace": ("P", True, False, _laplace(1)),
    "injections_i": ("P", True, False, lambda o, s: o["dinj"]),
    "upcross_laplace": ("P", False, True, _laplace(0)),
    "upcross_no_bailout": ("P", False, True, _no_bailout),
    "injections_ii": ("P", False, True, lambda o, s: o["dinj"]),
    "injections_iii": ("P", False, False, lambda o, s: o["dinj"]),
    "h_hat": ("B", True, True, _laplace(1)),
    "j_hat": ("B", True, True, lambda o, s: o["ddiv"]),
    "f_hat": ("B", True, True, lambda o, s: o["dinj"]),
    "j_hat_limit": ("B", False, True, lambda o, s: o["ddiv"]),
    "f_hat_limit": ("B", False, True, lambda o, s: o["dinj"]),
    "u1": ("K", True, False, _clock),
    "u2": ("K", True, False, _discount(0)),
    "u3": ("K", True, False, _discount(1)),
}

_MODES = {"P": PARISIAN, "B": BARRIER, "K": KILLED}
_FIELDS = ("reason", "time", "dinj", "ddiv", "inj", "ninj", "level")


def _signature(target, s: Scenario):
    try:
        kind, use_a, use_b, _ = TARGETS[target]
    except KeyError:
        raise SimulationError(f"unknown target {target!r}; choose from {', '.join(TARGETS)}") from None
    if use_a and s.a is None:
        raise SimulationError(f"target {target} needs the lower level a")
    if use_b and s.b is None:
        raise SimulationError(f"target {target} needs the upper level b")
    if target.startswith("u") and s.x > 0:
        raise SimulationError(f"target {target} is defined for x <= 0")
    a = s.a if use_a else -math.inf
    b = s.b if use_b else math.inf
    return kind, a, b


def _bias_note(model, P: Params, s: Scenario, reasons):
    notes = []
    if model.sigma > 0:
        notes.append(f"Brownian part refined to cells <= {P.step:g} with bridge crossing tests")
    else:
        notes.append("exact event-driven simulation")
    capped = int(np.count_nonzero(reasons == 2))
    notes.append(f"horizon {P.horizon:g}: {capped} paths capped, truncation weight exp(-qT)={math.exp(-s.q * P.horizon):.2e}")
    return "; ".join(notes)


def _summarise(values, antithetic):
    n = values.size
    mean = math.fsum(values.tolist()) / n
    if antithetic:
        pairs = 0.5 * (values[0::2] + values[1::2])
        m = pairs.size
        dev = pairs - mean
        var = math.fsum((dev * dev).tolist()) / (m - 1) if m > 1 else math.nan
        return mean, math.sqrt(var / m)
    dev = values - mean
    var = math.fsum((dev * dev).tolist()) / (n - 1) if n > 1 else math.nan
    return mean, math.sqrt(var / n)


def default_workers():
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SimulationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def estimate_many(targets, model: LevyModel, scenario: Scenario, cfg: SimConfig,
                  kernel: str | None = None, cache: dict | None = None) -> dict:
    """Estimate several targets, sharing one simulation per process type.

    Paths do not depend on ``theta``; passing the same ``cache`` dict to
    calls that differ only in ``theta`` reuses the simulated outcomes.

    Returns a dict ``target -> MCEstimate``.
    """
    targets = list(targets)
    if not targets:
        raise SimulationError("no targets requested")
    groups: dict = {}
    for t in targets:
        groups.setdefault(_signature(t, scenario), []).append(t)
    mod = _KERNEL if kernel is None else get_kernel(kernel)[0]
    workers = cfg.workers or default_workers()
    out = {}
    for (kind, a, b), names in groups.items():
        P = _params(model, scenario.q, scenario.r, a, b, scenario.x, _MODES[kind], cfg)
        ckey = (model, scenario.q, scenario.r, a, b, scenario.x, kind, cfg.n_paths, cfg.seed,
                P.step, P.horizon, cfg.antithetic, mod.__name__)
        if cache is not None and ckey in cache:
            cols = cache[ckey]
        else:
            cols = dict(zip(_FIELDS, _run(P, cfg.n_paths, workers, mod)))
            if cache is not None:
                cache[ckey] = cols
        note = _bias_note(model, P, scenario, cols["reason"])
        for name in names:
            vals = np.asarray(TARGETS[name][3](cols, scenario), dtype=float)
            mean, se = _summarise(vals, cfg.antithetic)
            out[name] = MCEstimate(mean, se, cfg.n_paths, note)
    return {t: out[t] for t in targets}


def estimate(target: str, model: LevyModel, scenario: Scenario, cfg: SimConfig,
             kernel: str | None = None) -> MCEstimate:
    """Monte Carlo estimate of one target; see :data:`TARGETS`."""
    return estimate_many([target], model, scenario, cfg, kernel)[target]

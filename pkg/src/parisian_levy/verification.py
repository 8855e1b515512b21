"""Analytic-versus-oracle checks and the shipped default suite.

A check compares two numbers.  For ``MCAgreement`` they are the analytic
identity and its Monte Carlo estimate and the verdict uses standard errors;
every other kind supplies a function returning ``(analytic, reference)`` and
is judged on an absolute or relative tolerance.  ``Bound`` checks pass when
the analytic value does not exceed the reference by more than ``abs``.
"""
from __future__ import annotations

import csv
import enum
import io
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .identities import (
    LAPLACE_IDENTITIES,
    Scenario,
    building_blocks_U0,
    evaluate,
    injections_until_upcross,
    kernel_H,
    kernel_H_deriv,
    kernel_I,
    kernel_I_deriv,
    kernels,
    reflected_dividends,
    reflected_dividends_limit,
    ruin_infinite,
    two_sided_exit,
    upcross_infinite,
)
from .levy_model import LevyModel, reference_models
from .scale import Side, scale_context, w_scale_deriv, z_two_param, z_two_param_deriv
from .simulation import SimConfig, estimate_many

__all__ = [
    "CheckKind",
    "CheckResult",
    "CheckSpec",
    "RuntimeClass",
    "SuiteReport",
    "Tolerance",
    "CSV_COLUMNS",
    "default_suite",
    "run_suite",
]

CSV_COLUMNS = ("check", "name", "analytic", "estimate", "std_error", "abs_err", "verdict")
DEFAULT_UBV_STEP = 1e-3


class CheckKind(str, enum.Enum):
    MC_AGREEMENT = "MCAgreement"
    LIMIT_AGREEMENT = "LimitAgreement"
    ALGEBRAIC_IDENTITY = "AlgebraicIdentity"
    FINITE_DIFFERENCE = "FiniteDifference"
    BOUND = "Bound"


class RuntimeClass(str, enum.Enum):
    FAST = "Fast"
    SLOW = "Slow"


@dataclass(frozen=True)
class Tolerance:
    abs: float | None = None
    rel: float | None = None
    sigmas: float | None = None


@dataclass(frozen=True)
class CheckSpec:
    """One comparison.

    ``target`` names the identity for ``MCAgreement``; other kinds use
    ``compare(model, scenario) -> (analytic, reference)``.  ``covers`` lists
    the identity operations exercised, for coverage bookkeeping.
    """

    name: str
    kind: CheckKind
    scenario: Scenario
    tolerance: Tolerance
    expected_runtime_class: RuntimeClass = RuntimeClass.FAST
    model: str | LevyModel = "cramer_lundberg"
    target: str | None = None
    compare: Callable | None = field(default=None, compare=False)
    covers: tuple = ()

    def __post_init__(self):
        tol = self.tolerance
        given = [v is not None for v in (tol.abs, tol.rel, tol.sigmas)]
        if sum(given) != 1:
            raise ValueError(f"{self.name}: exactly one of abs/rel/sigmas must be set")
        if (self.kind == CheckKind.MC_AGREEMENT) != (tol.sigmas is not None):
            raise ValueError(f"{self.name}: sigmas governs MCAgreement and only it")
        if self.kind == CheckKind.MC_AGREEMENT and not self.target:
            raise ValueError(f"{self.name}: MCAgreement needs a target")
        if self.kind != CheckKind.MC_AGREEMENT and self.compare is None:
            raise ValueError(f"{self.name}: {self.kind.value} needs a compare function")


@dataclass(frozen=True)
class CheckResult:
    check: str
    name: str
    analytic: float
    estimate: float
    std_error: float
    abs_err: float
    passed: bool
    message: str = ""

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"


@dataclass
class SuiteReport:
    results: list

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    @property
    def failures(self):
        return [r for r in self.results if not r.passed]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.results:
            w.writerow([r.check, r.name, _fmt(r.analytic), _fmt(r.estimate), _fmt(r.std_error),
                        _fmt(r.abs_err), r.verdict])
        return buf.getvalue()

    def to_pretty(self) -> str:
        width = max([len(r.name) for r in self.results] + [4])
        lines = [f"{'name':<{width}}  {'kind':<17} {'analytic':>14} {'estimate':>14} "
                 f"{'std_error':>10} {'abs_err':>10}  verdict"]
        for r in self.results:
            lines.append(f"{r.name:<{width}}  {r.check:<17} {r.analytic:>14.8g} {r.estimate:>14.8g} "
                         f"{r.std_error:>10.3g} {r.abs_err:>10.3g}  {r.verdict}"
                         + (f"  ({r.message})" if r.message else ""))
        n_fail = len(self.failures)
        lines.append(f"{len(self.results) - n_fail} passed, {n_fail} failed")
        return "\n".join(lines)


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _model(spec: CheckSpec) -> LevyModel:
    if isinstance(spec.model, LevyModel):
        return spec.model
    return reference_models()[spec.model]


class _SimCache:
    """Simulated outcomes shared between checks.

    Simulations are serialised (each one already fans out over threads);
    analytic checks run freely.
    """

    def __init__(self):
        self.store = {}
        self.lock = threading.Lock()


def _run_one(spec: CheckSpec, cfg: SimConfig, cache: _SimCache) -> CheckResult:
    kind = spec.kind.value
    try:
        model = _model(spec)
        if spec.kind == CheckKind.MC_AGREEMENT:
            analytic = evaluate(spec.target, model, spec.scenario).value
            run_cfg = cfg
            if model.sigma > 0 and cfg.euler_step is None:
                run_cfg = replace(cfg, euler_step=DEFAULT_UBV_STEP)
            with cache.lock:
                est = estimate_many([spec.target], model, spec.scenario, run_cfg,
                                    cache=cache.store)[spec.target]
            err = abs(analytic - est.mean)
            ok = err <= spec.tolerance.sigmas * est.std_error
            return CheckResult(kind, spec.name, analytic, est.mean, est.std_error, err, bool(ok))
        analytic, reference = spec.compare(model, spec.scenario)
        analytic, reference = float(analytic), float(reference)
        tol = spec.tolerance
        if spec.kind == CheckKind.BOUND:
            err = max(analytic - reference, 0.0)
            ok = err <= tol.abs
        else:
            err = abs(analytic - reference)
            bound = tol.abs if tol.abs is not None else tol.rel * max(abs(analytic), abs(reference))
            ok = err <= bound
        return CheckResult(kind, spec.name, analytic, reference, math.nan, err,
                           bool(ok and math.isfinite(err)))
    except Exception as exc:  # a crash is a failed check, not a failed suite
        return CheckResult(kind, spec.name, math.nan, math.nan, math.nan, math.nan, False,
                           f"{type(exc).__name__}: {exc}")


def run_suite(specs, cfg: SimConfig, workers: int = 1) -> SuiteReport:
    """Evaluate every check and return the report sorted by name.

    Checks run on ``workers`` threads; the report does not depend on it.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("run_suite needs at least one check")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError("check names must be unique")
    cache = _SimCache()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _run_one(s, cfg, cache), specs))
    else:
        results = [_run_one(s, cfg, cache) for s in specs]
    return SuiteReport(sorted(results, key=lambda r: r.name))


# ---------------------------------------------------------------------------
# comparison functions of the default suite
# ---------------------------------------------------------------------------

def _fd(fn, y, h=1e-4):
    return (fn(y + h) - fn(y - h)) / (2 * h)


def _H_closed_vs_integral(model, s):
    # integral representation of H(., 0) against its theta = 0 closed form
    K = kernels(model, s)
    integral = K._H_generic([s.x], 0.0)
    return float(integral[0]), float(K.H0_closed([s.x])[0])


def _h_forms(model, s):
    K = kernels(model, s)
    first, second = K._h_small_generic([s.x])
    return float(first[0]), float(second[0])


def _classical_g(model, s):
    ctx = scale_context(model, s.q)
    return two_sided_exit(model, s).g.value, float(ctx.W(s.x) / ctx.W(s.b))


def _classical_h(model, s):
    ctx = scale_context(model, s.q)
    ratio = float(ctx.W(s.x) / ctx.W(s.b))
    return two_sided_exit(model, s).h.value, float(ctx.Z(s.x) - ctx.Z(s.b) * ratio)


def _ruin_vs_far_exit(model, s):
    far = replace(s, b=40.0)
    return ruin_infinite(model, replace(s, b=None)).value, two_sided_exit(model, far).h.value


def _upcross_certain(model, s):
    return upcross_infinite(model, s).laplace_with_R.value, 1.0


def _upcross_no_bailout_limit(model, s):
    # theta -> infinity of laplace_with_R; the remainder decays like 1/theta
    # (about 0.13 / theta for the base scenario), so 1e6 leaves ~1e-7
    big = upcross_infinite(model, replace(s, theta=1e6)).laplace_with_R.value
    return upcross_infinite(model, s).laplace_no_bailout.value, big


def _k_minus_htilde(model, s):
    value = injections_until_upcross(model, s)
    gap = value.kernel_trace["k - h~_gap"]
    return gap, 0.0


def _H_deriv_fd(model, s):
    return kernel_H_deriv(model, s, s.x), _fd(lambda y: kernel_H(model, s, y), s.x)


def _I_deriv_fd(model, s):
    return kernel_I_deriv(model, s, s.x), _fd(lambda y: kernel_I(model, s, y), s.x)


def _h_deriv_fd(model, s):
    K = kernels(model, s)
    return float(K.h_small_deriv([s.x])[0]), _fd(lambda y: float(K.h_small([y])[0][0]), s.x)


def _classical_reflected_ruin(model, s):
    ctx = scale_context(model, s.q)
    wd = w_scale_deriv(ctx, s.b, Side.RIGHT)
    ref = float(ctx.Z(s.x)) - s.q * float(ctx.W(s.b)) / wd * float(ctx.W(s.x))
    return evaluate("h_hat", model, s).value, ref


def _classical_dividends(model, s):
    ctx = scale_context(model, s.q)
    return reflected_dividends(model, s).value, float(ctx.W(s.x)) / w_scale_deriv(ctx, s.b, Side.RIGHT)


def _dividends_deep_a(model, s):
    return reflected_dividends(model, s).value, reflected_dividends_limit(model, s).value


def _dividend_limit_derivative(model, s):
    ctx = scale_context(model, s.q)
    z = lambda y: float(_z_qr(ctx, s.r, y))
    return float(z_two_param_deriv(ctx, s.q, s.r, s.x)), _fd(z, s.x)


def _z_qr(ctx, r, y):
    return z_two_param(ctx, ctx.q, r, np.array([y]), 0.0)[0]


def _U_sum(model, s):
    fam = building_blocks_U0(model, s)
    return fam.U1 + fam.U2, -kernel_H(model, s, s.x)


def _probability_bounds(model, s):
    """Largest excursion of any Laplace-type identity outside ``[0, 1]`` on a grid."""
    worst = 0.0
    for x in (-1.5, -0.6, 0.0, 0.9, 2.0):
        for theta in (0.0, 0.7):
            sc = replace(s, x=x, theta=theta)
            for name in LAPLACE_IDENTITIES:
                if name.startswith("u") and x > 0:
                    continue
                v = evaluate(name, model, sc).value
                worst = max(worst, -v, v - 1.0)
    return worst, 0.0


def default_suite(ubv: bool = True) -> list:
    """The shipped checks on the reference models.

    Monte Carlo checks use the compound Poisson model (exact simulation) and,
    with ``ubv``, a few targets of the jump-diffusion model.
    """
    base = Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=0.0, theta=0.3)
    mc = Tolerance(sigmas=3.0)
    specs = []

    def add(name, kind, scenario, tol, model="cramer_lundberg", covers=(), **kw):
        specs.append(CheckSpec(name, kind, scenario, tol, model=model, covers=covers, **kw))

    MC = CheckKind.MC_AGREEMENT
    mc_targets = {
        "g": ("two_sided_exit", "kernel_H", "kernel_I"),
        "h": ("two_sided_exit",),
        "f": ("injections_killed",),
        "ruin_laplace": ("ruin_infinite",),
        "upcross_laplace": ("upcross_infinite",),
        "upcross_no_bailout": ("upcross_infinite",),
        "injections_i": ("injections_limits",),
        "injections_ii": ("injections_limits",),
        "injections_iii": ("injections_limits",),
        "h_hat": ("reflected_ruin_laplace", "kernel_H_deriv", "kernel_I_deriv"),
        "j_hat": ("reflected_dividends",),
        "f_hat": ("reflected_injections",),
    }
    for target, covers in mc_targets.items():
        sc = base
        if target in ("ruin_laplace", "injections_i"):
            sc = replace(base, b=None)
        elif target in ("upcross_laplace", "upcross_no_bailout", "injections_ii", "injections_iii"):
            sc = replace(base, a=None)
        add(f"mc_cl_{target}", MC, sc, mc, target=target, covers=covers,
            expected_runtime_class=RuntimeClass.SLOW)
    for i in (1, 2, 3):
        add(f"mc_cl_u{i}", MC, replace(base, x=-0.4), mc, target=f"u{i}",
            covers=("building_blocks_u",), expected_runtime_class=RuntimeClass.SLOW)
    if ubv:
        for target, x in (("g", 0.0), ("f", 0.0), ("j_hat", 1.0)):
            add(f"mc_jd_{target}", MC, replace(base, x=x, theta=0.0), mc, model="jump_diffusion",
                target=target, covers=mc_targets[target], expected_runtime_class=RuntimeClass.SLOW)

    AI, LA, FD, BD = (CheckKind.ALGEBRAIC_IDENTITY, CheckKind.LIMIT_AGREEMENT,
                      CheckKind.FINITE_DIFFERENCE, CheckKind.BOUND)
    bm = replace(base, theta=0.0, x=0.5)
    add("alg_H_closed_form", AI, bm, Tolerance(rel=1e-9), model="brownian", compare=_H_closed_vs_integral,
        covers=("kernel_H",))
    add("alg_h_two_forms", AI, bm, Tolerance(rel=1e-9), model="brownian", compare=_h_forms,
        covers=("injections_killed",))
    add("alg_U1_plus_U2", AI, replace(base, x=0.6), Tolerance(abs=1e-9), model="brownian", compare=_U_sum,
        covers=("building_blocks_U0",))
    add("alg_k_minus_htilde", AI, replace(base, a=None, x=0.8, theta=0.0), Tolerance(abs=1e-10),
        compare=_k_minus_htilde, covers=("injections_limits",))
    near0 = replace(base, a=-1e-6, theta=0.0)
    for model in ("brownian", "cramer_lundberg"):
        add(f"lim_{model}_g_classical", LA, replace(near0, x=1.0), Tolerance(abs=1e-4), model=model,
            compare=_classical_g, covers=("two_sided_exit",))
        add(f"lim_{model}_h_classical", LA, replace(near0, x=1.0), Tolerance(abs=1e-4), model=model,
            compare=_classical_h, covers=("two_sided_exit",))
        add(f"lim_{model}_j_hat_classical", LA, replace(near0, x=1.0), Tolerance(abs=1e-4), model=model,
            compare=_classical_dividends, covers=("reflected_dividends",))
        add(f"lim_{model}_h_hat_classical", LA, replace(near0, x=1.0), Tolerance(abs=1e-4), model=model,
            compare=_classical_reflected_ruin, covers=("reflected_ruin_laplace",))
    add("lim_ruin_vs_far_exit", LA, replace(base, theta=0.0), Tolerance(abs=1e-4), model="brownian",
        compare=_ruin_vs_far_exit, covers=("ruin_infinite",))
    add("lim_upcross_q0_certain", LA, replace(base, q=0.0, theta=0.0, a=None), Tolerance(abs=1e-9),
        compare=_upcross_certain, covers=("upcross_infinite",))
    add("lim_upcross_no_bailout", LA, replace(base, a=None), Tolerance(abs=1e-4),
        compare=_upcross_no_bailout_limit, covers=("upcross_infinite",))
    add("lim_j_hat_deep_a", LA, replace(base, a=-50.0, x=1.0, theta=0.0), Tolerance(abs=1e-6),
        model="brownian", compare=_dividends_deep_a, covers=("reflected_dividends",))
    add("fd_H_deriv", FD, replace(bm, x=0.7), Tolerance(abs=1e-6), model="brownian", compare=_H_deriv_fd,
        covers=("kernel_H_deriv",))
    add("fd_I_deriv", FD, replace(bm, x=0.7), Tolerance(abs=1e-6), model="brownian", compare=_I_deriv_fd,
        covers=("kernel_I_deriv",))
    add("fd_h_deriv", FD, replace(bm, x=0.7), Tolerance(abs=1e-6), compare=_h_deriv_fd,
        covers=("reflected_injections",))
    add("fd_dividend_limit_deriv", FD, replace(bm, x=1.3, a=None), Tolerance(abs=1e-6),
        compare=_dividend_limit_derivative, covers=("reflected_dividends",))
    for model in ("brownian", "cramer_lundberg", "jump_diffusion"):
        add(f"bound_{model}_probabilities", BD, base, Tolerance(abs=1e-9), model=model,
            compare=_probability_bounds, covers=("two_sided_exit", "ruin_infinite", "upcross_infinite",
                                                 "reflected_ruin_laplace", "building_blocks_u"))
    return specs

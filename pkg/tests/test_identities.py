import math

import numpy as np
import pytest

from parisian_levy import IdentityError, JumpComponent, LevyModel, Scenario, evaluate, scale_context
from parisian_levy.identities import (
    IDENTITIES,
    Kernels,
    building_blocks_u,
    kernel_H,
    kernel_H_deriv,
    kernel_I,
    kernel_I_deriv,
)

MODEL_NAMES = ("brownian", "cramer_lundberg", "jump_diffusion")


@pytest.fixture(scope="module")
def deterministic_jumps():
    # not rational: every kernel goes through the integral representations
    return LevyModel.with_drift(2.0, sigma=0.5, jumps=[JumpComponent.deterministic(1.0, 0.5)])


@pytest.mark.parametrize("name", MODEL_NAMES)
@pytest.mark.parametrize("q, r, a", [(0.05, 1.0, -1.0), (0.4, 0.3, -0.25), (0.0, 2.0, -1.5)])
def test_closed_kernels_match_integral_forms(models, name, q, r, a):
    closed = Kernels(models[name], q, r, a)
    generic = Kernels(models[name], q, r, a)
    generic.closed = None
    assert closed.closed is not None
    y = np.array([a - 0.2, a, 0.5 * a, 0.0, 0.6, 1.7])
    for mine, other in zip(closed.shifted(y), generic.shifted(y)):
        np.testing.assert_allclose(mine, other, rtol=1e-8, atol=1e-11)
    for theta in (0.0, 0.8):
        np.testing.assert_allclose(closed.H(y, theta), generic.H(y, theta), rtol=1e-8, atol=1e-11)
    np.testing.assert_allclose(closed.I(y), generic.I(y), rtol=1e-8, atol=1e-11)
    np.testing.assert_allclose(closed.h_small(y)[0], generic.h_small(y)[0], rtol=1e-8, atol=1e-11)
    yp = np.array([0.3, 1.2])
    np.testing.assert_allclose(closed.wa_deriv(yp), generic.wa_deriv(yp), rtol=1e-7)
    np.testing.assert_allclose(closed.H_deriv(yp, 0.5), generic.H_deriv(yp, 0.5), rtol=1e-7)
    np.testing.assert_allclose(closed.I_deriv(yp), generic.I_deriv(yp), rtol=1e-7, atol=1e-11)


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_no_observations_gives_classical_exit(models, name):
    # with r -> 0 the injections never happen: exit of [a, b] by the bare process
    model = models[name]
    q, a, b = 0.1, -1.0, 2.0
    ctx = scale_context(model, q)
    for x in (-0.5, 0.0, 1.2):
        s = Scenario(q=q, r=1e-8, a=a, b=b, x=x)
        ratio = float(ctx.W(x - a) / ctx.W(b - a))
        assert evaluate("g", model, s).value == pytest.approx(ratio, rel=1e-6)
        h = float(ctx.Z(x - a)) - float(ctx.Z(b - a)) * ratio
        assert evaluate("h", model, s).value == pytest.approx(h, rel=1e-6)
        assert abs(evaluate("f", model, s).value) < 1e-6


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_exit_is_certain_without_discounting(models, name):
    model = models[name]
    for x, r in ((0.0, 1.0), (-0.7, 0.3), (1.9, 4.0)):
        s = Scenario(q=0.0, r=r, a=-1.0, b=2.0, x=x)
        assert evaluate("g", model, s).value + evaluate("h", model, s).value == pytest.approx(1.0, abs=1e-9)


def test_integral_forms_for_non_rational_jumps(deterministic_jumps):
    # no partial fractions: the kernels come from quadrature over inverted W
    s = Scenario(q=0.0, r=1.0, a=-1.0, b=2.0, x=0.0)
    g, h = evaluate("g", deterministic_jumps, s).value, evaluate("h", deterministic_jumps, s).value
    assert 0 < g < 1
    assert g + h == pytest.approx(1.0, abs=1e-7)


def test_boundary_values(cl, jd):
    for model in (cl, jd):
        at_b = Scenario(q=0.2, r=1.0, a=-1.0, b=2.0, x=2.0, theta=0.4)
        assert evaluate("g", model, at_b).value == pytest.approx(1.0, abs=1e-12)
        assert evaluate("h", model, at_b).value == pytest.approx(0.0, abs=1e-12)
        assert evaluate("f", model, at_b).value == pytest.approx(0.0, abs=1e-12)
        below = Scenario(q=0.2, r=1.0, a=-1.0, b=2.0, x=-1.3, theta=0.4)
        # already below a: absolute ruin at time zero, no injections
        assert evaluate("g", model, below).value == 0.0
        assert evaluate("h", model, below).value == pytest.approx(1.0, abs=1e-12)
        assert evaluate("h_hat", model, below).value == pytest.approx(1.0, abs=1e-12)
        assert evaluate("f", model, below).value == pytest.approx(0.0, abs=1e-12)
        fam = building_blocks_u(model, below)
        assert (fam.u1, fam.u2, fam.u3) == (0.0, 0.0, 1.0)


def test_dividends_above_barrier(cl, jd):
    # starting above b pays the excess at once
    for model in (cl, jd):
        s = Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=2.0)
        base = evaluate("j_hat", model, s).value
        above = evaluate("j_hat", model, Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=3.0)).value
        assert above == pytest.approx(base + 1.0, rel=1e-12)
        f_b = evaluate("f_hat", model, s).value
        assert evaluate("f_hat", model, Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=3.0)).value == \
            pytest.approx(f_b, rel=1e-12)


def test_theta_discounts_injections(cl):
    vals = [evaluate("g", cl, Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=0.0, theta=t)).value
            for t in (0.0, 0.5, 2.0)]
    assert vals[0] > vals[1] > vals[2] > 0
    # theta does not matter when no injection can happen before exit from above b
    s = Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=2.0)
    assert evaluate("upcross_laplace", cl, Scenario(q=0.05, r=1.0, b=2.0, x=2.0, theta=3.0)).value == \
        pytest.approx(1.0)
    assert evaluate("g", cl, s).value == pytest.approx(1.0)


def test_upcross_certain_without_discounting(models):
    # the reference models do not drift to -infinity, and a missing a means no ruin
    for model in models.values():
        s = Scenario(q=0.0, r=1.0, b=2.0, x=0.3)
        assert evaluate("upcross_laplace", model, s).value == pytest.approx(1.0, abs=1e-9)


def test_double_pole_identities(brownian):
    # q = 0 with a zero-mean process: Brownian exit from [a, b] is linear in x
    a, b = -1.0, 2.0
    s = Scenario(q=0.0, r=1e-9, a=a, b=b, x=0.5)
    assert evaluate("g", brownian, s).value == pytest.approx((0.5 - a) / (b - a), rel=1e-6)
    for x in (-0.5, 0.0, 1.0):
        g = evaluate("g", brownian, Scenario(q=0.0, r=1.0, a=a, b=b, x=x)).value
        assert 0 < g < 1


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_kernel_derivatives_by_differences(models, name):
    model = models[name]
    s = Scenario(q=0.1, r=0.7, a=-0.8, b=2.0, theta=0.3)
    h = 1e-5
    for y in (0.4, 1.5):
        fd = (kernel_H(model, s, y + h) - kernel_H(model, s, y - h)) / (2 * h)
        assert kernel_H_deriv(model, s, y) == pytest.approx(fd, rel=1e-6)
        fd = (kernel_I(model, s, y + h) - kernel_I(model, s, y - h)) / (2 * h)
        assert kernel_I_deriv(model, s, y) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_u_family_at_zero_matches_kernels(cl):
    s = Scenario(q=0.1, r=0.7, a=-0.8, x=-0.3, theta=0.2)
    fam = building_blocks_u(cl, s)
    ctxp = scale_context(cl, 0.8)
    # u2 is the two-sided exit transform of the process killed at rate r
    assert fam.u2 == pytest.approx(float(ctxp.W(s.x - s.a) / ctxp.W(-s.a)), rel=1e-10)
    assert fam.u1 >= 0 and fam.u2 >= 0 and fam.u3 >= 0
    assert fam.trace.get("cross_check", "ok") in ("ok", "skipped: ill-conditioned")


@pytest.mark.parametrize("name, scenario, fragment", [
    ("g", Scenario(q=0.1, r=1.0, a=-1.0), "upper level"),
    ("g", Scenario(q=0.1, r=1.0, b=1.0), "lower level"),
    ("g", Scenario(q=0.1, r=1.0, a=-1.0, b=1.0, x=1.5), "x <= b"),
    ("u1", Scenario(q=0.1, r=1.0, a=-1.0, x=0.5), "x <= 0"),
    ("nope", Scenario(q=0.1, r=1.0), "unknown identity"),
])
def test_preconditions(cl, name, scenario, fragment):
    with pytest.raises(IdentityError, match=fragment):
        evaluate(name, cl, scenario)


@pytest.mark.parametrize("kwargs", [
    dict(q=-0.1, r=1.0), dict(q=0.1, r=0.0), dict(q=0.1, r=1.0, theta=-1.0),
    dict(q=0.1, r=1.0, a=0.0), dict(q=0.1, r=1.0, b=-1.0), dict(q=0.1, r=1.0, x=math.inf),
])
def test_scenario_validation(kwargs):
    with pytest.raises(IdentityError):
        Scenario(**kwargs)


def test_infinite_mean_needed_for_limits(drifting_down):
    # drifting to -infinity at q = 0: the expected total injections are infinite
    s = Scenario(q=0.0, r=1.0, x=0.0)
    with pytest.raises(IdentityError):
        evaluate("injections_iii", drifting_down, s)


def test_every_identity_evaluates(cl):
    s = Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=-0.2, theta=0.3)
    for name in IDENTITIES:
        v = evaluate(name, cl, s)
        assert math.isfinite(v.value), name

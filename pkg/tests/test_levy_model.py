import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from parisian_levy import JumpComponent, JumpLaw, LevyModel, load_model
from parisian_levy.levy_model import (
    ModelConfigError,
    PathKind,
    VariationClass,
    model_from_config,
    phi_inverse,
    variation_class,
)


def test_reference_exponents(brownian, cl, jd):
    th = np.array([0.0, 0.3, 1.0, 2.5])
    np.testing.assert_allclose(brownian.kappa(th), th**2, rtol=1e-15)
    np.testing.assert_allclose(cl.kappa(th), 1.5 * th - th / (1 + th), rtol=1e-14)
    # Levy-Khintchine drift 0.5 plus the compensated small jumps E[J; J < 1] = 1 - 2/e
    lin = 0.5 + 1.0 - 2.0 / math.e
    np.testing.assert_allclose(jd.kappa(th), th**2 / 2 + lin * th + 1 / (1 + th) - 1, rtol=1e-14)
    assert cl.kappa_prime_zero() == pytest.approx(0.5)
    assert jd.kappa_prime_zero() == pytest.approx(lin - 1.0)


@pytest.mark.parametrize("comp, dist", [
    (JumpComponent.exponential(1.0, 0.7), stats.expon(scale=0.7)),
    (JumpComponent.erlang(1.0, 3, 1.2), stats.gamma(3, scale=0.4)),
    (JumpComponent.uniform(1.0, 0.2, 1.7), stats.uniform(0.2, 1.5)),
])
def test_transform_against_quadrature(comp, dist):
    lo, hi = dist.support()
    for theta in (1e-6, 0.4, 3.0):
        lt, _ = integrate.quad(lambda j: np.exp(-theta * j) * dist.pdf(j), lo, hi, epsabs=1e-13)
        assert float(comp.transform(theta)) == pytest.approx(lt, rel=1e-9)
        d, _ = integrate.quad(lambda j: -j * np.exp(-theta * j) * dist.pdf(j), lo, hi, epsabs=1e-13)
        assert float(comp.transform_derivative(theta)) == pytest.approx(d, rel=1e-8)
    assert comp.mean() == pytest.approx(dist.mean())
    small, _ = integrate.quad(lambda j: j * dist.pdf(j), lo, min(hi, 1.0), epsabs=1e-13)
    assert comp.small_jump_mean() == pytest.approx(small, rel=1e-9)


def test_deterministic_jump():
    comp = JumpComponent.deterministic(2.0, 0.5)
    assert float(comp.transform(1.3)) == pytest.approx(math.exp(-0.65))
    assert comp.small_jump_mean() == 0.5
    assert JumpComponent.deterministic(1.0, 2.0).small_jump_mean() == 0.0


def test_kappa_prime_matches_difference_quotient(models):
    for model in models.values():
        for th in (0.1, 1.0, 4.0):
            h = 1e-6
            fd = (model.kappa(th + h) - model.kappa(th - h)) / (2 * h)
            assert float(model.kappa_prime(th)) == pytest.approx(float(fd), rel=1e-7)


def test_kinds(brownian, cl, jd):
    assert brownian.kind is PathKind.BROWNIAN_DRIFT
    assert cl.kind is PathKind.COMPOUND_POISSON_DRIFT
    assert jd.kind is PathKind.JUMP_DIFFUSION
    assert variation_class(cl) is VariationClass.BOUNDED
    assert variation_class(jd) is VariationClass.UNBOUNDED
    assert cl.effective_drift == pytest.approx(1.5)
    with pytest.raises(ValueError):
        jd.effective_drift


def test_phi_at_zero(cl, drifting_down, brownian):
    assert phi_inverse(cl, 0.0) == 0.0
    assert phi_inverse(brownian, 0.0) == 0.0
    # c = 0.5, lambda = 1, mean 1: kappa(t) = 0.5 t - t / (1 + t) vanishes at t = 1
    assert phi_inverse(drifting_down, 0.0) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    sigma=st.floats(0.0, 2.0),
    drift=st.floats(0.05, 3.0),
    rate=st.floats(0.01, 3.0),
    mean=st.floats(0.05, 3.0),
    q=st.floats(0.0, 10.0),
)
def test_phi_solves_kappa(sigma, drift, rate, mean, q):
    model = LevyModel.with_drift(drift, sigma=sigma, jumps=[JumpComponent.exponential(rate, mean)])
    phi = phi_inverse(model, q)
    assert phi >= 0
    if phi > 0:
        assert float(model.kappa(phi)) == pytest.approx(q, abs=1e-10 * max(1.0, q))
        # largest root: kappa is increasing there
        assert float(model.kappa_prime(phi)) > 0
    assert phi_inverse(model, q + 0.5) > phi


@pytest.mark.parametrize("bad", [
    lambda: JumpComponent.exponential(0.0, 1.0),
    lambda: JumpComponent.exponential(1.0, -1.0),
    lambda: JumpComponent.erlang(1.0, 2.5, 1.0),
    lambda: JumpComponent.uniform(1.0, 2.0, 1.0),
    lambda: JumpComponent(1.0, JumpLaw.UNIFORM, (1.0,)),
    lambda: LevyModel(sigma=-1.0),
    lambda: LevyModel(gamma=math.nan),
    # bounded variation with nonpositive drift: -X would be a subordinator
    lambda: LevyModel.with_drift(0.0, jumps=[JumpComponent.exponential(1.0, 1.0)]),
    lambda: LevyModel(jumps=("not a jump",)),
])
def test_invalid_models_rejected(bad):
    with pytest.raises(ModelConfigError):
        bad()


def test_config_round_trip(models, tmp_path):
    for model in models.values():
        again = model_from_config(json.loads(json.dumps(model.to_config())))
        assert again == model
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"c": 1.5, "jumps": [{"rate": 1, "law": "exponential",
                                                      "params": {"mean": 1}}]}))
    assert load_model(str(path)) == models["cramer_lundberg"]
    assert load_model('{"sigma": 1.4142135623730951, "gamma": 0}') == models["brownian"]


@pytest.mark.parametrize("text, fragment", [
    ('{"gamma": 1, "c": 1}', "exactly one"),
    ('{"gamma": 1, "colour": 2}', "unknown field"),
    ('{"gamma": 1, "jumps": [{"rate": 1, "law": "pareto", "params": [1]}]}', "unknown law"),
    ('{"gamma": 1, "jumps": [{"rate": 1, "law": "erlang", "params": {"shape": 2}}]}', "mean"),
    ('{"gamma": "1"}', "expected a number"),
    ('{"gamma": 1,', "<string>:1"),
])
def test_config_errors_name_the_field(text, fragment):
    with pytest.raises(ModelConfigError, match=fragment):
        load_model(text)


def test_phi_accurate_where_kappa_is_flat(brownian):
    # kappa'(Phi_q) = 2 sqrt(q) is tiny: a residual test alone would stop early
    for q in (1e-12, 1e-9, 1e-4):
        assert phi_inverse(brownian, q) == pytest.approx(math.sqrt(q), rel=1e-14)

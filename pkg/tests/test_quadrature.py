import math

import numpy as np
import pytest

from parisian_levy.quadrature import QuadratureError, integrate, integrate_unit


def test_polynomials_and_vector_integrands():
    assert integrate(lambda t: t**5, 0.0, 2.0) == pytest.approx(64 / 6, rel=1e-15)
    assert integrate(lambda t: t**2, 1.0, 0.0) == pytest.approx(-1 / 3, rel=1e-15)
    assert integrate(lambda t: t, 3.0, 3.0) == 0.0
    both = integrate(lambda t: np.stack([np.exp(t), np.cos(t)]), 0.0, 1.0)
    np.testing.assert_allclose(both, [math.e - 1, math.sin(1.0)], rtol=1e-14)


def test_breakpoints_resolve_kinks():
    val, err = integrate(lambda t: np.abs(t - 0.3), 0.0, 1.0, breakpoints=(0.3,), return_error=True)
    assert val == pytest.approx(0.045 + 0.245, rel=1e-15)
    assert err < 1e-14


def test_unit_batch():
    upper = np.array([0.0, 0.5, 2.0, -1.0])
    np.testing.assert_allclose(integrate_unit(np.exp, upper), [0.0, math.exp(0.5) - 1, math.exp(2) - 1, 0.0],
                               rtol=1e-14)


def test_noisy_integrand_stops_at_its_noise_level():
    # values carrying a relative error of ~1e-9 cannot be integrated to 1e-13;
    # telling the routine about the noise lets it stop instead of failing
    rng = np.random.default_rng(0)
    noisy = lambda t: np.exp(t) * (1 + 1e-9 * rng.standard_normal(t.shape))  # noqa: E731
    with pytest.raises(QuadratureError):
        integrate(noisy, 0.0, 1.0, max_panels=50)
    assert integrate(noisy, 0.0, 1.0, noise=1e-8) == pytest.approx(math.e - 1, rel=1e-8)


def test_divergent_integral_raises():
    with pytest.raises(QuadratureError) as info:
        integrate(lambda t: 1.0 / t, 0.0, 1.0)
    assert info.value.interval[0] == 0.0

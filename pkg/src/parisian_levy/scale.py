"""Scale functions and the kernels built from them.

``ScaleContext(model, q)`` evaluates ``W_q`` and everything derived from it:
``Z_q``, ``Wbar_q``, ``Zbar_q``, the exponentially tilted ``Z_q(x, theta)``
and partial Laplace transforms of ``W_q``.  Two backends are available:

* ``PartialFraction`` -- when ``1 / (kappa(theta) - q)`` is rational
  (Brownian motion with drift, exponential or Erlang jumps) its poles are
  found numerically and ``W_q`` is an exponential sum; every integral of it
  then has a closed form.
* ``NumericalInversion`` -- the transform is inverted on a Talbot contour,
  or by an Euler-summed Fourier series when the jump law is not rational
  (:mod:`parisian_levy.inversion`), and integrals of ``W_q`` use adaptive
  quadrature.  Values of ``W_q`` are memoised per context, keyed by the
  evaluation point rounded to 13 significant digits.

All functions vanish (``W``, ``Wbar``) or are trivial (``Z = 1``,
``Zbar(x) = x``) on the negative half-line.
"""
from __future__ import annotations

import enum
import threading
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P

from .inversion import euler_invert, talbot_invert
from .levy_model import LevyModel, phi_inverse
from .quadrature import DEFAULT_NOISE, integrate, integrate_unit

__all__ = [
    "Backend",
    "Side",
    "ScaleContext",
    "ShiftedKernelValue",
    "ShiftedKernelError",
    "scale_context",
    "w_scale",
    "w_scale_deriv",
    "z_family",
    "z_theta",
    "z_theta_integral_form",
    "z_two_param",
    "z_two_param_deriv",
    "shifted_kernels",
    "shifted_kernel_deriv",
    "resolvent_density",
]

#: branch to the explicit limit of Z_{alpha,beta}(x, theta) inside this band
POLE_BAND = 1e-8
#: largest tolerated discrepancy between the two shifted-kernel representations
GAP_TOL = 1e-8


class Backend(str, enum.Enum):
    PARTIAL_FRACTION = "PartialFraction"
    NUMERICAL_INVERSION = "NumericalInversion"


class Side(str, enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"


class ShiftedKernelError(ArithmeticError):
    """The two integral representations of a shifted kernel disagree."""


# ---------------------------------------------------------------------------
# entire helper functions, stable near zero, complex-safe
# ---------------------------------------------------------------------------

def _phi1(z):
    """``(e^z - 1) / z``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.5
    zs = np.where(small, 0.0, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.expm1(zs) / zs
    series = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(1, 22):
        series = series + term
        term = term * z / (k + 1)
    return np.where(small, series, direct)


def _phi2(z):
    """``(e^z - 1 - z) / z^2``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.5
    zs = np.where(small, 1.0, z)
    direct = (np.expm1(zs) - zs) / zs**2
    series = np.zeros_like(z)
    term = np.full_like(z, 0.5)
    for k in range(2, 24):
        series = series + term
        term = term * z / (k + 1)
    return np.where(small, series, direct)


def _psi1(z):
    """``int_0^1 s e^{z s} ds = (e^z (z - 1) + 1) / z^2``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.5
    zs = np.where(small, 1.0, z)
    direct = (np.exp(zs) * (zs - 1.0) + 1.0) / zs**2
    # sum_k z^k / (k! (k + 2))
    series = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(0, 22):
        series = series + term / (k + 2)
        term = term * z / (k + 1)
    return np.where(small, series, direct)


def _psi2(z):
    """``int_0^1 s^2 e^{z s} ds = (e^z (z^2 - 2 z + 2) - 2) / z^3``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1.0
    zs = np.where(small, 1.0, z)
    direct = (np.exp(zs) * (zs**2 - 2.0 * zs + 2.0) - 2.0) / zs**3
    series = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(0, 26):
        series = series + term / (k + 3)
        term = term * z / (k + 1)
    return np.where(small, series, direct)


# ---------------------------------------------------------------------------
# partial fractions
# ---------------------------------------------------------------------------

def _rational_form(model: LevyModel, q: float):
    """Numerator/denominator of ``1/(kappa - q) = Q/P`` (increasing order)."""
    groups: dict[float, int] = {}
    for comp in model.jumps:
        k, beta = comp.erlang_form
        groups[beta] = max(groups.get(beta, 0), k)
    Q = np.array([1.0])
    for beta, k in groups.items():
        Q = P.polymul(Q, P.polypow([beta, 1.0], k))
    base = np.array([-q - model.jump_rate, model.linear_drift, 0.5 * model.sigma**2])
    num = P.polymul(base, Q)
    for comp in model.jumps:
        k, beta = comp.erlang_form
        rest = np.array([1.0])
        for b2, k2 in groups.items():
            power = k2 - k if b2 == beta else k2
            rest = P.polymul(rest, P.polypow([b2, 1.0], power))
        num = P.polyadd(num, comp.rate * beta**k * rest)
    num = P.polytrim(num, 0.0)
    return num, Q


class _ExpSum:
    """``linear x + Re sum_j A_j exp(rho_j x)`` restricted to ``x >= 0``.

    The linear term carries the double pole at 0 that appears when ``q = 0``
    and ``kappa'(0+) = 0``; it is zero otherwise.
    """

    def __init__(self, coef, rates, linear=0.0):
        self.coef = np.asarray(coef, dtype=complex)
        self.rates = np.asarray(rates, dtype=complex)
        self.linear = float(linear)

    def _eval(self, x, fn, lin=None):
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, 0.0)
        out = fn(xs[..., None]).real.sum(axis=-1)
        if self.linear and lin is not None:
            out = out + self.linear * lin(xs)
        return out

    def value(self, x):
        return self._eval(x, lambda s: self.coef * np.exp(self.rates * s), lambda s: s)

    def deriv(self, x):
        return self._eval(x, lambda s: self.coef * self.rates * np.exp(self.rates * s),
                          np.ones_like)

    def integral(self, x):
        return self._eval(x, lambda s: self.coef * s * _phi1(self.rates * s), lambda s: s**2 / 2)

    def double_integral(self, x):
        return self._eval(x, lambda s: self.coef * s**2 * _phi2(self.rates * s),
                          lambda s: s**3 / 6)

    def tilted(self, x, theta):
        """``int_0^x e^{-theta z} W(z) dz``."""
        return self._eval(x, lambda s: self.coef * s * _phi1((self.rates - theta) * s),
                          lambda s: s**2 * _psi1(-theta * s).real)

    def tilted_moment(self, x, theta):
        """``int_0^x z e^{-theta z} W(z) dz``."""
        return self._eval(x, lambda s: self.coef * s**2 * _psi1((self.rates - theta) * s),
                          lambda s: s**3 * _psi2(-theta * s).real)


def _distinct(roots, tol=1e-7):
    scale = max(1.0, float(np.max(np.abs(roots))))
    diffs = np.abs(roots[:, None] - roots[None, :]) + np.eye(len(roots)) * 1e300
    return bool(diffs.min() >= tol * scale)


def _refine(roots, num):
    dnum = P.polyder(num)
    for _ in range(3):
        roots = roots - P.polyval(roots, num) / P.polyval(roots, dnum)
    return roots


def _partial_fractions(model: LevyModel, q: float, phi: float):
    num, den = _rational_form(model, q)
    if q == 0 and model.kappa_prime_zero() == 0:
        return _double_zero_fractions(num, den)
    roots = P.polyroots(num).astype(complex)
    if not _distinct(roots):
        return None
    roots = _refine(roots, num)
    # pin the real dominant root to the Newton-refined Phi_q
    j = int(np.argmin(np.abs(roots - phi)))
    roots[j] = phi
    if not (np.all(np.isfinite(roots)) and _distinct(roots)):
        return None
    coef = P.polyval(roots, den) / P.polyval(roots, P.polyder(num))
    return _ExpSum(coef, roots)


def _double_zero_fractions(num, den):
    # kappa(s) = s^2 n(s) / Q(s) with n(0) != 0: 1/kappa = c1/s^2 + c0/s + sum_i c_i/(s - rho_i)
    n = np.asarray(num[2:], dtype=float)
    c1 = den[0] / n[0]
    c0 = (P.polyval(0.0, P.polyder(den)) * n[0] - den[0] * P.polyval(0.0, P.polyder(n))) / n[0] ** 2
    coef, rates = [c0], [0.0]
    if len(n) > 1:
        roots = P.polyroots(n).astype(complex)
        if not _distinct(np.append(roots, 0.0)):
            return None
        roots = _refine(roots, n)
        if not (np.all(np.isfinite(roots)) and _distinct(np.append(roots, 0.0))):
            return None
        coef.extend(P.polyval(roots, den) / (roots**2 * P.polyval(roots, P.polyder(n))))
        rates.extend(roots)
    return _ExpSum(np.array(coef, dtype=complex), np.array(rates, dtype=complex), linear=c1)


# ---------------------------------------------------------------------------
# the context
# ---------------------------------------------------------------------------

class ScaleContext:
    """Scale functions of ``model`` at discount rate ``q``.

    Parameters
    ----------
    model : LevyModel
    q : float
        Nonnegative killing rate.
    backend : Backend, optional
        Forces a backend; by default partial fractions are used whenever the
        transform is rational and its poles are simple.
    """

    def __init__(self, model: LevyModel, q: float, backend: Backend | str | None = None):
        if not q >= 0:
            raise ValueError(f"q must be nonnegative, got {q}")
        self.model = model
        self.q = float(q)
        self.phi = phi_inverse(model, self.q)
        self.bounded_variation = model.sigma == 0
        self.w_zero = 1.0 / model.linear_drift if self.bounded_variation else 0.0
        self._lock = threading.Lock()
        self._cache: dict[float, float] = {}
        self._dcache: dict[float, float] = {}
        self.inversion_error = 0.0
        self._expsum = None
        wanted = Backend(backend) if backend is not None else None
        if wanted is not Backend.NUMERICAL_INVERSION and model.is_rational:
            self._expsum = _partial_fractions(model, self.q, self.phi)
            if self._expsum is None:
                warnings.warn(
                    f"repeated poles of 1/(kappa - {self.q}); using numerical inversion",
                    RuntimeWarning,
                    stacklevel=2,
                )
        elif wanted is Backend.PARTIAL_FRACTION:
            raise ValueError("partial fractions need exponential/Erlang jumps only")
        self.backend = (
            Backend.PARTIAL_FRACTION if self._expsum is not None else Backend.NUMERICAL_INVERSION
        )

    def __repr__(self):
        return f"ScaleContext(q={self.q}, phi={self.phi:.6g}, backend={self.backend.value})"

    @property
    def noise(self) -> float:
        """Relative accuracy of the ``W_q`` values, the floor for quadratures over them."""
        if self._expsum is not None:
            # rounding in sum_i c_i e^{rho_i x} relative to the sum
            return DEFAULT_NOISE * max(1.0, float(np.abs(self._expsum.coef).sum()))
        # Euler inversion smears the derivative kinks at multiples of the jump sizes
        return 1e-11 if self.model.is_rational else 1e-8

    @property
    def kappa_prime_phi(self) -> float:
        return float(self.model.kappa_prime(self.phi))

    # -- W_q -----------------------------------------------------------------

    def _invert(self, x, deriv=False):
        """``W_q`` (or ``W_q'``) at positive points by contour inversion, memoised."""
        keys = [float(f"{v:.13g}") for v in x]
        cache = self._dcache if deriv else self._cache
        with self._lock:
            missing = sorted({k for k in keys if k not in cache})
        if missing:
            model, q, w0 = self.model, self.q, self.w_zero
            if deriv:
                # transform of W_q' is s / (kappa(s) - q) - W_q(0)
                fn = lambda s: s / (model.kappa(s) - q) - w0  # noqa: E731
            else:
                fn = lambda s: 1.0 / (model.kappa(s) - q)  # noqa: E731
            # Talbot's contour needs a transform bounded as Re s -> -inf, which
            # exp(-s J) factors from non-exponential jump laws are not
            invert = talbot_invert if model.is_rational else euler_invert
            res = invert(fn, np.array(missing), shift=self.phi)
            with self._lock:
                for k, v, e in zip(missing, res.value, res.error):
                    cache[k] = float(v)
                    self.inversion_error = max(self.inversion_error, float(e) / max(1.0, abs(v)))
        with self._lock:
            return np.array([cache[k] for k in keys])

    def W(self, x):
        x = np.asarray(x, dtype=float)
        if self._expsum is not None:
            out = self._expsum.value(x)
            return np.where(x < 0, 0.0, np.where(x == 0, self.w_zero, out))
        flat = x.ravel()
        out = np.zeros_like(flat)
        pos = flat > 0
        if pos.any():
            out[pos] = self._invert(flat[pos])
        out[flat == 0] = self.w_zero
        return out.reshape(x.shape)

    def dW(self, x, side: Side | str = Side.RIGHT):
        """One-sided derivative of ``W_q`` at ``x >= 0``."""
        side = Side(side)
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValueError("W_q' is only evaluated at x >= 0")
        if side is Side.LEFT and np.any(x == 0):
            raise ValueError("the left derivative of W_q at 0 is not defined")
        if self._expsum is not None:
            return self._expsum.deriv(x)
        return self._inverted_derivative(x)

    def _inverted_derivative(self, x):
        # W_q' is continuous on (0, inf) except at multiples of a deterministic
        # jump size, where the inversion returns the mean of the two sides
        flat = np.atleast_1d(x).ravel()
        out = np.empty_like(flat)
        pos = flat > 0
        if pos.any():
            out[pos] = self._invert(flat[pos], deriv=True)
        out[~pos] = self.dW_zero()
        return out.reshape(np.shape(x))

    def dW_zero(self) -> float:
        """``W_q'(0+)`` from the small-time asymptotics."""
        m = self.model
        if m.sigma > 0:
            return 2.0 / m.sigma**2
        c = m.linear_drift
        return (self.q + m.jump_rate) / c**2

    # -- integrals -----------------------------------------------------------

    def _quad_w(self, x, weight=None):
        x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()

        def f(y):
            w = self.W(y)
            return w if weight is None else w * weight(y)

        return integrate_unit(f, x, abs_tol=1e-12, rel_tol=1e-12, noise=self.noise)

    def Wbar(self, x):
        x = np.asarray(x, dtype=float)
        if self._expsum is not None:
            return np.where(x <= 0, 0.0, self._expsum.integral(x))
        return np.where(x <= 0, 0.0, self._quad_w(x).reshape(x.shape))

    def _wbar_integral(self, x):
        x = np.asarray(x, dtype=float)
        if self._expsum is not None:
            return np.where(x <= 0, 0.0, self._expsum.double_integral(x))
        # int_0^x Wbar = int_0^x (x - y) W(y) dy
        flat = np.atleast_1d(x).ravel()
        out = np.zeros_like(flat)
        for i, xv in enumerate(flat):
            if xv > 0:
                out[i] = integrate(lambda y, xv=xv: (xv - y) * self.W(y), 0.0, xv,
                                   abs_tol=1e-12, rel_tol=1e-12, noise=self.noise)
        return out.reshape(np.shape(x))

    def Z(self, x):
        return 1.0 + self.q * self.Wbar(x)

    def Zbar(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.q * self._wbar_integral(x)

    def tilted(self, x, theta):
        """``int_0^x e^{-theta z} W_q(z) dz`` (zero for ``x <= 0``)."""
        x = np.asarray(x, dtype=float)
        if self._expsum is not None:
            return np.where(x <= 0, 0.0, self._expsum.tilted(x, theta))
        flat = np.atleast_1d(x).ravel()
        out = self._quad_w(np.maximum(flat, 0.0), weight=lambda y: np.exp(-theta * y))
        return np.where(x <= 0, 0.0, np.asarray(out).reshape(np.shape(x)))

    def tilted_moment(self, x, theta):
        """``int_0^x z e^{-theta z} W_q(z) dz``."""
        x = np.asarray(x, dtype=float)
        if self._expsum is not None:
            return np.where(x <= 0, 0.0, self._expsum.tilted_moment(x, theta))
        flat = np.atleast_1d(x).ravel()
        out = self._quad_w(np.maximum(flat, 0.0), weight=lambda y: y * np.exp(-theta * y))
        return np.where(x <= 0, 0.0, np.asarray(out).reshape(np.shape(x)))

    def Ztheta(self, x, theta):
        """``Z_q(x, theta) = e^{theta x} (1 + (q - kappa(theta)) int_0^x e^{-theta z} W_q(z) dz)``."""
        x = np.asarray(x, dtype=float)
        theta = float(theta)
        gap = self.q - float(self.model.kappa(theta))
        es = self._expsum
        if es is not None and self._far_from_poles(theta):
            # e^{theta x} cancels against sum_i c_i / (rho_i - theta) = 1 / (kappa(theta) - q);
            # the direct form below loses e^{theta x} eps and is only used near a pole
            xs = np.maximum(x, 0.0)[..., None]
            tail = (gap * es.coef / (es.rates - theta) * np.exp(es.rates * xs)).real.sum(axis=-1)
            if es.linear:
                tail = tail - gap * es.linear * (xs[..., 0] / theta + 1.0 / theta**2)
            return np.where(x <= 0, np.exp(theta * np.minimum(x, 0.0)), tail)
        return np.exp(theta * x) * (1.0 + gap * self.tilted(x, theta))

    def _far_from_poles(self, theta):
        es = self._expsum
        rates = es.rates if not es.linear else np.append(es.rates, 0.0)
        return bool(np.all(np.abs(theta - rates) > 0.1 * np.maximum(1.0, np.abs(rates))))

    def Ztheta_dtheta(self, x, theta):
        """Partial derivative of ``Z_q(x, theta)`` in ``theta``."""
        x = np.asarray(x, dtype=float)
        theta = float(theta)
        gap = self.q - float(self.model.kappa(theta))
        kp = float(self.model.kappa_prime(theta))
        inner = -kp * self.tilted(x, theta) - gap * self.tilted_moment(x, theta)
        return x * self.Ztheta(x, theta) + np.exp(theta * x) * inner

    def Ztheta_dx(self, x, theta):
        """``d/dx Z_q(x, theta) = theta Z_q(x, theta) + (q - kappa(theta)) W_q(x)``."""
        gap = self.q - float(self.model.kappa(float(theta)))
        return theta * self.Ztheta(x, theta) + gap * self.W(x)


@lru_cache(maxsize=256)
def _cached_context(model: LevyModel, q: float, backend):
    return ScaleContext(model, q, backend)


def scale_context(model: LevyModel, q: float, backend: Backend | str | None = None) -> ScaleContext:
    """Shared, memoised :class:`ScaleContext` for ``(model, q)``."""
    return _cached_context(model, float(q), None if backend is None else Backend(backend))


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def w_scale(ctx: ScaleContext, x: float) -> float:
    """``W_q(x)``; zero for ``x < 0``."""
    return float(ctx.W(float(x)))


def w_scale_deriv(ctx: ScaleContext, x: float, side: Side | str = Side.RIGHT) -> float:
    """One-sided derivative of ``W_q``; ``x = 0`` only from the right."""
    side = Side(side)
    if x < 0:
        raise ValueError(f"W_q' requested at negative x={x}")
    if x == 0:
        if side is Side.LEFT:
            raise ValueError("left derivative of W_q at 0 is undefined")
        return ctx.dW_zero()
    return float(ctx.dW(float(x), side))


@dataclass(frozen=True)
class ZFamily:
    Z: float
    Zbar: float
    Wbar: float


def z_family(ctx: ScaleContext, x: float) -> ZFamily:
    x = float(x)
    if x <= 0:
        return ZFamily(1.0, x, 0.0)
    wbar = float(ctx.Wbar(x))
    return ZFamily(1.0 + ctx.q * wbar, float(ctx.Zbar(x)), wbar)


def z_theta(ctx: ScaleContext, x: float, theta: float) -> float:
    """``Z_alpha(x, theta)`` with ``alpha = ctx.q``."""
    if not theta >= 0:
        raise ValueError(f"theta must be nonnegative, got {theta}")
    return float(ctx.Ztheta(float(x), float(theta)))


def z_theta_integral_form(ctx: ScaleContext, x: float, beta: float) -> float:
    """``beta int_0^inf e^{-Phi_{alpha+beta} z} W_alpha(z + x) dz``.

    The alternative representation of ``Z_alpha(x, Phi_{alpha+beta})``,
    integrated on a truncated range whose tail is below 1e-14 relative.
    """
    phi_ab = phi_inverse(ctx.model, ctx.q + beta)
    x = float(x)
    # e^{-phi_ab z} W(z + x) decays like e^{-(phi_ab - phi_a) z}
    rate = phi_ab - ctx.phi
    upper = 40.0 / rate + max(0.0, -x)
    start = max(0.0, -x)
    val = integrate(lambda z: np.exp(-phi_ab * z) * ctx.W(z + x), start, upper, noise=ctx.noise,
                    abs_tol=1e-15, rel_tol=1e-13, max_panels=2000)
    return beta * val


def z_two_param(ctx: ScaleContext, alpha: float, beta: float, x, theta: float):
    """``Z_{alpha,beta}(x, theta)``.

    ``ctx`` only supplies the model; the scale functions at ``alpha`` are
    taken from the shared context cache.  Near ``theta = Phi_{alpha+beta}``
    the removable singularity is replaced by its limit.
    """
    if beta < -alpha:
        raise ValueError(f"beta={beta} must be >= -alpha={-alpha}")
    if not theta >= 0:
        raise ValueError(f"theta must be nonnegative, got {theta}")
    model = ctx.model
    ca = scale_context(model, alpha)
    phi_ab = phi_inverse(model, alpha + beta)
    k = float(model.kappa(theta))
    denom = alpha + beta - k
    z_phi = ca.Ztheta(x, phi_ab)
    if abs(denom) < POLE_BAND * (abs(alpha + beta) + 1.0):
        kp = float(model.kappa_prime(phi_ab))
        return z_phi - beta * ca.Ztheta_dtheta(x, phi_ab) / kp
    return (beta * ca.Ztheta(x, theta) + (alpha - k) * z_phi) / denom


def z_two_param_deriv(ctx: ScaleContext, alpha: float, beta: float, x):
    """``d/dx Z_{alpha,beta}(x) = alpha Phi_{alpha+beta} Z_alpha(x, Phi_{alpha+beta}) / (alpha+beta)``."""
    ca = scale_context(ctx.model, alpha)
    phi_ab = phi_inverse(ctx.model, alpha + beta)
    return alpha * phi_ab * ca.Ztheta(x, phi_ab) / (alpha + beta)


@dataclass(frozen=True)
class ShiftedKernelValue:
    """``W^a``, ``Z^a`` and ``Zbar^a`` at one point, with the gap between
    their two integral representations."""

    w_a: float
    z_a: float
    zbar_a: float
    representation_gap: float


def _conv_first(ctx, ctxp, r, a, x):
    """First representation of the three shifted kernels at points ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    pos = np.maximum(x, 0.0)

    def f(s):
        y = pos[:, None] * s[None, :]
        wk = ctx.W(pos[:, None] - y) * pos[:, None]
        ya = y - a
        return np.concatenate([wk * ctxp.W(ya), wk * ctxp.Z(ya), wk * ctxp.Zbar(ya)])

    conv = integrate(f, 0.0, 1.0, noise=max(ctx.noise, ctxp.noise))
    xa = x - a
    w = ctxp.W(xa) - r * conv[:n]
    z = ctxp.Z(xa) - r * conv[n:2 * n]
    zb = ctxp.Zbar(xa) - r * conv[2 * n:]
    return w, z, zb


def _conv_second(ctx, ctxp, r, a, x):
    """Second representation: convolution over ``u in [0, -a]``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    # W_q(x - u - a) vanishes for u > x - a
    upper = np.clip(x - a, 0.0, -a)

    def f(s):
        u = upper[:, None] * s[None, :]
        wk = ctx.W(x[:, None] - u - a) * upper[:, None]
        return np.concatenate([wk * ctxp.W(u), wk * ctxp.Z(u), wk * ctxp.Zbar(u)])

    conv = integrate(f, 0.0, 1.0, noise=max(ctx.noise, ctxp.noise))
    xa = x - a
    w = ctx.W(xa) + r * conv[:n]
    z = ctx.Z(xa) + r * conv[n:2 * n]
    zb = ctx.Zbar(xa) + r * conv[2 * n:]
    return w, z, zb


def shifted_kernel_arrays(ctx: ScaleContext, r: float, a: float, x, check: bool = True):
    """Vectorised shifted kernels; returns ``(w, z, zbar, gap)`` arrays."""
    ctxp = scale_context(ctx.model, ctx.q + r)
    w1, z1, zb1 = _conv_first(ctx, ctxp, r, a, x)
    if not check:
        return w1, z1, zb1, np.zeros_like(w1)
    w2, z2, zb2 = _conv_second(ctx, ctxp, r, a, x)
    gap = np.maximum.reduce([np.abs(w1 - w2), np.abs(z1 - z2), np.abs(zb1 - zb2)])
    scale = np.maximum.reduce([np.ones_like(w1), np.abs(w1), np.abs(z1), np.abs(zb1)])
    if np.any(gap > GAP_TOL * scale):
        j = int(np.argmax(gap / scale))
        raise ShiftedKernelError(
            f"shifted kernel representations disagree by {gap[j]:.3e} at x={np.atleast_1d(x)[j]}, a={a}, r={r}"
        )
    return w1, z1, zb1, gap


def shifted_kernels(ctx: ScaleContext, r: float, a: float, x: float) -> ShiftedKernelValue:
    """``W^a_{q,r}(x)``, ``Z^a_{q,r}(x)`` and ``Zbar^a_{q,r}(x)`` for ``a < 0 < r``."""
    if not a < 0:
        raise ValueError(f"a must be negative, got {a}")
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    w, z, zb, gap = shifted_kernel_arrays(ctx, r, a, [float(x)])
    return ShiftedKernelValue(float(w[0]), float(z[0]), float(zb[0]), float(gap[0]))


def shifted_w_deriv_arrays(ctx: ScaleContext, r: float, a: float, x):
    """Right derivative of ``W^a_{q,r}`` at the points ``x`` (none equal to ``a``)."""
    ctxp = scale_context(ctx.model, ctx.q + r)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xa = x - a
    out = np.where(xa > 0, ctxp.dW(np.maximum(xa, 0.0)), 0.0)
    pos = np.maximum(x, 0.0)

    def f(s):
        z = pos[:, None] * s[None, :]
        return ctx.dW(pos[:, None] - z) * ctxp.W(z - a) * pos[:, None]

    conv = integrate(f, 0.0, 1.0, noise=max(ctx.noise, ctxp.noise))
    # the boundary term comes from differentiating the upper limit, x >= 0 only
    return np.where(x >= 0, out - r * (conv + ctx.w_zero * ctxp.W(xa)), out)


def shifted_kernel_deriv(ctx: ScaleContext, r: float, a: float, x: float) -> float:
    """Right derivative ``(W^a_{q,r})'(x)``, ``x != a``.

    For ``x < 0`` the convolution term is empty and the derivative is that of
    ``W_{q+r}(x - a)``.
    """
    if not a < 0:
        raise ValueError(f"a must be negative, got {a}")
    if x == a:
        raise ValueError("the derivative of W^a is not evaluated at x = a")
    return float(shifted_w_deriv_arrays(ctx, r, a, [x])[0])


def resolvent_density(ctx: ScaleContext, a: float, b: float, x: float, y: float) -> float:
    """Density of the q-resolvent of ``X`` killed on leaving ``[a, b]``."""
    if not (a <= x <= b):
        raise ValueError(f"need a <= x <= b, got a={a}, x={x}, b={b}")
    if not (a < y < b):
        raise ValueError(f"need a < y < b, got y={y}")
    W = ctx.W
    val = float(W(x - a) * W(b - y) / W(b - a) - W(x - y))
    return max(val, 0.0) if val > -1e-12 else val

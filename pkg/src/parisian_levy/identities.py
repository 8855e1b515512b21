"""Fluctuation identities for the Parisian-reflected process.

The process ``X_r`` is pushed up to 0 at the arrival times of a rate-``r``
Poisson clock whenever it is below 0; ``Y_r^b`` is additionally reflected
classically at the barrier ``b``.  Every quantity here is a ratio or a
combination of the kernels

* ``H^a_{q,r}(y, theta)`` and ``I^a_{q,r}(y)`` (and their right derivatives),
* ``h^a_{q,r}(y)`` (capital-injection kernel) and its derivative,
* ``G_{q,r}(y, theta)``, ``J_{q,r}(y)``, ``k_{q,r}(y)`` and friends for the
  infinite-horizon limits,

evaluated on top of :mod:`parisian_levy.scale`.  The ``u``-integral inside
``H`` is rewritten with Fubini's theorem as a single convolution; the literal
nested form is kept (:meth:`Kernels.A_nested`) and used for the auxiliary
``U`` family, so that the identity ``U_1 + U_2 = -H`` compares two
independent computations.

Where a closed form exists next to an integral form (``H`` and ``H'`` at
``theta = 0``, ``h^a``, ``G(y, 0)``, ``u_1`` at ``theta = 0``) both are
evaluated, the pair is stored in the kernel trace, and a disagreement beyond
:data:`SELF_CHECK_RTOL` raises :class:`SelfCheckError`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .levy_model import LevyModel, phi_inverse
from .quadrature import integrate
from .closed_kernels import MAX_EXPONENT, ClosedKernels, InfiniteClosed
from .scale import (
    ScaleContext,
    scale_context,
    shifted_kernel_arrays,
    shifted_w_deriv_arrays,
    z_two_param,
    z_two_param_deriv,
)

__all__ = [
    "Scenario",
    "Source",
    "IdentityValue",
    "IdentityError",
    "SelfCheckError",
    "Kernels",
    "kernels",
    "kernel_H",
    "kernel_I",
    "kernel_H_deriv",
    "kernel_I_deriv",
    "two_sided_exit",
    "injections_killed",
    "ruin_infinite",
    "upcross_infinite",
    "injections_limits",
    "reflected_ruin_laplace",
    "reflected_dividends",
    "reflected_dividends_limit",
    "reflected_injections",
    "reflected_injections_limit",
    "building_blocks_u",
    "building_blocks_U0",
    "IDENTITIES",
    "evaluate",
]

SELF_CHECK_RTOL = 1e-9
#: closed forms vs integral representations; the quadrature carries ~1e-10
CROSS_CHECK_RTOL = 1e-7
#: largest Z_{q+r}(y - a) at which the integral representations are cross-checked
CROSS_CHECK_LIMIT = 1e4
SELF_CHECK_ATOL = 1e-12
#: relative rounding of the terms an integral representation subtracts
CANCEL_RTOL = 1e-11


class IdentityError(ValueError):
    """Inputs outside an identity's domain, or a theoretically impossible value."""


class SelfCheckError(ArithmeticError):
    """Two representations of the same kernel disagree."""


class Source(str, enum.Enum):
    TWO_SIDED_EXIT = "two-sided exit"
    KILLED_INJECTIONS = "injections until exit"
    RUIN_INFINITE = "absolute ruin, no upper barrier"
    UPCROSS_INFINITE = "upcrossing, no lower barrier"
    UPCROSS_NO_BAILOUT = "upcrossing before first observed deficit"
    INJECTIONS_UNTIL_RUIN = "injections until absolute ruin"
    INJECTIONS_UNTIL_UPCROSS = "injections until upcrossing"
    INJECTIONS_TOTAL = "injections over infinite horizon"
    REFLECTED_RUIN = "reflected: absolute ruin"
    REFLECTED_DIVIDENDS = "reflected: dividends until ruin"
    REFLECTED_DIVIDENDS_LIMIT = "reflected: dividends, no lower barrier"
    REFLECTED_INJECTIONS = "reflected: injections until ruin"
    REFLECTED_INJECTIONS_LIMIT = "reflected: injections, no lower barrier"
    AUXILIARY = "auxiliary u/U functions"
    KERNEL = "kernel"


@dataclass(frozen=True)
class Scenario:
    """Inputs of the identities.

    ``a`` is the absolute-ruin level and ``b`` the upper level (or dividend
    barrier); either may be ``None`` for the identities that do not use it.
    """

    q: float
    r: float
    a: float | None = None
    b: float | None = None
    x: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not self.q >= 0:
            raise IdentityError(f"q must be >= 0, got {self.q}")
        if not self.r > 0:
            raise IdentityError(f"r must be > 0, got {self.r}")
        if not self.theta >= 0:
            raise IdentityError(f"theta must be >= 0, got {self.theta}")
        if self.a is not None and not self.a < 0:
            raise IdentityError(f"a must be < 0, got {self.a}")
        if self.b is not None and not self.b > 0:
            raise IdentityError(f"b must be > 0, got {self.b}")
        if not math.isfinite(self.x):
            raise IdentityError(f"x must be finite, got {self.x}")

    def need_a(self, what):
        if self.a is None:
            raise IdentityError(f"{what} needs the lower level a")
        return self.a

    def need_b(self, what, x_le_b=True):
        if self.b is None:
            raise IdentityError(f"{what} needs the upper level b")
        if x_le_b and self.x > self.b:
            raise IdentityError(f"{what} is stated for x <= b, got x={self.x} > b={self.b}")
        return self.b


@dataclass(frozen=True)
class IdentityValue:
    value: float
    source: Source
    kernel_trace: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def _check(name, first, second, trace, rtol=SELF_CHECK_RTOL, scale=0.0):
    """Raise if two representations differ; ``scale`` is the size of the
    terms one of them cancels, whose rounding is allowed for."""
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    gap = np.abs(first - second)
    bound = (SELF_CHECK_ATOL + rtol * np.maximum(np.abs(first), np.abs(second))
             + CANCEL_RTOL * np.abs(scale))
    trace[name + "_gap"] = float(np.max(gap))
    if np.any(gap > bound):
        j = int(np.argmax(gap - bound))
        raise SelfCheckError(
            f"{name}: representations disagree ({first.ravel()[j]!r} vs {second.ravel()[j]!r})"
        )


# ---------------------------------------------------------------------------
# kernels for fixed (model, q, r, a)
# ---------------------------------------------------------------------------

class Kernels:
    """All ``a``-dependent kernels for one ``(model, q, r, a)``.

    Methods are vectorised over the space variable ``y``.
    """

    def __init__(self, model: LevyModel, q: float, r: float, a: float):
        if not a < 0:
            raise IdentityError(f"a must be < 0, got {a}")
        self.model = model
        self.q, self.r, self.a = float(q), float(r), float(a)
        self.ctx: ScaleContext = scale_context(model, q)
        self.ctxp: ScaleContext = scale_context(model, q + r)
        ma = np.array([-a])
        self.Wpa = float(self.ctxp.W(ma)[0])
        self.Zpa = float(self.ctxp.Z(ma)[0])
        self.Zbpa = float(self.ctxp.Zbar(ma)[0])
        self.Wbpa = float(self.ctxp.Wbar(ma)[0])
        self.closed: ClosedKernels | None = None
        if self.ctx._expsum is not None and self.ctxp._expsum is not None:
            if not ClosedKernels.supported(self.ctx, self.ctxp, a):
                raise IdentityError(
                    f"Phi_(q+r) |a| = {self.ctxp.phi * -a:.4g} exceeds {MAX_EXPONENT:g}; "
                    "W_(q+r)(-a) overflows"
                )
            self.closed = ClosedKernels(self.ctx, self.ctxp, r, a)

    @property
    def noise(self) -> float:
        return max(self.ctx.noise, self.ctxp.noise)

    def well_conditioned(self, y) -> bool:
        """Whether the integral representations keep enough digits up to ``max(y)``."""
        top = float(np.max(y)) - self.a
        return float(self.ctxp.Z(np.array([top]))[0]) <= CROSS_CHECK_LIMIT

    def cross_check(self, pts, theta, trace):
        """Compare the closed forms with the integral representations."""
        if self.closed is None:
            return
        if not self.well_conditioned(pts):
            trace["cross_check"] = "skipped: ill-conditioned"
            return
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        parts = self._shifted_generic(pts)
        for name, mine, other in zip(("W^a", "Z^a", "Zbar^a"), self.shifted(pts), parts):
            _check(name + " cross", mine, other, trace, CROSS_CHECK_RTOL)
        # rounding allowance: the generic forms subtract terms of size ratio * Z_{q+r}(-a),
        # the pair sums add terms of size |w_j| |g_k u_k| (large when W_{q+r}(-a) is small)
        c = self.closed
        ratio = np.abs(parts[0] / self.Wpa)
        pairs = np.abs(c.w).sum() * np.abs(c.g * c.p / c.rho).sum()
        _check("I cross", self.I(pts), self._I_generic(pts, parts), trace, CROSS_CHECK_RTOL,
               scale=ratio * self.Zpa + pairs)
        Lpa = float(self.ctxp.tilted(np.array([-self.a]), theta)[0])
        pairs = self.r * np.abs(c.w).sum() * np.abs(c.gamma * c._T(theta)).sum()
        _check("H cross", self.H(pts, theta), self._H_generic(pts, theta, parts[0]), trace,
               CROSS_CHECK_RTOL, scale=2 * ratio * (1 + self.r * Lpa) + pairs)
        trace["cross_check"] = "ok"

    # -- dispatch: closed forms when available --------------------------------

    def shifted(self, y):
        if self.closed is not None:
            return self.closed.shifted(np.atleast_1d(np.asarray(y, dtype=float)))
        return self._shifted_generic(y)

    def wa_deriv(self, y):
        if self.closed is not None:
            return self.Wpa * self.closed.wa_normalised_deriv(np.atleast_1d(np.asarray(y, dtype=float)))
        return self._wa_deriv_generic(y)

    def H(self, y, theta, wa=None):
        if self.closed is not None:
            return self.closed.H(np.atleast_1d(np.asarray(y, dtype=float)), theta)
        return self._H_generic(y, theta, wa)

    def I(self, y, parts=None):
        if self.closed is not None:
            return self.closed.I(np.atleast_1d(np.asarray(y, dtype=float)))
        return self._I_generic(y, parts)

    def H0_closed(self, y, parts=None):
        if self.closed is not None:
            return self.closed.H0_closed(np.atleast_1d(np.asarray(y, dtype=float)))
        return self._H0_closed_generic(y, parts)

    def H_deriv(self, y, theta, wa_d=None):
        if self.closed is not None:
            return self.closed.H_deriv(np.atleast_1d(np.asarray(y, dtype=float)), theta)
        return self._H_deriv_generic(y, theta, wa_d)

    def I_deriv(self, y, wa=None, wa_d=None):
        if self.closed is not None:
            return self.closed.I_deriv(np.atleast_1d(np.asarray(y, dtype=float)))
        return self._I_deriv_generic(y, wa, wa_d)

    def H0_deriv_closed(self, y, wa=None, wa_d=None):
        if self.closed is not None:
            return self.closed.H0_deriv_closed(np.atleast_1d(np.asarray(y, dtype=float)))
        return self._H0_deriv_closed_generic(y, wa, wa_d)

    def h_small(self, y, parts=None):
        """Two forms of ``h^a_{q,r}(y)``; the second is ``None`` when it cannot be trusted."""
        if self.closed is None:
            return self._h_small_generic(y, parts)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        first = self.closed.h_small(y)
        if not self.well_conditioned(y):
            return first, None
        return first, self._h_small_generic(y, self.shifted(y))[1]

    def h_small_deriv(self, y, parts=None, wa_d=None):
        if self.closed is not None:
            return self.closed.h_small_deriv(np.atleast_1d(np.asarray(y, dtype=float)))
        return self._h_small_deriv_generic(y, parts, wa_d)

    # -- shifted kernels -----------------------------------------------------

    def _shifted_generic(self, y):
        w, z, zb, _ = shifted_kernel_arrays(self.ctx, self.r, self.a, y)
        return w, z, zb

    def _wa_deriv_generic(self, y):
        return shifted_w_deriv_arrays(self.ctx, self.r, self.a, y)

    # -- A(y, theta) = int_0^{-a} e^{-theta u} W^{-u}_{q,r}(y) du --------------

    def _GA(self, s, theta):
        # int_0^{-a} e^{-theta u} W_{q+r}(s + u) du
        Lp = self.ctxp.tilted
        return np.exp(theta * s) * (Lp(s - self.a, theta) - Lp(s, theta))

    def _GA_deriv(self, s, theta):
        W = self.ctxp.W
        return theta * self._GA(s, theta) + math.exp(theta * self.a) * W(s - self.a) - W(s)

    def A(self, y, theta):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        pos = np.maximum(y, 0.0)

        def f(s):
            z = pos[:, None] * s[None, :]
            return self.ctx.W(pos[:, None] - z) * self._GA(z, theta) * pos[:, None]

        return self._GA(y, theta) - self.r * integrate(f, 0.0, 1.0, noise=self.noise)

    def A_deriv(self, y, theta):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        pos = np.maximum(y, 0.0)

        def f(s):
            z = pos[:, None] * s[None, :]
            return self.ctx.dW(pos[:, None] - z) * self._GA(z, theta) * pos[:, None]

        conv = integrate(f, 0.0, 1.0, noise=self.noise) + self.ctx.w_zero * self._GA(pos, theta)
        return self._GA_deriv(y, theta) - self.r * np.where(y >= 0, conv, 0.0)

    def A_nested(self, y, theta):
        """``A`` by literal nesting: outer integral over ``u``, inner convolution."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        ctx, ctxp, r = self.ctx, self.ctxp, self.r
        out = np.empty_like(y)
        for j, yv in enumerate(y):
            if yv <= 0:
                # W^{-u}(y) = W_{q+r}(y + u), vanishing for u < -y
                lo = min(-yv, -self.a)
                out[j] = integrate(lambda u: np.exp(-theta * u) * ctxp.W(yv + u), lo, -self.a,
                                   noise=self.noise)
                continue

            def f(u, yv=yv):
                inner = integrate(
                    lambda z: ctx.W(yv - z)[None, :] * ctxp.W(z[None, :] + u[:, None]), 0.0, yv,
                    noise=self.noise,
                )
                return np.exp(-theta * u) * (ctxp.W(yv + u) - r * inner)

            out[j] = integrate(f, 0.0, -self.a, noise=self.noise)
        return out

    # -- H, I and derivatives --------------------------------------------------

    def _H_generic(self, y, theta, wa=None):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if wa is None:
            wa = self._shifted_generic(y)[0]
        ratio = wa / self.Wpa
        Lpa = float(self.ctxp.tilted(np.array([-self.a]), theta)[0])
        return self.r * (ratio * Lpa - self.A(y, theta)) + ratio

    def _I_generic(self, y, parts=None):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        wa, za, _ = parts if parts is not None else self._shifted_generic(y)
        return za - wa * self.Zpa / self.Wpa

    def _H0_closed_generic(self, y, parts=None):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        wa, za, zba = parts if parts is not None else self._shifted_generic(y)
        q, r = self.q, self.r
        return (-r * self._I_generic(y, (wa, za, zba)) + q * wa / self.Wpa + r * self.ctx.Z(y)) / (q + r)

    def _H_deriv_generic(self, y, theta, wa_d=None):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if wa_d is None:
            wa_d = self._wa_deriv_generic(y)
        ratio = wa_d / self.Wpa
        Lpa = float(self.ctxp.tilted(np.array([-self.a]), theta)[0])
        return self.r * (ratio * Lpa - self.A_deriv(y, theta)) + ratio

    def _I_deriv_generic(self, y, wa=None, wa_d=None):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if wa is None:
            wa = self._shifted_generic(y)[0]
        if wa_d is None:
            wa_d = self._wa_deriv_generic(y)
        q, r = self.q, self.r
        return (q + r) * wa - self.Zpa * (r * self.ctx.W(y) + wa_d / self.Wpa)

    def _H0_deriv_closed_generic(self, y, wa=None, wa_d=None):
        """Both displayed closed forms of ``H'(y, 0)``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if wa is None:
            wa = self._shifted_generic(y)[0]
        if wa_d is None:
            wa_d = self._wa_deriv_generic(y)
        q, r = self.q, self.r
        Wy = self.ctx.W(y)
        c = r * self.Zpa + q
        first = wa_d * c / (self.Wpa * (q + r)) - r * wa + r * Wy * c / (q + r)
        second = (q * (wa_d / self.Wpa + r * Wy) - r * self._I_deriv_generic(y, wa, wa_d)) / (q + r)
        return first, second

    # -- injection kernel h^a ----------------------------------------------------

    def _h_small_generic(self, y, parts=None):
        """Both displayed forms of ``h^a_{q,r}(y)``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        wa, za, zba = parts if parts is not None else self._shifted_generic(y)
        q, r, a = self.q, self.r, self.a
        k = r / (q + r)
        zbq = self.ctx.Zbar(y)
        first = k * (zbq + (a * self.Zpa + self.Zbpa) / self.Wpa * wa - a * za - zba)
        second = k * (zbq + self.Zbpa / self.Wpa * wa - zba - a * self._I_generic(y, (wa, za, zba)))
        return first, second

    def _h_small_deriv_generic(self, y, parts=None, wa_d=None):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        wa, za, _ = parts if parts is not None else self._shifted_generic(y)
        if wa_d is None:
            wa_d = self._wa_deriv_generic(y)
        q, r, a = self.q, self.r, self.a
        Wy = self.ctx.W(y)
        inner = (
            self.ctx.Z(y)
            + (a * self.Zpa + self.Zbpa) / self.Wpa * wa_d
            - a * ((q + r) * wa - r * Wy * self.Zpa)
            - za
            + r * Wy * self.Zbpa
        )
        return r / (q + r) * inner


@lru_cache(maxsize=512)
def _kernels(model, q, r, a):
    return Kernels(model, q, r, a)


def kernels(model: LevyModel, s: Scenario) -> Kernels:
    return _kernels(model, float(s.q), float(s.r), float(s.need_a("the kernels")))


# ---------------------------------------------------------------------------
# single kernels
# ---------------------------------------------------------------------------

def kernel_H(model: LevyModel, s: Scenario, y: float) -> float:
    """``H^a_{q,r}(y, theta)``; at ``theta = 0`` checked against its closed form."""
    K = kernels(model, s)
    parts = K.shifted([y])
    val = K.H([y], s.theta, parts[0])
    if s.theta == 0:
        _check("H(y,0)", val, K.H0_closed([y], parts), {})
    return float(val[0])


def kernel_I(model: LevyModel, s: Scenario, y: float) -> float:
    return float(kernels(model, s).I([y])[0])


def kernel_H_deriv(model: LevyModel, s: Scenario, y: float) -> float:
    """Right derivative of ``H^a_{q,r}(., theta)`` at ``y != a``."""
    if y == s.need_a("H'"):
        raise IdentityError("H' is not evaluated at y = a")
    K = kernels(model, s)
    wa = K.shifted([y])[0]
    wa_d = K.wa_deriv([y])
    val = K.H_deriv([y], s.theta, wa_d)
    if s.theta == 0:
        first, second = K.H0_deriv_closed([y], wa, wa_d)
        _check("H'(y,0) closed", first, second, {})
        _check("H'(y,0)", val, first, {})
    return float(val[0])


def kernel_I_deriv(model: LevyModel, s: Scenario, y: float) -> float:
    if y == s.need_a("I'"):
        raise IdentityError("I' is not evaluated at y = a")
    return float(kernels(model, s).I_deriv([y])[0])


# ---------------------------------------------------------------------------
# identities with lower level a and upper level b
# ---------------------------------------------------------------------------

def _positive(name, value, trace):
    if not value > 0:
        raise IdentityError(f"{name} = {value!r} is not positive; kernel trace: {trace}")


def _H_pair(K: Kernels, pts, theta, trace):
    K.cross_check(pts, theta, trace)
    parts = K.shifted(pts)
    H = K.H(pts, theta, parts[0])
    if theta == 0:
        _check("H(y,0)", H, K.H0_closed(pts, parts), trace)
    return parts, H


@dataclass(frozen=True)
class ExitLaplace:
    g: IdentityValue
    h: IdentityValue


def two_sided_exit(model: LevyModel, s: Scenario) -> ExitLaplace:
    """Laplace transforms of exiting ``[a, b]`` upward (``g``) and downward (``h``)."""
    b = s.need_b("two-sided exit")
    K = kernels(model, s)
    pts = np.array([s.x, b])
    parts, H = _H_pair(K, pts, s.theta, trace := {})
    I = K.I(pts, parts)
    trace.update({"H(x)": H[0], "H(b)": H[1], "I(x)": I[0], "I(b)": I[1],
                  "W^a(x)": parts[0][0], "W^a(b)": parts[0][1], "Z^a(x)": parts[1][0]})
    _positive("H(b)", H[1], trace)
    g = H[0] / H[1]
    h = I[0] - g * I[1]
    return ExitLaplace(IdentityValue(float(g), Source.TWO_SIDED_EXIT, trace),
                       IdentityValue(float(h), Source.TWO_SIDED_EXIT, dict(trace)))


def injections_killed(model: LevyModel, s: Scenario) -> IdentityValue:
    """Expected discounted injections until leaving ``[a, b]``."""
    b = s.need_b("injections until exit")
    K = kernels(model, s)
    pts = np.array([s.x, b])
    trace: dict = {}
    parts, H = _H_pair(K, pts, 0.0, trace)
    h1, h2 = K.h_small(pts, parts)
    if h2 is not None:
        _check("h^a", h1, h2, trace)
    _positive("H(b,0)", H[1], trace)
    trace.update({"H(x,0)": H[0], "H(b,0)": H[1], "h^a(x)": h1[0], "h^a(b)": h1[1]})
    val = H[0] / H[1] * h1[1] - h1[0]
    return IdentityValue(float(val), Source.KILLED_INJECTIONS, trace)


def reflected_ruin_laplace(model: LevyModel, s: Scenario) -> IdentityValue:
    """Joint transform of absolute ruin and injections with reflection at ``b``."""
    b = s.need_b("reflected ruin")
    K = kernels(model, s)
    trace: dict = {}
    parts, H = _H_pair(K, np.array([s.x, b]), s.theta, trace)
    Hd = _H_deriv_at(K, b, s.theta, parts[0][1], trace)
    wa_d = trace["W^a'(b)"]
    Id = K.I_deriv([b], np.array([parts[0][1]]), np.array([wa_d]))[0]
    Ix = K.I([s.x], (parts[0][:1], parts[1][:1], parts[2][:1]))[0]
    trace.update({"H(x)": H[0], "I(x)": Ix, "I'(b)": Id})
    val = Ix - H[0] / Hd * Id
    return IdentityValue(float(val), Source.REFLECTED_RUIN, trace)


def _H_deriv_at(K: Kernels, b, theta, wa_b, trace):
    wa_d = K.wa_deriv([b])
    Hd = K.H_deriv([b], theta, wa_d)
    if theta == 0:
        first, second = K.H0_deriv_closed([b], np.array([wa_b]), wa_d)
        _check("H'(b,0) closed", first, second, trace)
        _check("H'(b,0)", Hd, first, trace)
    trace["W^a'(b)"] = float(wa_d[0])
    trace["H'(b)"] = float(Hd[0])
    _positive("H'(b)", Hd[0], trace)
    return float(Hd[0])


def reflected_dividends(model: LevyModel, s: Scenario) -> IdentityValue:
    """Expected discounted dividends at barrier ``b`` until absolute ruin."""
    b = s.need_b("reflected dividends", x_le_b=False)
    K = kernels(model, s)
    trace: dict = {}
    xe = min(s.x, b)
    parts, H = _H_pair(K, np.array([xe, b]), 0.0, trace)
    Hd = _H_deriv_at(K, b, 0.0, parts[0][1], trace)
    trace.update({"H(x,0)": H[0], "H(b,0)": H[1]})
    val = H[0] / Hd + max(s.x - b, 0.0)
    return IdentityValue(float(val), Source.REFLECTED_DIVIDENDS, trace)


def reflected_injections(model: LevyModel, s: Scenario) -> IdentityValue:
    """Expected discounted injections with reflection at ``b``, until absolute ruin."""
    b = s.need_b("reflected injections", x_le_b=False)
    K = kernels(model, s)
    trace: dict = {}
    xe = min(s.x, b)
    pts = np.array([xe, b])
    parts, H = _H_pair(K, pts, 0.0, trace)
    Hd = _H_deriv_at(K, b, 0.0, parts[0][1], trace)
    h1, h2 = K.h_small(pts, parts)
    if h2 is not None:
        _check("h^a", h1, h2, trace)
    bparts = tuple(p[1:] for p in parts)
    hd = K.h_small_deriv([b], bparts, np.array([trace["W^a'(b)"]]))[0]
    trace.update({"H(x,0)": H[0], "h^a(x)": h1[0], "h^a'(b)": hd})
    val = H[0] / Hd * hd - h1[0]
    return IdentityValue(float(val), Source.REFLECTED_INJECTIONS, trace)


# ---------------------------------------------------------------------------
# infinite-horizon limits
# ---------------------------------------------------------------------------

def _z_q_r(ctx_q: ScaleContext, r, y):
    """``Z_{q,r}(y) = (r Z_q(y) + q Z_q(y, Phi_{q+r})) / (q + r)``."""
    return z_two_param(ctx_q, ctx_q.q, r, y, 0.0)


def _z_qr_minus_r(ctxp: ScaleContext, q, r, y):
    """``Z_{q+r,-r}(y)`` for ``q > 0``."""
    return (-r * ctxp.Z(y) + (q + r) * ctxp.Ztheta(y, phi_inverse(ctxp.model, q))) / q


def _G_integral(model, q, r, y, theta):
    """``G_{q,r}(y, theta)`` for scalar ``y > 0`` by quadrature."""
    ctxp = scale_context(model, q + r)
    pq = phi_inverse(model, q)
    zy = float(ctxp.Ztheta(y, pq))
    wy = float(ctxp.W(y))
    Lp = float(ctxp.tilted(y, theta))
    M = integrate(lambda u: np.exp(-theta * u) * ctxp.Ztheta(u, pq), 0.0, y, noise=ctxp.noise)
    return r * (zy / wy * Lp - M) + zy / wy


def _G_closed0(model, q, r, y):
    ctxp = scale_context(model, q + r)
    pq = phi_inverse(model, q)
    Zp, Wp = float(ctxp.Z(y)), float(ctxp.W(y))
    if q > 0:
        zphi = float(ctxp.Ztheta(y, pq))
        z2 = float(_z_qr_minus_r(ctxp, q, r, y))
        return (zphi / Wp * (r * Zp + q) - r * q / pq * (z2 - 1.0)) / (q + r)
    if pq > 0:
        zphi = float(ctxp.Ztheta(y, pq))
        return zphi / Wp * Zp - r / pq * (zphi - Zp)
    return Zp**2 / Wp - r * float(ctxp.Zbar(y))


def _J(model, q, r, y):
    ctxp = scale_context(model, q + r)
    pq = phi_inverse(model, q)
    Zp, Wp = float(ctxp.Z(y)), float(ctxp.W(y))
    if q > 0:
        zphi = float(ctxp.Ztheta(y, pq))
        return q / pq * float(_z_qr_minus_r(ctxp, q, r, y)) - zphi * Zp / Wp
    if pq > 0:
        zphi = float(ctxp.Ztheta(y, pq))
        return r / pq * (zphi - Zp) - zphi * Zp / Wp
    return r * float(ctxp.Zbar(y)) + model.kappa_prime_zero() - Zp**2 / Wp


def _infinite_kernels(model, K: Kernels, theta, trace, with_h=False):
    """``G(-a, theta)``, ``J(-a)`` and optionally ``h(-a)``.

    Partial-fraction models use the pair-sum closed forms, cross-checked
    against the integral forms when those keep enough digits; other models
    use the integral forms with the ``theta = 0`` self-check.
    """
    q, r, y = K.q, K.r, -K.a
    if K.closed is None:
        G = _G_integral(model, q, r, y, theta)
        if theta == 0:
            _check("G(y,0)", G, _G_closed0(model, q, r, y), trace)
        J = _J(model, q, r, y)
        hinf = _h_infinite(model, q, r, y) if with_h else None
        return G, J, hinf
    C = InfiniteClosed(K.ctxp, q, r, phi_inverse(model, q), y)
    G, J = C.G(theta), C.J()
    hinf = C.h() if with_h else None
    if K.well_conditioned([0.0]):
        # the integral forms subtract products of size about Z(y, Phi_q) Z(y) / W(y)
        ctxp = K.ctxp
        big = float(ctxp.Ztheta(y, C.phi) * ctxp.Z(y) / ctxp.W(y)) * (1 + r) * (1 + y)
        for name, mine, other in (
            ("G cross", G, _G_integral(model, q, r, y, theta)),
            ("G(y,0) cross", G, _G_closed0(model, q, r, y) if theta == 0 else G),
            ("J cross", J, _J(model, q, r, y)),
            ("h cross", hinf, _h_infinite(model, q, r, y) if with_h else hinf),
        ):
            if mine is not None:
                _check(name, mine, other, trace, CROSS_CHECK_RTOL, scale=big)
    else:
        trace["infinite_cross_check"] = "skipped: ill-conditioned"
    return G, J, hinf


def ruin_infinite(model: LevyModel, s: Scenario) -> IdentityValue:
    """``E_x(exp(-q tau_a - theta R(tau_a)); tau_a < inf)`` with no upper barrier."""
    s.need_a("ruin without upper barrier")
    K = kernels(model, s)
    trace: dict = {}
    parts, H = _H_pair(K, np.array([s.x]), s.theta, trace)
    Hx = float(H[0])
    Ix = float(K.I([s.x], parts)[0])
    G, J, _ = _infinite_kernels(model, K, s.theta, trace)
    trace.update({"H(x)": Hx, "I(x)": Ix, "G(-a)": G, "J(-a)": J, "Phi_q": phi_inverse(model, s.q)})
    _positive("G(-a)", G, trace)
    val = Ix - J * Hx / G
    return IdentityValue(float(val), Source.RUIN_INFINITE, trace)


@dataclass(frozen=True)
class UpcrossLaplace:
    laplace_with_R: IdentityValue
    laplace_no_bailout: IdentityValue


def upcross_infinite(model: LevyModel, s: Scenario) -> UpcrossLaplace:
    """Upcrossing of ``b`` with no lower barrier, and before the first observed deficit."""
    b = s.need_b("upcrossing without lower barrier")
    q, r = s.q, s.r
    ctx = scale_context(model, q)
    pts = np.array([s.x, b])
    z = z_two_param(ctx, q, r, pts, s.theta)
    pqr = phi_inverse(model, q + r)
    zn = ctx.Ztheta(pts, pqr)
    trace = {"Z_qr(x,theta)": float(z[0]), "Z_qr(b,theta)": float(z[1]),
             "Z_q(x,Phi_q+r)": float(zn[0]), "Z_q(b,Phi_q+r)": float(zn[1])}
    return UpcrossLaplace(
        IdentityValue(float(z[0] / z[1]), Source.UPCROSS_INFINITE, trace),
        IdentityValue(float(zn[0] / zn[1]), Source.UPCROSS_NO_BAILOUT, dict(trace)),
    )


def _h_infinite(model, q, r, y):
    ctxp = scale_context(model, q + r)
    pq = phi_inverse(model, q)
    Zp, Wp, Zbp = float(ctxp.Z(y)), float(ctxp.W(y)), float(ctxp.Zbar(y))
    zphi = float(ctxp.Ztheta(y, pq))
    if q > 0:
        z2 = float(_z_qr_minus_r(ctxp, q, r, y))
        inner = (q / pq**2 + (-y * Zp + Zbp) / Wp * zphi
                 + (y * pq - 1.0) * q / pq**2 * z2 + r / pq * Zbp)
        return r / (q + r) * inner
    return ((-y * Zp + Zbp) / Wp * zphi + (y * pq - 1.0) / pq**2 * r * (zphi - Zp)
            + r / pq * Zbp)


def _k(model, q, r, y):
    ctx = scale_context(model, q)
    kp = model.kappa_prime_zero()
    pqr = phi_inverse(model, q + r)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return r / (q + r) * (ctx.Zbar(y) - kp * ctx.Wbar(y) - kp / (q + r) * (ctx.Ztheta(y, pqr) - ctx.Z(y)))


def _h_tilde(model, q, r, y):
    ctx = scale_context(model, q)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return r / (q + r) * (ctx.Zbar(y) + model.kappa_prime_zero() / q)


@dataclass(frozen=True)
class InjectionLimits:
    until_ruin: IdentityValue | None
    until_upcross: IdentityValue | None
    until_upcross_simplified: IdentityValue | None
    total: IdentityValue | None


def injections_until_ruin(model: LevyModel, s: Scenario) -> IdentityValue:
    """Case (i): expected discounted injections until absolute ruin, no barrier."""
    s.need_a("injections until absolute ruin")
    q = s.q
    pq0 = phi_inverse(model, q)
    if not (q > 0 or pq0 > 0):
        raise IdentityError("injections until absolute ruin: needs q > 0, or q = 0 with Phi_0 > 0")
    K = kernels(model, s)
    trace: dict = {}
    parts, H = _H_pair(K, np.array([s.x]), 0.0, trace)
    h1, h2 = K.h_small([s.x], parts)
    if h2 is not None:
        _check("h^a", h1, h2, trace)
    G, _, hinf = _infinite_kernels(model, K, 0.0, trace, with_h=True)
    _positive("G(-a,0)", G, trace)
    trace.update({"H(x,0)": H[0], "h^a(x)": h1[0], "G(-a,0)": G, "h(-a)": hinf})
    val = H[0] / G * hinf - h1[0]
    return IdentityValue(float(val), Source.INJECTIONS_UNTIL_RUIN, trace)


def _need_finite_mean(model, what):
    kp = model.kappa_prime_zero()
    if not math.isfinite(kp):
        raise IdentityError(f"{what}: needs kappa'(0+) > -inf")
    return kp


def injections_until_upcross(model: LevyModel, s: Scenario, simplified=False) -> IdentityValue:
    """Case (ii): expected discounted injections until upcrossing ``b``, no lower barrier."""
    b = s.need_b("injections until upcrossing")
    _need_finite_mean(model, "injections until upcrossing")
    q, r = s.q, s.r
    if simplified and not q > 0:
        raise IdentityError("injections until upcrossing (simplified form): needs q > 0")
    ctx = scale_context(model, q)
    pts = np.array([s.x, b])
    z = _z_q_r(ctx, r, pts)
    k = _h_tilde(model, q, r, pts) if simplified else _k(model, q, r, pts)
    trace = {"Z_qr(x)": float(z[0]), "Z_qr(b)": float(z[1]), "k(x)": float(k[0]), "k(b)": float(k[1])}
    if q > 0:
        # k - h~ is proportional to Z_{q,r}; this fixes the two forms to agree
        diff = _k(model, q, r, pts) - _h_tilde(model, q, r, pts)
        _check("k - h~", diff, -r * model.kappa_prime_zero() / (q * (q + r)) * z, trace)
    val = z[0] / z[1] * k[1] - k[0]
    return IdentityValue(float(val), Source.INJECTIONS_UNTIL_UPCROSS, trace)


def injections_total(model: LevyModel, s: Scenario) -> IdentityValue:
    """Case (iii): expected discounted injections over the infinite horizon (``q > 0``)."""
    _need_finite_mean(model, "total injections")
    q, r = s.q, s.r
    if not q > 0:
        raise IdentityError("total injections over the infinite horizon: needs q > 0")
    ctx = scale_context(model, q)
    pq, pqr = phi_inverse(model, q), phi_inverse(model, q + r)
    z = float(_z_q_r(ctx, r, s.x))
    ht = float(_h_tilde(model, q, r, s.x)[0])
    val = (pqr - pq) / (pqr * pq) * z - ht
    trace = {"Z_qr(x)": z, "h~(x)": ht, "Phi_q": pq, "Phi_q+r": pqr}
    return IdentityValue(float(val), Source.INJECTIONS_TOTAL, trace)


def injections_limits(model: LevyModel, s: Scenario) -> InjectionLimits:
    """All applicable infinite-horizon injection identities; ``None`` where a case does not apply."""
    def attempt(fn, *args):
        try:
            return fn(model, s, *args)
        except IdentityError:
            return None

    return InjectionLimits(
        attempt(injections_until_ruin),
        attempt(injections_until_upcross),
        attempt(injections_until_upcross, True),
        attempt(injections_total),
    )


def _z_qr_deriv(ctx, r, y):
    return z_two_param_deriv(ctx, ctx.q, r, y)


def reflected_dividends_limit(model: LevyModel, s: Scenario) -> IdentityValue:
    """Dividends at barrier ``b`` over the infinite horizon (no lower barrier, ``q > 0``)."""
    b = s.need_b("reflected dividends without lower barrier", x_le_b=False)
    if not s.q > 0:
        raise IdentityError("reflected dividends without lower barrier: needs q > 0")
    ctx = scale_context(model, s.q)
    xe = min(s.x, b)
    z = _z_q_r(ctx, s.r, np.array([xe, b]))
    zd = float(_z_qr_deriv(ctx, s.r, b))
    val = z[0] / zd + max(s.x - b, 0.0)
    trace = {"Z_qr(x)": float(z[0]), "Z_qr'(b)": zd}
    return IdentityValue(float(val), Source.REFLECTED_DIVIDENDS_LIMIT, trace)


def reflected_injections_limit(model: LevyModel, s: Scenario) -> IdentityValue:
    """Injections with reflection at ``b`` over the infinite horizon (``q > 0``)."""
    b = s.need_b("reflected injections without lower barrier", x_le_b=False)
    _need_finite_mean(model, "reflected injections without lower barrier")
    q, r = s.q, s.r
    if not q > 0:
        raise IdentityError("reflected injections without lower barrier: needs q > 0")
    ctx = scale_context(model, q)
    xe = min(s.x, b)
    z = float(_z_q_r(ctx, r, xe))
    zd = float(_z_qr_deriv(ctx, r, b))
    zb = float(ctx.Z(b))
    ht = float(_h_tilde(model, q, r, xe)[0])
    val = r / (q + r) * z / zd * zb - ht
    trace = {"Z_qr(x)": z, "Z_qr'(b)": zd, "Z_q(b)": zb, "h~(x)": ht}
    return IdentityValue(float(val), Source.REFLECTED_INJECTIONS_LIMIT, trace)


# ---------------------------------------------------------------------------
# auxiliary functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UFamily:
    u1: float
    u2: float
    u3: float
    trace: dict


def building_blocks_u(model: LevyModel, s: Scenario) -> UFamily:
    """``u_1, u_2, u_3`` at ``x <= 0`` for the unreflected process killed at rate ``r``."""
    a = s.need_a("auxiliary u functions")
    x, theta = s.x, s.theta
    if x > 0:
        raise IdentityError(f"auxiliary u functions are stated for x <= 0, got x={x}")
    trace: dict = {}
    if x < a:
        return UFamily(0.0, 0.0, 1.0, trace)
    K = kernels(model, s)
    if K.closed is None:
        u1, u2, u3 = _u_integral(K, x, theta, trace)
    else:
        # at x <= 0: u2 = W^a / W_{q+r}(-a), u3 = I and u1 = H - u2
        pt = np.array([x])
        u2 = float(K.closed.wa_normalised(pt)[0])
        u3 = float(K.closed.I(pt)[0])
        u1 = float(K.closed.H(pt, theta)[0]) - u2
        if K.well_conditioned(pt):
            g1, g2, g3 = _u_integral(K, x, theta, trace)
            for name, mine, other in (("u1", u1, g1), ("u2", u2, g2), ("u3", u3, g3)):
                _check(name + " cross", mine, other, trace, CROSS_CHECK_RTOL)
        else:
            trace["cross_check"] = "skipped: ill-conditioned"
    return UFamily(float(u1), float(u2), float(u3), trace)


def _u_integral(K: Kernels, x, theta, trace):
    ctxp, q, r, a = K.ctxp, K.q, K.r, K.a
    Wp = lambda v: float(ctxp.W(v))  # noqa: E731
    Wpa = Wp(-a)
    Lpa = float(ctxp.tilted(-a, theta))
    tail = integrate(lambda u: np.exp(-theta * u) * ctxp.W(x + u), 0.0, -a, breakpoints=(-x,),
                     noise=K.noise)
    u1 = r * (Wp(x - a) * Lpa / Wpa - tail)
    if theta == 0:
        closed = r * Wp(x - a) / Wpa * float(ctxp.Wbar(-a)) - r / (q + r) * (
            float(ctxp.Z(x - a)) - float(ctxp.Z(x)))
        _check("u1(x,a,0)", u1, closed, trace)
    u2 = Wp(x - a) / Wpa
    u3 = float(ctxp.Z(x - a)) - Wp(x - a) * float(ctxp.Z(-a)) / Wpa
    return u1, u2, u3


@dataclass(frozen=True)
class U0Family:
    U1: float
    U2: float
    U3: float
    U4: float
    trace: dict


def building_blocks_U0(model: LevyModel, s: Scenario) -> U0Family:
    """``U_1^0 .. U_4^0`` at ``x``; ``U_1`` uses the nested ``u``-integral."""
    K = kernels(model, s)
    x, theta = s.x, s.theta
    trace: dict = {}
    parts = K.shifted([x])
    wa = parts[0]
    Lpa = float(K.ctxp.tilted(-K.a, theta))
    U1 = -K.r * (wa / K.Wpa * Lpa - K.A_nested([x], theta))
    if theta == 0:
        q, r = K.q, K.r
        closed = -r / (q + r) * (K.ctx.Z(x) - parts[1] + (q + r) * K.Wbpa / K.Wpa * wa)
        _check("U1(a,x,0)", U1, closed, trace)
    U2 = -wa / K.Wpa
    U3 = -K.I([x], parts)
    h1, h2 = K.h_small([x], parts)
    if h2 is not None:
        _check("h^a", h1, h2, trace)
    trace["H(x)"] = float(K.H([x], theta, wa)[0])
    return U0Family(float(U1[0]), float(U2[0]), float(U3[0]), float(-h1[0]), trace)


# ---------------------------------------------------------------------------
# registry used by the command line and the verification suite
# ---------------------------------------------------------------------------

def _u_entry(i):
    def fn(model, s):
        fam = building_blocks_u(model, s)
        return IdentityValue(getattr(fam, f"u{i}"), Source.AUXILIARY, fam.trace)
    return fn


def _kernel_entry(fn):
    def wrapped(model, s):
        return IdentityValue(fn(model, s, s.x), Source.KERNEL, {})
    return wrapped


IDENTITIES = {
    "g": lambda m, s: two_sided_exit(m, s).g,
    "h": lambda m, s: two_sided_exit(m, s).h,
    "f": injections_killed,
    "ruin_laplace": ruin_infinite,
    "upcross_laplace": lambda m, s: upcross_infinite(m, s).laplace_with_R,
    "upcross_no_bailout": lambda m, s: upcross_infinite(m, s).laplace_no_bailout,
    "injections_i": injections_until_ruin,
    "injections_ii": injections_until_upcross,
    "injections_ii_simplified": lambda m, s: injections_until_upcross(m, s, True),
    "injections_iii": injections_total,
    "h_hat": reflected_ruin_laplace,
    "j_hat": reflected_dividends,
    "j_hat_limit": reflected_dividends_limit,
    "f_hat": reflected_injections,
    "f_hat_limit": reflected_injections_limit,
    "u1": _u_entry(1),
    "u2": _u_entry(2),
    "u3": _u_entry(3),
    "H": _kernel_entry(kernel_H),
    "I": _kernel_entry(kernel_I),
    "H_deriv": _kernel_entry(kernel_H_deriv),
    "I_deriv": _kernel_entry(kernel_I_deriv),
}

#: identities whose values are Laplace transforms / probabilities
LAPLACE_IDENTITIES = ("g", "h", "ruin_laplace", "upcross_laplace", "upcross_no_bailout",
                      "h_hat", "u1", "u2", "u3")


def evaluate(name: str, model: LevyModel, s: Scenario) -> IdentityValue:
    try:
        fn = IDENTITIES[name]
    except KeyError:
        raise IdentityError(f"unknown identity {name!r}; choose from {', '.join(IDENTITIES)}") from None
    return fn(model, s)

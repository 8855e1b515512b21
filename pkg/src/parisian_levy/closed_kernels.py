"""Closed forms of the ``a``-kernels for rational Laplace exponents.

With ``W_q = sum_i alpha_i e^{beta_i x}`` and ``W_{q+r} = sum_j gamma_j
e^{rho_j x}`` every convolution against ``W_q`` is explicit.  Because
``kappa(rho_j) = q + r`` the convolution terms growing like ``e^{rho_j y}``
cancel identically, e.g. for ``y >= 0``

    W^a(y) = sum_j gamma_j e^{-rho_j a} F_j(y),
    F_j(y) = r sum_i alpha_i e^{beta_i y} / (rho_j - beta_i).

Combinations such as ``Z^a(y) - W^a(y) Z_{q+r}(-a) / W_{q+r}(-a)`` are then
written as double sums over pairs of poles whose diagonal vanishes, so no
quantity of the size of ``W_{q+r}(-a)`` is ever subtracted.  This keeps the
kernels accurate for deep ``a`` and large ``y``, where the integral
representations lose every digit.

All methods take a 1-d array ``y``; below ``a`` the kernels take their
trivial values (``W^a = 0``, ``Z^a = 1``, ``Zbar^a = y - a``, ``I = 1``,
``H = h^a = 0``).
"""
from __future__ import annotations

import math

import numpy as np

from .scale import ScaleContext, _phi1

#: largest ``Phi_{q+r} |a|`` handled without overflow
MAX_EXPONENT = 600.0


def _below(fill):
    """Evaluate at ``max(y, a)`` and overwrite ``y < a`` with ``fill(y, self.a)``."""

    def wrap(fn):
        def inner(self, y, *args):
            y = np.atleast_1d(np.asarray(y, dtype=float))
            low = y < self.a
            if not low.any():
                return fn(self, y, *args)
            out = fn(self, np.where(low, self.a, y), *args)
            if isinstance(out, tuple):
                return tuple(np.where(low, f, o) for f, o in zip(fill(y, self.a), out))
            return np.where(low, fill(y, self.a), out)

        inner.__doc__ = fn.__doc__
        return inner

    return wrap


def _zero(y, a):
    return np.zeros_like(y)


def _one(y, a):
    return np.ones_like(y)


class ClosedKernels:
    def __init__(self, ctx: ScaleContext, ctxp: ScaleContext, r: float, a: float):
        es, esp = ctx._expsum, ctxp._expsum
        if es is None or esp is None:
            raise ValueError("closed kernels need partial fractions for W_q and W_{q+r}")
        self.ctx = ctx
        self.q, self.r, self.a = ctx.q, float(r), float(a)
        self.p = self.q + self.r
        self.kp = ctx.model.kappa_prime_zero()
        self.alpha, self.beta = es.coef, es.rates
        self.c1 = es.linear
        self.gamma, self.rho = esp.coef, esp.rates
        self.g = self.gamma * np.exp(-self.rho * a)
        self.Wpa = float(self.g.sum().real)
        self.w = self.g / self.Wpa
        n = len(self.rho)
        self.off = ~np.eye(n, dtype=bool)
        # C[k, i] = alpha_i / (rho_k - beta_i)
        self.C = self.alpha[None, :] / (self.rho[:, None] - self.beta[None, :])
        # D[j, k, i] = alpha_i (rho_j - rho_k) / ((rho_k - beta_i)(rho_j - beta_i)) = C[k,i] - C[j,i]
        self.D = self.C[None, :, :] - self.C[:, None, :]

    @staticmethod
    def supported(ctx: ScaleContext, ctxp: ScaleContext, a: float) -> bool:
        return (ctx._expsum is not None and ctxp._expsum is not None
                and ctxp.phi * abs(a) <= MAX_EXPONENT)

    # -- building blocks -------------------------------------------------------

    # F_k(0) = 1, F_k'(0) = rho_k - r W_q(0) and F_k(0) - F_j(0) = 0 hold exactly; writing
    # every sum as that value plus sum_i (...) expm1(beta_i y) keeps the coefficient
    # rounding out of small y, where the pair sums multiply it by w_j ~ 1 / W_{q+r}(-a).

    def _em1(self, y, order=0):
        e = np.expm1(self.beta[:, None] * y[None, :])
        return e * self.beta[:, None] ** order

    def _F(self, y, order=0):
        """``F_k(y)`` (or its derivative), shape ``(k, n)``, ``y >= 0``."""
        out = self.r * (self.C @ self._em1(y, order))
        if order:
            return out + (self.rho - self.r * self.ctx.w_zero)[:, None]
        if self.c1:
            # contribution of a linear term c1 x of W_q
            out = out + self.r * self.c1 * y[None, :] / self.rho[:, None]
        return 1.0 + out

    def _Fdiff(self, y, order=0):
        """``F_k(y) - F_j(y)`` as ``(j, k, n)``, computed without cancellation."""
        out = self.r * np.einsum("jki,in->jkn", self.D, self._em1(y, order))
        if order:
            return out + (self.rho[None, :] - self.rho[:, None])[:, :, None]
        if self.c1:
            inv = 1.0 / self.rho
            out = out + (self.r * self.c1 * (inv[None, :] - inv[:, None]))[:, :, None] * y
        return out

    def _P(self, y):
        """``gamma_k e^{rho_k (y - a)}``, shape ``(k, n)``, ``a <= y < 0``."""
        return self.gamma[:, None] * np.exp(self.rho[:, None] * (y[None, :] - self.a))

    def _pair(self, u, y, order=0):
        """``sum_{j != k} w_j g_k u_k (V_k(y) - V_j(y))`` with ``V = F`` (or ``F'``) for ``y >= 0``
        and ``V = e^{rho y}`` for ``y < 0`` (values only)."""
        out = np.zeros(y.shape, dtype=complex)
        pos = y >= 0
        if pos.any():
            M = self.w[:, None] * (self.g * u)[None, :] * self.off
            out[pos] = np.einsum("jk,jkn->n", M, self._Fdiff(y[pos], order))
        neg = ~pos
        if neg.any():
            P = self._P(y[neg])
            ug = self.g * u
            # w_j g_k (e^{rho_k y} - e^{rho_j y}) = w_j u_k P_k - u_k g_k P_j / Wpa
            first = np.einsum("jk,kn->n", self.w[:, None] * u[None, :] * self.off, P)
            second = np.einsum("jk,jn->n", (ug[None, :] / self.Wpa) * self.off, P)
            out[neg] = first - second
        return out.real

    def _wa_n(self, y, order=0):
        """``W^a(y) / W_{q+r}(-a)`` and its derivative."""
        out = np.zeros(y.shape)
        pos = y >= 0
        if pos.any():
            # sum_k w_k F_k = F_0 + sum_k w_k (F_k - F_0) since sum_k w_k = 1
            yp = y[pos]
            out[pos] = (self._F(yp, order)[0] + self.w @ self._Fdiff(yp, order)[0]).real
        neg = ~pos
        if neg.any():
            P = self._P(y[neg]) * self.rho[:, None] ** order
            out[neg] = P.sum(axis=0).real / self.Wpa
        return out

    def _T(self, theta):
        """``int_0^{-a} e^{(rho_k - theta) u} du``."""
        L = -self.a
        return L * _phi1((self.rho - theta) * L)

    # -- public kernels ----------------------------------------------------------

    @_below(_zero)
    def wa_normalised(self, y):
        return self._wa_n(np.asarray(y, dtype=float))

    @_below(_zero)
    def wa_normalised_deriv(self, y):
        return self._wa_n(np.asarray(y, dtype=float), 1)

    @_below(lambda y, a: (_zero(y, a), _one(y, a), y - a))
    def shifted(self, y):
        """``(W^a, Z^a, Zbar^a)`` at ``y >= a``."""
        y = np.asarray(y, dtype=float)
        wa = self.Wpa * self._wa_n(y)
        za = np.empty_like(y)
        zba = np.empty_like(y)
        p = self.p
        pos = y >= 0
        if pos.any():
            F = self._F(y[pos])
            za[pos] = ((self.g * p / self.rho) @ F).real
            wbar = self.ctx.Wbar(y[pos])
            zba[pos] = ((self.g * p / self.rho**2) @ F).real - self.kp / p * (1.0 - self.r * wbar)
        neg = ~pos
        if neg.any():
            P = self._P(y[neg])
            za[neg] = ((p / self.rho) @ P).real
            zba[neg] = ((p / self.rho**2) @ P).real - self.kp / p
        return wa, za, zba

    @_below(_one)
    def I(self, y):
        y = np.asarray(y, dtype=float)
        return self._pair(self.p / self.rho, y)

    @_below(_zero)
    def I_deriv(self, y):
        y = np.asarray(y, dtype=float)
        return self._pair(self.p / self.rho, y, 1)

    @_below(_zero)
    def H(self, y, theta):
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        r = self.r
        T = self._T(theta)
        pos = y >= 0
        if pos.any():
            yp = y[pos]
            M = self.w[:, None] * (self.gamma * T)[None, :] * self.off
            pairs = np.einsum("jk,jkn->n", M, self._Fdiff(yp)).real
            out[pos] = -r * pairs + self._wa_n(yp)
        neg = ~pos
        if neg.any():
            out[neg] = r * self._H_neg_pairs(y[neg], theta, T) + self._wa_n(y[neg])
        return out

    def _H_neg_pairs(self, y, theta, T):
        # sum_{j,k} w_j gamma_k (e^{rho_j y} T_k - e^{theta y} R_k(y)), R_k = int_0^{y-a} e^{(rho_k-theta) v} dv
        rho, gam = self.rho, self.gamma
        P = self._P(y)                          # gamma_j e^{rho_j (y-a)} = Wpa w_j e^{rho_j y}
        L = y - self.a
        R = L[None, :] * _phi1((rho[:, None] - theta) * L[None, :])
        et = np.exp(theta * y)
        off = (np.einsum("jk,jn->n", (gam * T)[None, :] * self.off, P) / self.Wpa
               - et * np.einsum("jk,kn->n", self.w[:, None] * gam[None, :] * self.off, R))
        # diagonal: w_k gamma_k e^{theta y} int_y^0 e^{(rho_k - theta) v} dv
        c = rho[:, None] - theta
        z = c * y[None, :]
        small = np.abs(z) < 1.0
        safe_c = np.where(small, 1.0, c)
        series = (self.w * gam)[:, None] * et[None, :] * (-y[None, :]) * _phi1(np.where(small, z, 0.0))
        direct = gam[:, None] * (self.w[:, None] * et[None, :] - P / self.Wpa) / safe_c
        diag = np.where(small, series, direct).sum(axis=0)
        return (off + diag).real

    @_below(_zero)
    def H_deriv(self, y, theta):
        """Right derivative in ``y > 0``."""
        y = np.asarray(y, dtype=float)
        T = self._T(theta)
        M = self.w[:, None] * (self.gamma * T)[None, :] * self.off
        pairs = np.einsum("jk,jkn->n", M, self._Fdiff(y, 1)).real
        return -self.r * pairs + self._wa_n(y, 1)

    @_below(_zero)
    def H0_closed(self, y):
        y = np.asarray(y, dtype=float)
        q, r = self.q, self.r
        return (-r * self.I(y) + q * self._wa_n(y) + r * self.ctx.Z(y)) / (q + r)

    @_below(lambda y, a: (_zero(y, a), _zero(y, a)))
    def H0_deriv_closed(self, y):
        """Both closed forms of ``H'(y, 0)`` at ``y > 0``."""
        y = np.asarray(y, dtype=float)
        q, r, p = self.q, self.r, self.p
        base = self._wa_n(y, 1) + r * self.ctx.W(y)
        # Z_{q+r}(-a) (W^a' / W_{q+r}(-a) + r W_q) - (q+r) W^a, using F' + r W_q = rho F
        M = (self.g[:, None] * self.w[None, :]) * ((self.rho[:, None] - self.rho[None, :]) / self.rho[None, :]) * self.off
        bracket = p * np.einsum("jk,jn->n", M, self._F(y)).real
        first = r / p * bracket + q / p * base
        second = (q * base - r * self.I_deriv(y)) / p
        return first, second

    def _X(self, y, order=0):
        # Zbar_{q+r}(-a) W^a / W_{q+r}(-a) - Zbar^a and its derivative
        u = self.p / self.rho**2
        wa = self._wa_n(y, order)
        if order == 0:
            tail = wa - 1.0 + self.r * np.where(y >= 0, self.ctx.Wbar(np.maximum(y, 0.0)), 0.0)
        else:
            tail = wa + self.r * self.ctx.W(y)
        return -self._pair(u, y, order) - self.kp / self.p * tail

    @_below(_zero)
    def h_small(self, y):
        y = np.asarray(y, dtype=float)
        k = self.r / self.p
        return k * (self.ctx.Zbar(y) + self._X(y) - self.a * self.I(y))

    @_below(_zero)
    def h_small_deriv(self, y):
        y = np.asarray(y, dtype=float)
        k = self.r / self.p
        return k * (self.ctx.Z(y) + self._X(y, 1) - self.a * self.I_deriv(y))


# ---------------------------------------------------------------------------
# infinite-horizon kernels at y = -a
# ---------------------------------------------------------------------------
#
# With E_j = gamma_j e^{rho_j y}, W = W_{q+r}(y) = sum_j E_j, w_j = E_j / W
# and phi = Phi_q one has Z_{q+r}(y, phi) = r sum_j E_j / (rho_j - phi) and
# Z_{q+r}(y) = (q+r) sum_j E_j / rho_j.  Each kernel below is a difference
# of products of such sums; written as a sum over ordered pairs of poles its
# diagonal cancels, leaving terms of size E_j w_k, which stay bounded.

class InfiniteClosed:
    """``G(y, theta)``, ``J(y)`` and the injection kernel at one point ``y > 0``."""

    def __init__(self, ctxp: ScaleContext, q: float, r: float, phi: float, y: float):
        es = ctxp._expsum
        if es is None:
            raise ValueError("closed forms need partial fractions for W_{q+r}")
        self.q, self.r, self.p, self.phi, self.y = q, r, q + r, phi, float(y)
        self.kp = ctxp.model.kappa_prime_zero()
        self.gamma, self.rho = es.coef, es.rates
        self.E = self.gamma * np.exp(self.rho * self.y)
        self.W = float(self.E.sum().real)
        self.w = self.E / self.W
        self.off = ~np.eye(len(self.rho), dtype=bool)
        # E_j w_k, the bounded pair weight
        self.Ew = self.E[:, None] * self.w[None, :]

    def _pairs(self, M):
        return float((M * self.off).sum().real)

    def z_ratio(self):
        """``Z_{q+r}(y, Phi_q) / W_{q+r}(y)``."""
        return self.r * float((self.w / (self.rho - self.phi)).sum().real)

    def G(self, theta):
        rho, phi, y = self.rho, self.phi, self.y
        rj, rk = rho[:, None], rho[None, :]
        c = rho - theta
        z = c * y
        small = np.abs(z) < 1.0
        safe_c = np.where(small, 1.0, c)
        # X_jk = w_j int_0^y e^{-theta u} gamma_k e^{rho_k u} du, computed without overflow
        series = self.w[:, None] * (self.gamma * y * _phi1(np.where(small, z, 0.0)))[None, :]
        direct = ((self.E[:, None] * self.w[None, :]) * math.exp(-theta * y)
                  - self.w[:, None] * self.gamma[None, :]) / safe_c[None, :]
        X = np.where(small[None, :], series, direct)
        S = self._pairs(X * (rk - rj) / ((rj - phi) * (rk - phi)))
        return self.r**2 * S + self.z_ratio()

    def J(self):
        rho, phi = self.rho, self.phi
        rj, rk = rho[:, None], rho[None, :]
        return self.r * self.p * self._pairs(self.Ew * (rk - rj) / ((rj - phi) * rj * rk))

    def h(self):
        rho, phi, y, q, r, p, kp = self.rho, self.phi, self.y, self.q, self.r, self.p, self.kp
        rj, rk = rho[:, None], rho[None, :]
        D = r * p * self._pairs(self.Ew * (y * rj - 1.0) / rj**2 * (rk - rj) / ((rj - phi) * (rk - phi)))
        inner = q / phi**2 - kp / p * (self.z_ratio() + r / phi) + D
        return r / p * inner

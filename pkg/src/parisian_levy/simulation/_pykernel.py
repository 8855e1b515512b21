"""Pure-Python path kernel.

This is the reference implementation of the per-path simulation; the
compiled kernel (``_ckernel``) is a line-by-line transliteration and must
produce bit-identical outcomes.  Only this version can record an event
trace.

Path construction
-----------------
Jumps and Poisson observations form one merged stream with exponential
inter-arrival times.  Between two events the path is continuous:

* bounded variation: a straight line with slope ``drift``, handled exactly;
* unbounded variation: Brownian motion with drift, built by midpoint
  (Lévy) refinement of the increment over the whole inter-event interval
  down to dyadic cells no longer than ``step``.  A cell whose Brownian
  bridge reaches a level with probability below ``exp(-SKIP)`` is not
  refined further.  In the finest cells level crossings are decided
  with the exact bridge crossing probability and, under reflection at
  ``b``, the bridge maximum is sampled exactly.  Halving ``step`` keeps
  every coarser node, so runs at ``step`` and ``step / 2`` are coupled.
"""
from __future__ import annotations

import math

import numpy as np

from ._rng import (
    BROWNIAN,
    EVENTS,
    LEAF_DOWN,
    LEAF_TIE,
    LEAF_UP,
    path_key,
    normal,
    uniform,
)

# stop reasons
UP = 0
RUIN = 1
HORIZON = 2
CLOCK = 3

# modes
PARISIAN = 0
BARRIER = 1
KILLED = 2

SKIP = 40.0
MAX_DEPTH = 40
NODE_BITS = 42


class Params:
    """Flat simulation parameters shared by both kernels."""

    __slots__ = ("sigma", "drift", "rates", "laws", "p1", "p2", "q", "r", "a", "b",
                 "x", "mode", "horizon", "step", "seed", "antithetic")

    def __init__(self, **kw):
        for name in self.__slots__:
            setattr(self, name, kw[name])


def _jump_size(P, key, ev, flip):
    """Sample the component and magnitude of a jump; returns ``(size, ev)``."""
    u = uniform(key, EVENTS, ev, flip)
    ev += 1
    n = len(P.rates)
    lam = 0.0
    for i in range(n):
        lam += P.rates[i]
    v = u * lam
    j = n - 1
    for i in range(n - 1):
        if v < P.rates[i]:
            j = i
            break
        v -= P.rates[i]
    law = P.laws[j]
    if law == 0:
        size = -P.p1[j] * math.log(uniform(key, EVENTS, ev, flip))
        ev += 1
    elif law == 1:
        k = int(P.p1[j])
        acc = 0.0
        for _ in range(k):
            acc += math.log(uniform(key, EVENTS, ev, flip))
            ev += 1
        size = -(P.p2[j] / k) * acc
    elif law == 2:
        size = P.p1[j]
    else:
        size = P.p1[j] + (P.p2[j] - P.p1[j]) * uniform(key, EVENTS, ev, flip)
        ev += 1
    return size, ev


def run_path(P, index, trace=None):
    """Simulate one path.

    Returns
    -------
    tuple
        ``(reason, stop_time, disc_injections, disc_dividends, injections,
        n_injections, level)``; ``level`` is the process value at the stop.
    """
    if P.antithetic:
        key = path_key(P.seed, index >> 1)
        flip = (index & 1) == 1
    else:
        key = path_key(P.seed, index)
        flip = False
    sigma, drift, q, r, a, b = P.sigma, P.drift, P.q, P.r, P.a, P.b
    mode = P.mode
    upper = 0.0 if mode == KILLED else b
    lam = 0.0
    for rate in P.rates:
        lam += rate
    total = lam + r
    s2 = sigma * sigma

    t = 0.0
    y = P.x
    xfree = P.x
    inj = 0.0
    dinj = 0.0
    ddiv = 0.0
    ninj = 0
    ev = 0
    k = 0

    def log(kind, level, detail="", x_now=None):
        if trace is not None:
            xv = xfree if x_now is None else x_now
            trace.append((t, kind, level, f"X={xv!r} R={inj!r} L={ldiv!r}" + (" " + detail if detail else "")))

    ldiv = 0.0
    if y < a:
        log("HIT_A", y)
        return (RUIN, 0.0, 0.0, 0.0, 0.0, 0, y)
    if mode != BARRIER and y >= upper:
        log("HIT_B", y)
        return (UP, 0.0, 0.0, 0.0, 0.0, 0, y)
    if mode == BARRIER and y > b:
        ldiv = y - b
        ddiv = y - b
        y = b
        log("BARRIER_ENTER", y, "overshoot")

    while True:
        dt = -math.log(uniform(key, EVENTS, ev, flip)) / total
        ev += 1
        t_next = t + dt
        capped = t_next >= P.horizon
        if capped:
            t_next = P.horizon
        span = t_next - t

        # ---- continuous motion over [t, t_next) ----
        if sigma == 0.0:
            rise = drift * span
            if mode == BARRIER:
                if y + rise > b:
                    te = t + (b - y) / drift
                    if y < b:
                        t_save, t = t, te
                        # the free process has risen by b - y since the last event
                        log("BARRIER_ENTER", b, x_now=xfree + (b - y))
                        t = t_save
                    if q > 0.0:
                        ddiv += drift * (math.exp(-q * te) - math.exp(-q * t_next)) / q
                    else:
                        ddiv += drift * (t_next - te)
                    ldiv += drift * (t_next - te)
                    y = b
                else:
                    y += rise
            else:
                if y + rise >= upper:
                    ts = t + (upper - y) / drift
                    xfree += upper - y
                    y = upper
                    t = ts
                    log("HIT_B", y)
                    return (UP, ts, dinj, ddiv, inj, ninj, y)
                y += rise
            xfree += rise
        else:
            depth = 0
            cell = span
            while depth < MAX_DEPTH and cell > P.step:
                cell *= 0.5
                depth += 1
            base = k << NODE_BITS
            w1 = drift * span + sigma * math.sqrt(span) * normal(key, BROWNIAN, base, flip)
            # stack entries: node, level, tl, xl, tr, xr (x relative to interval start)
            stack = [(1, 0, 0.0, 0.0, span, w1)]
            while stack:
                node, lev, tl, xl, tr, xr = stack.pop()
                dlt = tr - tl
                dx = xr - xl
                yend = y + dx
                var = s2 * dlt
                if mode == BARRIER:
                    quiet_up = yend < b and 2.0 * (b - y) * (b - yend) > SKIP * var
                else:
                    quiet_up = yend < upper and 2.0 * (upper - y) * (upper - yend) > SKIP * var
                quiet_dn = yend > a and 2.0 * (y - a) * (yend - a) > SKIP * var
                if quiet_up and quiet_dn:
                    y = yend
                    xfree += dx
                    continue
                if lev < depth:
                    tm = 0.5 * (tl + tr)
                    xm = 0.5 * (xl + xr) + sigma * math.sqrt(0.25 * dlt) * normal(key, BROWNIAN, base | node, flip)
                    stack.append((2 * node + 1, lev + 1, tm, xm, tr, xr))
                    stack.append((2 * node, lev + 1, tl, xl, tm, xm))
                    continue
                # finest cell
                cid = base | node
                t0 = t + tl
                if mode == BARRIER:
                    dl = 0.0
                    if not quiet_up:
                        u = uniform(key, LEAF_UP, cid, flip)
                        top = 0.5 * (dx + math.sqrt(dx * dx - 2.0 * var * math.log(u)))
                        if y + top > b:
                            dl = y + top - b
                            ldiv += dl
                            ddiv += math.exp(-q * (t0 + 0.5 * dlt)) * dl
                    yend = y + dx - dl
                    xfree += dx
                    if yend < a:
                        t = t0 + dlt * (y - a) / (y - yend)
                        y = yend
                        log("HIT_A", y)
                        return (RUIN, t, dinj, ddiv, inj, ninj, y)
                    if not quiet_dn:
                        p_dn = math.exp(-2.0 * (y - a) * (yend - a) / var)
                        if uniform(key, LEAF_DOWN, cid, flip) < p_dn:
                            t = t0 + 0.5 * dlt
                            y = yend
                            log("HIT_A", y)
                            return (RUIN, t, dinj, ddiv, inj, ninj, y)
                    y = yend
                    if trace is not None:
                        t_save, t = t, t0 + dlt
                        log("EULER", y, f"dL={dl!r}")
                        t = t_save
                    continue
                xfree += dx
                if yend >= upper:
                    t = t0 + dlt * (upper - y) / dx
                    y = yend
                    log("HIT_B", y)
                    return (UP, t, dinj, ddiv, inj, ninj, y)
                if yend < a:
                    t = t0 + dlt * (y - a) / (y - yend)
                    y = yend
                    log("HIT_A", y)
                    return (RUIN, t, dinj, ddiv, inj, ninj, y)
                hit_up = False
                hit_dn = False
                p_up = 0.0
                p_dn = 0.0
                if not quiet_up:
                    p_up = math.exp(-2.0 * (upper - y) * (upper - yend) / var)
                    hit_up = uniform(key, LEAF_UP, cid, flip) < p_up
                if not quiet_dn:
                    p_dn = math.exp(-2.0 * (y - a) * (yend - a) / var)
                    hit_dn = uniform(key, LEAF_DOWN, cid, flip) < p_dn
                if hit_up and hit_dn:
                    if uniform(key, LEAF_TIE, cid, flip) * (p_up + p_dn) < p_up:
                        hit_dn = False
                    else:
                        hit_up = False
                if hit_up:
                    t = t0 + 0.5 * dlt
                    y = yend
                    log("HIT_B", y, "bridge")
                    return (UP, t, dinj, ddiv, inj, ninj, y)
                if hit_dn:
                    t = t0 + 0.5 * dlt
                    y = yend
                    log("HIT_A", y, "bridge")
                    return (RUIN, t, dinj, ddiv, inj, ninj, y)
                y = yend
                if trace is not None:
                    t_save, t = t, t0 + dlt
                    log("EULER", y)
                    t = t_save

        t = t_next
        k += 1
        if capped:
            log("HORIZON", y)
            return (HORIZON, t, dinj, ddiv, inj, ninj, y)

        # ---- event at t ----
        u = uniform(key, EVENTS, ev, flip)
        ev += 1
        if u * total < r:
            log("OBSERVE", y)
            if mode == KILLED:
                return (CLOCK, t, dinj, ddiv, inj, ninj, y)
            if y < 0.0:
                deficit = -y
                inj += deficit
                dinj += math.exp(-q * t) * deficit
                ninj += 1
                y = 0.0
                log("INJECT", y, f"amount={deficit!r}")
        else:
            size, ev = _jump_size(P, key, ev, flip)
            was_at_b = mode == BARRIER and y == b
            y -= size
            xfree -= size
            log("JUMP", y, f"size={size!r}")
            if was_at_b and sigma == 0.0:
                log("BARRIER_EXIT", y)
            if y < a:
                log("HIT_A", y)
                return (RUIN, t, dinj, ddiv, inj, ninj, y)


def run_batch_arrays(P, start, stop):
    """Outcomes of paths ``start .. stop - 1`` as a tuple of arrays.

    Same layout as the compiled kernel: ``(reason, time, disc_injections,
    disc_dividends, injections, n_injections, level)``.
    """
    rows = [run_path(P, i) for i in range(start, stop)]
    cols = list(zip(*rows)) if rows else [()] * 7
    return (
        np.array(cols[0], dtype=np.int8),
        np.array(cols[1], dtype=float),
        np.array(cols[2], dtype=float),
        np.array(cols[3], dtype=float),
        np.array(cols[4], dtype=float),
        np.array(cols[5], dtype=np.int64),
        np.array(cols[6], dtype=float),
    )

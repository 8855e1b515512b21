# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path kernel.

Line-by-line transliteration of ``_pykernel.run_path`` without the event
trace.  Floating point operations are issued in the same order so the two
kernels agree bit for bit; the extension is built with contraction of
multiply-adds disabled for that reason.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, sqrt, cos
from libc.stdint cimport uint64_t, int64_t, int8_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t STREAM_MUL = 0xD1B54A32D192ED03ULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0

cdef enum:
    EVENTS = 0
    BROWNIAN = 1
    LEAF_UP = 2
    LEAF_DOWN = 3
    LEAF_TIE = 4
    UP = 0
    RUIN = 1
    HORIZON = 2
    CLOCK = 3
    BARRIER = 1
    KILLED = 2
    MAX_DEPTH = 40
    NODE_BITS = 42
    STACK = 128
    MAX_JUMPS = 16

cdef double SKIP = 40.0


cdef struct Par:
    double sigma
    double drift
    int njumps
    double rates[MAX_JUMPS]
    int laws[MAX_JUMPS]
    double p1[MAX_JUMPS]
    double p2[MAX_JUMPS]
    double q
    double r
    double a
    double b
    double x
    int mode
    double horizon
    double step
    uint64_t seed
    bint antithetic


cdef struct Out:
    int reason
    double time
    double dinj
    double ddiv
    double inj
    int64_t ninj
    double level


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t path_key(uint64_t seed, uint64_t index) noexcept nogil:
    return mix64(mix64(seed) + index * GOLDEN)


cdef inline uint64_t draw(uint64_t key, uint64_t stream, uint64_t ctr) noexcept nogil:
    return mix64((key ^ (stream * STREAM_MUL)) + ctr * GOLDEN)


cdef inline double uniform(uint64_t key, uint64_t stream, uint64_t ctr, bint flip) noexcept nogil:
    cdef double u = (<double>(draw(key, stream, ctr) >> 11) + 0.5) * INV_2_53
    if flip:
        return 1.0 - u
    return u


cdef inline double normal(uint64_t key, uint64_t stream, uint64_t ctr, bint flip) noexcept nogil:
    cdef uint64_t c2 = 2 * ctr
    cdef double u1 = (<double>(draw(key, stream, c2) >> 11) + 0.5) * INV_2_53
    cdef double u2 = (<double>(draw(key, stream, c2 + 1) >> 11) + 0.5) * INV_2_53
    cdef double z = sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)
    if flip:
        return -z
    return z


cdef double jump_size(const Par* P, uint64_t key, uint64_t* ev, bint flip) noexcept nogil:
    cdef double u = uniform(key, EVENTS, ev[0], flip)
    ev[0] += 1
    cdef int n = P.njumps
    cdef double lam = 0.0
    cdef int i, j, k, law
    cdef double v, size, acc
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
        size = -P.p1[j] * log(uniform(key, EVENTS, ev[0], flip))
        ev[0] += 1
    elif law == 1:
        k = <int>P.p1[j]
        acc = 0.0
        for i in range(k):
            acc += log(uniform(key, EVENTS, ev[0], flip))
            ev[0] += 1
        size = -(P.p2[j] / k) * acc
    elif law == 2:
        size = P.p1[j]
    else:
        size = P.p1[j] + (P.p2[j] - P.p1[j]) * uniform(key, EVENTS, ev[0], flip)
        ev[0] += 1
    return size


cdef inline void finish(Out* o, int reason, double t, double dinj, double ddiv,
                        double inj, int64_t ninj, double y) noexcept nogil:
    o.reason = reason
    o.time = t
    o.dinj = dinj
    o.ddiv = ddiv
    o.inj = inj
    o.ninj = ninj
    o.level = y


cdef void run_path(const Par* P, uint64_t index, Out* o) noexcept nogil:
    cdef uint64_t key
    cdef bint flip
    if P.antithetic:
        key = path_key(P.seed, index >> 1)
        flip = (index & 1) == 1
    else:
        key = path_key(P.seed, index)
        flip = False
    cdef double sigma = P.sigma, drift = P.drift, q = P.q, r = P.r, a = P.a, b = P.b
    cdef int mode = P.mode
    cdef double upper = 0.0 if mode == KILLED else b
    cdef double lam = 0.0
    cdef int i
    for i in range(P.njumps):
        lam += P.rates[i]
    cdef double total = lam + r
    cdef double s2 = sigma * sigma

    cdef double t = 0.0, y = P.x, inj = 0.0, dinj = 0.0, ddiv = 0.0
    cdef int64_t ninj = 0
    cdef uint64_t ev = 0, k = 0
    cdef double dt, t_next, span, rise, te, ts, cell, w1, u, size, deficit
    cdef bint capped
    cdef int depth
    cdef uint64_t base, node, cid
    cdef int lev
    cdef double tl, xl, tr, xr, dlt, dx, yend, var, tm, xm, t0, dl, top, p_up, p_dn
    cdef bint quiet_up, quiet_dn, hit_up, hit_dn
    cdef uint64_t s_node[STACK]
    cdef int s_lev[STACK]
    cdef double s_tl[STACK]
    cdef double s_xl[STACK]
    cdef double s_tr[STACK]
    cdef double s_xr[STACK]
    cdef int sp

    if y < a:
        finish(o, RUIN, 0.0, 0.0, 0.0, 0.0, 0, y)
        return
    if mode != BARRIER and y >= upper:
        finish(o, UP, 0.0, 0.0, 0.0, 0.0, 0, y)
        return
    if mode == BARRIER and y > b:
        ddiv = y - b
        y = b

    while True:
        dt = -log(uniform(key, EVENTS, ev, flip)) / total
        ev += 1
        t_next = t + dt
        capped = t_next >= P.horizon
        if capped:
            t_next = P.horizon
        span = t_next - t

        if sigma == 0.0:
            rise = drift * span
            if mode == BARRIER:
                if y + rise > b:
                    te = t + (b - y) / drift
                    if q > 0.0:
                        ddiv += drift * (exp(-q * te) - exp(-q * t_next)) / q
                    else:
                        ddiv += drift * (t_next - te)
                    y = b
                else:
                    y += rise
            else:
                if y + rise >= upper:
                    ts = t + (upper - y) / drift
                    finish(o, UP, ts, dinj, ddiv, inj, ninj, upper)
                    return
                y += rise
        else:
            depth = 0
            cell = span
            while depth < MAX_DEPTH and cell > P.step:
                cell *= 0.5
                depth += 1
            base = k << NODE_BITS
            w1 = drift * span + sigma * sqrt(span) * normal(key, BROWNIAN, base, flip)
            sp = 0
            s_node[0] = 1
            s_lev[0] = 0
            s_tl[0] = 0.0
            s_xl[0] = 0.0
            s_tr[0] = span
            s_xr[0] = w1
            sp = 1
            while sp > 0:
                sp -= 1
                node = s_node[sp]
                lev = s_lev[sp]
                tl = s_tl[sp]
                xl = s_xl[sp]
                tr = s_tr[sp]
                xr = s_xr[sp]
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
                    continue
                if lev < depth:
                    tm = 0.5 * (tl + tr)
                    xm = 0.5 * (xl + xr) + sigma * sqrt(0.25 * dlt) * normal(key, BROWNIAN, base | node, flip)
                    s_node[sp] = 2 * node + 1
                    s_lev[sp] = lev + 1
                    s_tl[sp] = tm
                    s_xl[sp] = xm
                    s_tr[sp] = tr
                    s_xr[sp] = xr
                    sp += 1
                    s_node[sp] = 2 * node
                    s_lev[sp] = lev + 1
                    s_tl[sp] = tl
                    s_xl[sp] = xl
                    s_tr[sp] = tm
                    s_xr[sp] = xm
                    sp += 1
                    continue
                cid = base | node
                t0 = t + tl
                if mode == BARRIER:
                    dl = 0.0
                    if not quiet_up:
                        u = uniform(key, LEAF_UP, cid, flip)
                        top = 0.5 * (dx + sqrt(dx * dx - 2.0 * var * log(u)))
                        if y + top > b:
                            dl = y + top - b
                            ddiv += exp(-q * (t0 + 0.5 * dlt)) * dl
                    yend = y + dx - dl
                    if yend < a:
                        finish(o, RUIN, t0 + dlt * (y - a) / (y - yend), dinj, ddiv, inj, ninj, yend)
                        return
                    if not quiet_dn:
                        p_dn = exp(-2.0 * (y - a) * (yend - a) / var)
                        if uniform(key, LEAF_DOWN, cid, flip) < p_dn:
                            finish(o, RUIN, t0 + 0.5 * dlt, dinj, ddiv, inj, ninj, yend)
                            return
                    y = yend
                    continue
                if yend >= upper:
                    finish(o, UP, t0 + dlt * (upper - y) / dx, dinj, ddiv, inj, ninj, yend)
                    return
                if yend < a:
                    finish(o, RUIN, t0 + dlt * (y - a) / (y - yend), dinj, ddiv, inj, ninj, yend)
                    return
                hit_up = False
                hit_dn = False
                p_up = 0.0
                p_dn = 0.0
                if not quiet_up:
                    p_up = exp(-2.0 * (upper - y) * (upper - yend) / var)
                    hit_up = uniform(key, LEAF_UP, cid, flip) < p_up
                if not quiet_dn:
                    p_dn = exp(-2.0 * (y - a) * (yend - a) / var)
                    hit_dn = uniform(key, LEAF_DOWN, cid, flip) < p_dn
                if hit_up and hit_dn:
                    if uniform(key, LEAF_TIE, cid, flip) * (p_up + p_dn) < p_up:
                        hit_dn = False
                    else:
                        hit_up = False
                if hit_up:
                    finish(o, UP, t0 + 0.5 * dlt, dinj, ddiv, inj, ninj, yend)
                    return
                if hit_dn:
                    finish(o, RUIN, t0 + 0.5 * dlt, dinj, ddiv, inj, ninj, yend)
                    return
                y = yend

        t = t_next
        k += 1
        if capped:
            finish(o, HORIZON, t, dinj, ddiv, inj, ninj, y)
            return

        u = uniform(key, EVENTS, ev, flip)
        ev += 1
        if u * total < r:
            if mode == KILLED:
                finish(o, CLOCK, t, dinj, ddiv, inj, ninj, y)
                return
            if y < 0.0:
                deficit = -y
                inj += deficit
                dinj += exp(-q * t) * deficit
                ninj += 1
                y = 0.0
        else:
            size = jump_size(P, key, &ev, flip)
            y -= size
            if y < a:
                finish(o, RUIN, t, dinj, ddiv, inj, ninj, y)
                return


cdef Par to_par(object P) except *:
    cdef Par c
    cdef int i
    if len(P.rates) > MAX_JUMPS:
        raise ValueError(f"at most {MAX_JUMPS} jump components are supported")
    c.sigma = P.sigma
    c.drift = P.drift
    c.njumps = len(P.rates)
    for i in range(c.njumps):
        c.rates[i] = P.rates[i]
        c.laws[i] = P.laws[i]
        c.p1[i] = P.p1[i]
        c.p2[i] = P.p2[i]
    c.q = P.q
    c.r = P.r
    c.a = P.a
    c.b = P.b
    c.x = P.x
    c.mode = P.mode
    c.horizon = P.horizon
    c.step = P.step
    c.seed = <uint64_t>(P.seed & 0xFFFFFFFFFFFFFFFF)
    c.antithetic = P.antithetic
    return c


def run_batch_arrays(P, Py_ssize_t start, Py_ssize_t stop):
    """Outcomes of paths ``start .. stop - 1`` as a tuple of arrays.

    Returns ``(reason, time, disc_injections, disc_dividends, injections,
    n_injections, level)``.  The loop runs without the GIL.
    """
    cdef Par c = to_par(P)
    cdef Py_ssize_t n = stop - start
    reason = np.empty(n, dtype=np.int8)
    out = np.empty((5, n), dtype=np.float64)
    ninj = np.empty(n, dtype=np.int64)
    cdef int8_t[::1] rv = reason
    cdef double[:, ::1] ov = out
    cdef int64_t[::1] nv = ninj
    cdef Out o
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            run_path(&c, <uint64_t>(start + i), &o)
            rv[i] = <int8_t>o.reason
            ov[0, i] = o.time
            ov[1, i] = o.dinj
            ov[2, i] = o.ddiv
            ov[3, i] = o.inj
            nv[i] = o.ninj
            ov[4, i] = o.level
    return reason, out[0], out[1], out[2], out[3], ninj, out[4]

"""Compiled fixed-step RK4 with guard localization by bisection.

The plant arrives as a packed polynomial term table (see ``PlantModel.kernel_table``)
with output slots ``[F_0..F_{n-1}, G_0..G_{n-1}, q, b, V]``.  The state vector is
``y = (x_0..x_{n-1}, zeta)`` and the input ``u`` is constant during a call.
"""
import numpy as np
from numba import njit

REACHED_END = 0
GUARD_CROSSED = 1
LEFT_DOMAIN = 2
BUFFER_FULL = 3


@njit(cache=True)
def _eval(coefs, exps, owner, v, out):
    for k in range(out.shape[0]):
        out[k] = 0.0
    for t in range(coefs.shape[0]):
        p = coefs[t]
        for i in range(exps.shape[1]):
            e = exps[t, i]
            if e == 1:
                p *= v[i]
            elif e > 1:
                p *= v[i] ** e
        out[owner[t]] += p


@njit(cache=True)
def _deriv(y, mu, u, n, coefs, exps, owner, v, out, dy):
    for i in range(n + 1):
        v[i] = y[i]
    for i in range(mu.shape[0]):
        v[n + 1 + i] = mu[i]
    _eval(coefs, exps, owner, v, out)
    z = y[n]
    for i in range(n):
        dy[i] = out[i] + out[n + i] * z
    dy[n] = out[2 * n] + out[2 * n + 1] * u


@njit(cache=True)
def _rk4(y, h, mu, u, n, coefs, exps, owner, v, out, k1, k2, k3, k4, tmp, ynew):
    m = n + 1
    _deriv(y, mu, u, n, coefs, exps, owner, v, out, k1)
    for i in range(m):
        tmp[i] = y[i] + 0.5 * h * k1[i]
    _deriv(tmp, mu, u, n, coefs, exps, owner, v, out, k2)
    for i in range(m):
        tmp[i] = y[i] + 0.5 * h * k2[i]
    _deriv(tmp, mu, u, n, coefs, exps, owner, v, out, k3)
    for i in range(m):
        tmp[i] = y[i] + h * k3[i]
    _deriv(tmp, mu, u, n, coefs, exps, owner, v, out, k4)
    for i in range(m):
        ynew[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True)
def _valid(r, lo, hi, lo_closed, hi_closed):
    above = r > lo or (lo_closed and r == lo)
    below = r < hi or (hi_closed and r == hi)
    return above and below


@njit(cache=True)
def _V(y, mu, n, coefs, exps, owner, v, out):
    for i in range(n + 1):
        v[i] = y[i]
    for i in range(mu.shape[0]):
        v[n + 1 + i] = mu[i]
    _eval(coefs, exps, owner, v, out)
    return out[2 * n + 2]


@njit(cache=True)
def advance(y0, t0, t_end, h, mu, u, lo, hi, lo_closed, hi_closed, scale, n_bisect,
            v_max, z2_max, coefs, exps, owner, t_buf, y_buf):
    """Integrate from ``(t0, y0)`` until ``t_end``, a guard exit, a domain exit or a full buffer.

    A guard exit happens when ``scale * zeta`` leaves the interval
    ``(lo, hi)`` (endpoints included per the ``*_closed`` flags).  The crossing
    time is bracketed by ``n_bisect`` bisections of the offending step and the
    stored sample is the right end of the final bracket, i.e. the first state
    past the guard.  Returns ``(count, status)``; samples go to the buffers.
    """
    n = y0.shape[0] - 1
    m = n + 1
    nout = 2 * n + 3
    v = np.empty(n + 1 + mu.shape[0])
    out = np.empty(nout)
    k1 = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    tmp = np.empty(m)
    y1 = np.empty(m)
    ym = np.empty(m)
    yb = np.empty(m)
    y = y0.copy()
    cap = t_buf.shape[0]
    count = 0
    k = 0
    t = t0
    while True:
        if count >= cap:
            return count, BUFFER_FULL
        if t >= t_end:
            return count, REACHED_END
        t_next = t0 + (k + 1) * h
        if t_next >= t_end or t_end - t_next < 1e-9 * h:
            t_next = t_end
        hs = t_next - t
        _rk4(y, hs, mu, u, n, coefs, exps, owner, v, out, k1, k2, k3, k4, tmp, y1)
        if not _valid(scale * y1[n], lo, hi, lo_closed, hi_closed):
            a = 0.0
            b = hs
            for i in range(m):
                yb[i] = y1[i]
            for _ in range(n_bisect):
                mid = 0.5 * (a + b)
                _rk4(y, mid, mu, u, n, coefs, exps, owner, v, out, k1, k2, k3, k4, tmp, ym)
                if _valid(scale * ym[n], lo, hi, lo_closed, hi_closed):
                    a = mid
                else:
                    b = mid
                    for i in range(m):
                        yb[i] = ym[i]
            t_buf[count] = t + b
            for i in range(m):
                y_buf[count, i] = yb[i]
            count += 1
            return count, GUARD_CROSSED
        if not (y1[n] * y1[n] < z2_max) or not (_V(y1, mu, n, coefs, exps, owner, v, out) < v_max):
            t_buf[count] = t_next
            for i in range(m):
                y_buf[count, i] = y1[i]
            count += 1
            return count, LEFT_DOMAIN
        t = t_next
        k += 1
        for i in range(m):
            y[i] = y1[i]
        t_buf[count] = t
        for i in range(m):
            y_buf[count, i] = y[i]
        count += 1


# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: pairwise Lambertian gains with prism blockage, and
trigonometric sums for least-squares spectral analysis."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cos, sin, pow, fabs, fmax, M_PI

cnp.import_array()

cdef double _EDGE_TOL = 1e-9


cdef inline bint _blocked(double px, double py, double pz,
                          double qx, double qy, double qz,
                          const double[:] box) noexcept nogil:
    # box = (cx, cy, cz, hx, hy, hz, ex_x, ex_y, ey_x, ey_y)
    cdef double ox, oy, oz, dx, dy, dz, o[3], d[3], h[3]
    cdef double t0 = 0.0, t1 = 1.0, ta, tb, tmp
    cdef int k
    ox = px - box[0]
    oy = py - box[1]
    oz = pz - box[2]
    dx = qx - px
    dy = qy - py
    dz = qz - pz
    o[0] = ox * box[6] + oy * box[7]
    o[1] = ox * box[8] + oy * box[9]
    o[2] = oz
    d[0] = dx * box[6] + dy * box[7]
    d[1] = dx * box[8] + dy * box[9]
    d[2] = dz
    h[0] = box[3]
    h[1] = box[4]
    h[2] = box[5]
    for k in range(3):
        if fabs(d[k]) < 1e-15:
            if fabs(o[k]) >= h[k] - _EDGE_TOL:
                return False
        else:
            ta = (-h[k] - o[k]) / d[k]
            tb = (h[k] - o[k]) / d[k]
            if ta > tb:
                tmp = ta
                ta = tb
                tb = tmp
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t1 - t0 <= _EDGE_TOL:
                return False
    return t1 - t0 > _EDGE_TOL


def segments_blocked(double[:, :] p, double[:, :] q, double[:] box):
    cdef Py_ssize_t n = p.shape[0], i
    out = np.zeros(n, dtype=np.bool_)
    cdef cnp.uint8_t[:] o = out.view(np.uint8)
    with nogil:
        for i in range(n):
            o[i] = _blocked(p[i, 0], p[i, 1], p[i, 2], q[i, 0], q[i, 1], q[i, 2], box)
    return out


def pair_gains(double[:, :] tx_pos, double[:, :] tx_nrm, double[:] tx_order,
               double[:, :] rx_pos, double[:, :] rx_nrm, double[:] rx_area,
               double rx_cos_fov, box=None, tx_soft=None, rx_soft=None):
    """Return (gain, dist), both shaped (n_rx, n_tx).

    ``tx_soft``/``rx_soft`` are optional per-end terms; their sum is a floor
    on d^2 in the gain denominator (near-field guard for extended elements).
    """
    cdef Py_ssize_t nt = tx_pos.shape[0], nr = rx_pos.shape[0], i, j
    gain = np.zeros((nr, nt), dtype=np.float64)
    dist = np.zeros((nr, nt), dtype=np.float64)
    cdef double[:, :] g = gain
    cdef double[:, :] dd = dist
    cdef double[:] bx
    cdef bint has_box = box is not None
    if has_box:
        bx = np.ascontiguousarray(box, dtype=np.float64)
    else:
        bx = np.zeros(10, dtype=np.float64)
    cdef double[:] ts = (np.zeros(nt) if tx_soft is None
                         else np.ascontiguousarray(tx_soft, dtype=np.float64))
    cdef double[:] rs = (np.zeros(nr) if rx_soft is None
                         else np.ascontiguousarray(rx_soft, dtype=np.float64))
    cdef double vx, vy, vz, d2, d, cphi, cpsi, m
    with nogil:
        for i in range(nr):
            for j in range(nt):
                vx = rx_pos[i, 0] - tx_pos[j, 0]
                vy = rx_pos[i, 1] - tx_pos[j, 1]
                vz = rx_pos[i, 2] - tx_pos[j, 2]
                d2 = vx * vx + vy * vy + vz * vz
                if d2 <= 0.0:
                    continue
                d = sqrt(d2)
                dd[i, j] = d
                cphi = (tx_nrm[j, 0] * vx + tx_nrm[j, 1] * vy + tx_nrm[j, 2] * vz) / d
                if cphi <= 0.0:
                    continue
                cpsi = -(rx_nrm[i, 0] * vx + rx_nrm[i, 1] * vy + rx_nrm[i, 2] * vz) / d
                if cpsi <= 0.0 or cpsi < rx_cos_fov:
                    continue
                if has_box and _blocked(tx_pos[j, 0], tx_pos[j, 1], tx_pos[j, 2],
                                        rx_pos[i, 0], rx_pos[i, 1], rx_pos[i, 2], bx):
                    continue
                m = tx_order[j]
                g[i, j] = (m + 1.0) / (2.0 * M_PI) * pow(cphi, m) * rx_area[i] * cpsi / fmax(d2, ts[j] + rs[i])
    return gain, dist


def trig_sums(double[:] t, double[:] y, double f0, double df, Py_ssize_t nf):
    """Sums over samples at f_k = f0 + k*df.

    Returns (yc, ys, c2, s2) with yc = sum y cos(wt), ys = sum y sin(wt),
    c2 = sum cos(2wt), s2 = sum sin(2wt), w = 2*pi*f_k.
    """
    cdef Py_ssize_t n = t.shape[0], k, i
    yc_a = np.zeros(nf)
    ys_a = np.zeros(nf)
    c2_a = np.zeros(nf)
    s2_a = np.zeros(nf)
    cdef double[:] yc = yc_a
    cdef double[:] ys = ys_a
    cdef double[:] c2 = c2_a
    cdef double[:] s2 = s2_a
    cdef double[:] zr = np.empty(n)
    cdef double[:] zi = np.empty(n)
    cdef double[:] sr = np.empty(n)
    cdef double[:] si = np.empty(n)
    cdef double a, b, c, s, acc_yc, acc_ys, acc_c2, acc_s2, tmp
    with nogil:
        for i in range(n):
            zr[i] = cos(2.0 * M_PI * f0 * t[i])
            zi[i] = sin(2.0 * M_PI * f0 * t[i])
            sr[i] = cos(2.0 * M_PI * df * t[i])
            si[i] = sin(2.0 * M_PI * df * t[i])
        for k in range(nf):
            if k > 0 and k % 512 == 0:
                # re-seed phasors to stop recurrence drift
                for i in range(n):
                    zr[i] = cos(2.0 * M_PI * (f0 + k * df) * t[i])
                    zi[i] = sin(2.0 * M_PI * (f0 + k * df) * t[i])
            acc_yc = 0.0
            acc_ys = 0.0
            acc_c2 = 0.0
            acc_s2 = 0.0
            for i in range(n):
                c = zr[i]
                s = zi[i]
                acc_yc += y[i] * c
                acc_ys += y[i] * s
                acc_c2 += c * c - s * s
                acc_s2 += 2.0 * c * s
                tmp = c * sr[i] - s * si[i]
                zi[i] = c * si[i] + s * sr[i]
                zr[i] = tmp
            yc[k] = acc_yc
            ys[k] = acc_ys
            c2[k] = acc_c2
            s2[k] = acc_s2
    return yc_a, ys_a, c2_a, s2_a

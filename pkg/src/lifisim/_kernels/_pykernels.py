"""Pure-numpy implementations of the hot loops.

Same signatures and results as the compiled module; used when the extension
is not built or ``LIFISIM_PURE_PYTHON`` is set.
"""

import numpy as np

_EDGE_TOL = 1e-9
_BLOCK = 256


def _blocked_many(p, q, box):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    c = box[:3]
    h = box[3:6]
    ex = box[6:8]
    ey = box[8:10]
    o = p - c
    d = q - p
    lo = np.stack([o[:, 0] * ex[0] + o[:, 1] * ex[1],
                   o[:, 0] * ey[0] + o[:, 1] * ey[1],
                   o[:, 2]], axis=1)
    ld = np.stack([d[:, 0] * ex[0] + d[:, 1] * ex[1],
                   d[:, 0] * ey[0] + d[:, 1] * ey[1],
                   d[:, 2]], axis=1)
    t0 = np.zeros(len(p))
    t1 = np.ones(len(p))
    outside = np.zeros(len(p), dtype=bool)
    for k in range(3):
        par = np.abs(ld[:, k]) < 1e-15
        outside |= par & (np.abs(lo[:, k]) >= h[k] - _EDGE_TOL)
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (-h[k] - lo[:, k]) / ld[:, k]
            tb = (h[k] - lo[:, k]) / ld[:, k]
        lo_t = np.where(par, -np.inf, np.minimum(ta, tb))
        hi_t = np.where(par, np.inf, np.maximum(ta, tb))
        t0 = np.maximum(t0, lo_t)
        t1 = np.minimum(t1, hi_t)
    return ~outside & (t1 - t0 > _EDGE_TOL)


def segments_blocked(p, q, box):
    return _blocked_many(p, q, np.asarray(box, dtype=float))


def pair_gains(tx_pos, tx_nrm, tx_order, rx_pos, rx_nrm, rx_area, rx_cos_fov, box=None,
               tx_soft=None, rx_soft=None):
    """Return (gain, dist), both shaped (n_rx, n_tx)."""
    tx_pos = np.asarray(tx_pos, dtype=float)
    rx_pos = np.asarray(rx_pos, dtype=float)
    nr, nt = len(rx_pos), len(tx_pos)
    gain = np.zeros((nr, nt))
    dist = np.zeros((nr, nt))
    if box is not None:
        box = np.asarray(box, dtype=float)
    ts = np.zeros(nt) if tx_soft is None else np.asarray(tx_soft, dtype=float)
    rs = np.zeros(nr) if rx_soft is None else np.asarray(rx_soft, dtype=float)
    for start in range(0, nr, _BLOCK):
        sl = slice(start, min(start + _BLOCK, nr))
        v = rx_pos[sl, None, :] - tx_pos[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", v, v)
        d = np.sqrt(d2)
        dist[sl] = d
        with np.errstate(divide="ignore", invalid="ignore"):
            cphi = np.einsum("jk,ijk->ij", tx_nrm, v) / d
            cpsi = -np.einsum("ik,ijk->ij", rx_nrm[sl], v) / d
            ok = (d2 > 0) & (cphi > 0) & (cpsi > 0) & (cpsi >= rx_cos_fov)
        if box is not None and ok.any():
            ii, jj = np.nonzero(ok)
            hit = _blocked_many(tx_pos[jj], rx_pos[sl][ii], box)
            ok[ii[hit], jj[hit]] = False
        with np.errstate(divide="ignore", invalid="ignore"):
            g = ((tx_order[None, :] + 1.0) / (2.0 * np.pi)
                 * np.power(np.where(ok, cphi, 0.0), tx_order[None, :])
                 * rx_area[sl, None] * cpsi / np.maximum(d2, ts[None, :] + rs[sl, None]))
        gain[sl] = np.where(ok, g, 0.0)
    return gain, dist


def trig_sums(t, y, f0, df, nf):
    """Sums over samples at f_k = f0 + k*df; see the compiled version."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros((4, nf))
    step = max(1, 2_000_000 // max(len(t), 1))
    for start in range(0, nf, step):
        stop = min(start + step, nf)
        w = 2.0 * np.pi * (f0 + df * np.arange(start, stop))
        arg = np.outer(w, t)
        c = np.cos(arg)
        s = np.sin(arg)
        out[0, start:stop] = c @ y
        out[1, start:stop] = s @ y
        out[2, start:stop] = np.cos(2.0 * arg).sum(axis=1)
        out[3, start:stop] = np.sin(2.0 * arg).sum(axis=1)
    return out[0], out[1], out[2], out[3]

"""Pure numpy implementations of the hot kernels.

Same call contracts as the compiled backend:

* conv inputs arrive already padded; `st` is the stride on the trailing
  (time) axis, all other axes have unit stride;
* arrays are C-contiguous, float32 or float64;
* median27 receives an edge-replicated padded volume and returns the valid
  27-sample exact median.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _out_len(n: int, k: int, s: int) -> int:
    return (n - k) // s + 1


def conv3d_forward(xp: np.ndarray, w: np.ndarray, b: np.ndarray, st: int) -> np.ndarray:
    """Cross-correlate xp (N,C,Y,Z,T) with w (O,C,KY,KZ,KT), time stride st."""
    n, c, yp, zp, tp = xp.shape
    o, _, ky, kz, kt = w.shape
    yo, zo, to = yp - ky + 1, zp - kz + 1, _out_len(tp, kt, st)
    out = np.zeros((n, o, yo, zo, to), dtype=xp.dtype)
    for iy in range(ky):
        for iz in range(kz):
            for it in range(kt):
                # (N, C, Yo, Zo, To) view at this tap offset
                xv = xp[:, :, iy : iy + yo, iz : iz + zo, it : it + (to - 1) * st + 1 : st]
                out += np.einsum("ncyzt,oc->noyzt", xv, w[:, :, iy, iz, it], optimize=True)
    out += b.reshape(1, o, 1, 1, 1)
    return out


def conv3d_backward(
    xp: np.ndarray, w: np.ndarray, gy: np.ndarray, st: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients w.r.t. padded input, weights and bias."""
    n, c, yp, zp, tp = xp.shape
    o, _, ky, kz, kt = w.shape
    _, _, yo, zo, to = gy.shape
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for iy in range(ky):
        for iz in range(kz):
            for it in range(kt):
                xv = xp[:, :, iy : iy + yo, iz : iz + zo, it : it + (to - 1) * st + 1 : st]
                gw[:, :, iy, iz, it] = np.einsum("noyzt,ncyzt->oc", gy, xv, optimize=True)
                gxv = gxp[:, :, iy : iy + yo, iz : iz + zo, it : it + (to - 1) * st + 1 : st]
                gxv += np.einsum("noyzt,oc->ncyzt", gy, w[:, :, iy, iz, it], optimize=True)
    gb = gy.sum(axis=(0, 2, 3, 4))
    return gxp, gw, gb


def median27(padded: np.ndarray) -> np.ndarray:
    """Exact 3x3x3 median of an edge-padded (Y+2, Z+2, T+2) volume."""
    yp, zp, tp = padded.shape
    y, z, t = yp - 2, zp - 2, tp - 2
    out = np.empty((y, z, t), dtype=padded.dtype)
    # Chunk along t so the 27-plane stack stays small.
    chunk = max(1, int(4e6 // max(1, y * z)))
    for t0 in range(0, t, chunk):
        t1 = min(t, t0 + chunk)
        stack = np.empty((27, y, z, t1 - t0), dtype=padded.dtype)
        i = 0
        for iy in range(3):
            for iz in range(3):
                for it in range(3):
                    stack[i] = padded[iy : iy + y, iz : iz + z, t0 + it : t0 + it + (t1 - t0)]
                    i += 1
        # 14th order statistic of 27 values
        out[:, :, t0:t1] = np.partition(stack, 13, axis=0)[13]
    return out

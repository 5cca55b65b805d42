# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: spatio-temporal convolution and 3x3x3 median.

Contracts match ocebench.kernels.numpy_backend exactly; inputs are
C-contiguous float32/float64 arrays, conv inputs already padded, stride
applies to the trailing (time) axis only. Inner loops accumulate into
function-local scratch rows so the compiler can vectorize them.
"""

import numpy as np

from libc.stdlib cimport free, malloc

cimport numpy as cnp

ctypedef fused floating:
    float
    double

NAME = "compiled"


cdef inline floating* _scratch(floating proto, Py_ssize_t n) nogil:
    return <floating*> malloc(n * sizeof(floating))


def conv3d_forward(floating[:, :, :, :, ::1] xp,
                   floating[:, :, :, :, ::1] w,
                   floating[::1] b,
                   int st):
    cdef Py_ssize_t N = xp.shape[0], C = xp.shape[1]
    cdef Py_ssize_t YP = xp.shape[2], ZP = xp.shape[3], TP = xp.shape[4]
    cdef Py_ssize_t O = w.shape[0], KY = w.shape[2], KZ = w.shape[3], KT = w.shape[4]
    cdef Py_ssize_t YO = YP - KY + 1, ZO = ZP - KZ + 1, TO = (TP - KT) // st + 1

    if floating is float:
        out_np = np.empty((N, O, YO, ZO, TO), dtype=np.float32)
    else:
        out_np = np.empty((N, O, YO, ZO, TO), dtype=np.float64)
    cdef floating[:, :, :, :, ::1] out = out_np

    cdef floating* xptr = &xp[0, 0, 0, 0, 0]
    cdef floating* wptr = &w[0, 0, 0, 0, 0]
    cdef floating* optr = &out[0, 0, 0, 0, 0]
    cdef floating* xrow
    cdef floating* brow
    cdef floating* buf
    cdef floating* wrow
    cdef floating ws, w0, w1, w2
    cdef Py_ssize_t n, o, c, iy, iz, it, y, z, t

    # accumulate all O output rows for one (n, y, z) position in scratch,
    # so each input row is streamed once and stays hot for every (o, it)
    with nogil:
        buf = _scratch(<floating> 0, O * TO)
        for n in range(N):
            for y in range(YO):
                for z in range(ZO):
                    for o in range(O):
                        brow = buf + o * TO
                        ws = b[o]
                        for t in range(TO):
                            brow[t] = ws
                    for c in range(C):
                        for iy in range(KY):
                            for iz in range(KZ):
                                xrow = xptr + (((n * C + c) * YP + y + iy) * ZP + z + iz) * TP
                                for o in range(O):
                                    brow = buf + o * TO
                                    wrow = wptr + (((o * C + c) * KY + iy) * KZ + iz) * KT
                                    if KT == 3 and st == 1:
                                        w0 = wrow[0]; w1 = wrow[1]; w2 = wrow[2]
                                        for t in range(TO):
                                            brow[t] += w0 * xrow[t] + w1 * xrow[t + 1] + w2 * xrow[t + 2]
                                    else:
                                        for it in range(KT):
                                            ws = wrow[it]
                                            if st == 1:
                                                for t in range(TO):
                                                    brow[t] += ws * xrow[it + t]
                                            else:
                                                for t in range(TO):
                                                    brow[t] += ws * xrow[it + t * st]
                    for o in range(O):
                        brow = buf + o * TO
                        xrow = optr + (((n * O + o) * YO + y) * ZO + z) * TO
                        for t in range(TO):
                            xrow[t] = brow[t]
        free(buf)
    return out_np


def conv3d_backward(floating[:, :, :, :, ::1] xp,
                    floating[:, :, :, :, ::1] w,
                    floating[:, :, :, :, ::1] gy,
                    int st):
    cdef Py_ssize_t N = xp.shape[0], C = xp.shape[1]
    cdef Py_ssize_t YP = xp.shape[2], ZP = xp.shape[3], TP = xp.shape[4]
    cdef Py_ssize_t O = w.shape[0], KY = w.shape[2], KZ = w.shape[3], KT = w.shape[4]
    cdef Py_ssize_t YO = gy.shape[2], ZO = gy.shape[3], TO = gy.shape[4]

    if floating is float:
        gxp_np = np.zeros((N, C, YP, ZP, TP), dtype=np.float32)
        gw_np = np.zeros((O, C, KY, KZ, KT), dtype=np.float32)
        gb_np = np.zeros(O, dtype=np.float32)
    else:
        gxp_np = np.zeros((N, C, YP, ZP, TP), dtype=np.float64)
        gw_np = np.zeros((O, C, KY, KZ, KT), dtype=np.float64)
        gb_np = np.zeros(O, dtype=np.float64)
    cdef floating[:, :, :, :, ::1] gxp = gxp_np
    cdef floating[:, :, :, :, ::1] gw = gw_np
    cdef floating[::1] gb = gb_np

    cdef floating* xptr = &xp[0, 0, 0, 0, 0]
    cdef floating* wptr = &w[0, 0, 0, 0, 0]
    cdef floating* gyptr = &gy[0, 0, 0, 0, 0]
    cdef floating* gxptr = &gxp[0, 0, 0, 0, 0]
    cdef floating* gwptr = &gw[0, 0, 0, 0, 0]
    cdef floating* gyrow
    cdef floating* xrow
    cdef floating* brow
    cdef floating* buf
    cdef floating* wrow
    cdef floating ws, acc, gbo, a0, a1, a2, w0, w1, w2
    cdef Py_ssize_t n, o, c, iy, iz, it, y, z, t, yp, zp, y0, z0

    with nogil:
        # bias gradient
        for o in range(O):
            gbo = 0
            for n in range(N):
                for y in range(YO):
                    for z in range(ZO):
                        gyrow = gyptr + (((n * O + o) * YO + y) * ZO + z) * TO
                        for t in range(TO):
                            gbo += gyrow[t]
            gb[o] = gbo
        # weight gradient: stream each input row once per (iy, iz) and fold
        # all (o, it) dot products against it while it is hot
        for c in range(C):
            for iy in range(KY):
                for iz in range(KZ):
                    for n in range(N):
                        for y in range(YO):
                            for z in range(ZO):
                                xrow = xptr + (((n * C + c) * YP + y + iy) * ZP + z + iz) * TP
                                for o in range(O):
                                    gyrow = gyptr + (((n * O + o) * YO + y) * ZO + z) * TO
                                    wrow = gwptr + (((o * C + c) * KY + iy) * KZ + iz) * KT
                                    if KT == 3 and st == 1:
                                        a0 = 0; a1 = 0; a2 = 0
                                        for t in range(TO):
                                            ws = gyrow[t]
                                            a0 += ws * xrow[t]
                                            a1 += ws * xrow[t + 1]
                                            a2 += ws * xrow[t + 2]
                                        wrow[0] += a0; wrow[1] += a1; wrow[2] += a2
                                    else:
                                        for it in range(KT):
                                            acc = 0
                                            if st == 1:
                                                for t in range(TO):
                                                    acc += gyrow[t] * xrow[it + t]
                                            else:
                                                for t in range(TO):
                                                    acc += gyrow[t] * xrow[it + t * st]
                                            wrow[it] += acc
        # input gradient: accumulate all C padded rows of one (n, yp, zp)
        # position in scratch, so each upstream row is read once
        buf = _scratch(<floating> 0, C * TP)
        for n in range(N):
            for yp in range(YP):
                for zp in range(ZP):
                    for t in range(C * TP):
                        buf[t] = 0
                    for o in range(O):
                        for iy in range(KY):
                            y0 = yp - iy
                            if y0 < 0 or y0 >= YO:
                                continue
                            for iz in range(KZ):
                                z0 = zp - iz
                                if z0 < 0 or z0 >= ZO:
                                    continue
                                gyrow = gyptr + (((n * O + o) * YO + y0) * ZO + z0) * TO
                                for c in range(C):
                                    brow = buf + c * TP
                                    wrow = wptr + (((o * C + c) * KY + iy) * KZ + iz) * KT
                                    if KT == 3 and st == 1 and TO >= 2:
                                        w0 = wrow[0]; w1 = wrow[1]; w2 = wrow[2]
                                        brow[0] += w0 * gyrow[0]
                                        brow[1] += w0 * gyrow[1] + w1 * gyrow[0]
                                        for t in range(2, TO):
                                            brow[t] += w0 * gyrow[t] + w1 * gyrow[t - 1] + w2 * gyrow[t - 2]
                                        brow[TO] += w1 * gyrow[TO - 1] + w2 * gyrow[TO - 2]
                                        brow[TO + 1] += w2 * gyrow[TO - 1]
                                    else:
                                        for it in range(KT):
                                            ws = wrow[it]
                                            if st == 1:
                                                for t in range(TO):
                                                    brow[it + t * st] += ws * gyrow[t]
                                            else:
                                                for t in range(TO):
                                                    brow[it + t * st] += ws * gyrow[t]
                    for c in range(C):
                        brow = buf + c * TP
                        xrow = gxptr + (((n * C + c) * YP + yp) * ZP + zp) * TP
                        for t in range(TP):
                            xrow[t] = brow[t]
        free(buf)
    return gxp_np, gw_np, gb_np


def _batcher_pairs(n):
    """Comparator pairs of Batcher's odd-even mergesort for n a power of 2."""
    pairs = []
    p = 1
    while p < n:
        k = p
        while k >= 1:
            for j in range(k % p, n - k, 2 * k):
                for i in range(0, min(k, n - j - k)):
                    if (i + j) // (2 * p) == (i + j + k) // (2 * p):
                        pairs.append((i + j, i + j + k))
            k //= 2
        p *= 2
    return pairs


_PAIRS = np.asarray(_batcher_pairs(32), dtype=np.int32)
_N_PAIRS = len(_PAIRS)
_PAIR_LO = np.ascontiguousarray(_PAIRS[:, 0])
_PAIR_HI = np.ascontiguousarray(_PAIRS[:, 1])

DEF MED_BLOCK = 128


def median27(floating[:, :, ::1] padded):
    """Exact 27-sample median via a 32-lane sorting network applied
    elementwise over blocks of the contiguous t axis; the 5 spare lanes
    carry +FLT_MAX sentinels so index 13 is the 14th order statistic."""
    cdef Py_ssize_t YP = padded.shape[0], ZP = padded.shape[1], TP = padded.shape[2]
    cdef Py_ssize_t Y = YP - 2, Z = ZP - 2, T = TP - 2

    if floating is float:
        out_np = np.empty((Y, Z, T), dtype=np.float32)
    else:
        out_np = np.empty((Y, Z, T), dtype=np.float64)
    cdef floating[:, :, ::1] out = out_np

    cdef const int[::1] plo = _PAIR_LO
    cdef const int[::1] phi = _PAIR_HI
    cdef Py_ssize_t n_pairs = _N_PAIRS

    cdef floating* pptr = &padded[0, 0, 0]
    cdef floating* optr = &out[0, 0, 0]
    cdef floating buf[32][MED_BLOCK]
    cdef floating* ra
    cdef floating* rb
    cdef floating* src
    cdef floating a, bb, big
    cdef Py_ssize_t y, z, t0, blk, t, iy, iz, it, m, k

    if floating is float:
        big = <floating> 3.0e38
    else:
        big = <floating> 1.0e308

    with nogil:
        for y in range(Y):
            for z in range(Z):
                for t0 in range(0, T, MED_BLOCK):
                    blk = T - t0
                    if blk > MED_BLOCK:
                        blk = MED_BLOCK
                    m = 0
                    for iy in range(3):
                        for iz in range(3):
                            src = pptr + ((y + iy) * ZP + z + iz) * TP + t0
                            for it in range(3):
                                ra = &buf[m][0]
                                for t in range(blk):
                                    ra[t] = src[it + t]
                                m += 1
                    for m in range(27, 32):
                        ra = &buf[m][0]
                        for t in range(blk):
                            ra[t] = big
                    for k in range(n_pairs):
                        ra = &buf[plo[k]][0]
                        rb = &buf[phi[k]][0]
                        for t in range(blk):
                            a = ra[t]
                            bb = rb[t]
                            ra[t] = a if a < bb else bb
                            rb[t] = bb if a < bb else a
                    src = optr + (y * Z + z) * T + t0
                    ra = &buf[13][0]
                    for t in range(blk):
                        src[t] = ra[t]
    return out_np

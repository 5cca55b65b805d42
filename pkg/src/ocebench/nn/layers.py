"""Layers with exact backprop over (N, C, [Y, [Z,]] T) arrays.

Convolutions run through ocebench.kernels; spatial axes always use unit
stride and "same" padding, the trailing time axis may be strided (padding
kt // 2 per side, output length floor((T + 2p - k) / s) + 1).
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ShapeMismatch


class Layer:
    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self):
        """Yield (array, grad_array) pairs; default: stateless layer."""
        return ()


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, gy):
        return np.where(self._mask, gy, 0)


class ConvST(Layer):
    """Spatio-temporal cross-correlation with bias.

    kernel is (ky, kt) for 1D+t input or (ky, kz, kt) for 2D+t input;
    stride_t applies to the time axis only.
    """

    def __init__(self, in_ch, out_ch, kernel, stride_t=1, rng=None, dtype=np.float32):
        self.kernel = tuple(kernel)
        if len(self.kernel) not in (2, 3):
            raise ShapeMismatch(f"kernel must have 2 or 3 extents, got {kernel}")
        self.in_ch, self.out_ch = in_ch, out_ch
        self.stride_t = int(stride_t)
        rng = rng or np.random.default_rng(0)
        fan_in = in_ch * int(np.prod(self.kernel))
        self.w = he_uniform(rng, (out_ch, in_ch) + self.kernel, fan_in, dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def params(self):
        return ((self.w, self.gw), (self.b, self.gb))

    def _lift(self, x):
        # 1D+t arrays gain a singleton z axis so one kernel path serves both ranks
        return x[:, :, :, None, :] if x.ndim == 4 else x

    def forward(self, x):
        if x.shape[1] != self.in_ch:
            raise ShapeMismatch(f"expected {self.in_ch} channels, got {x.shape[1]}")
        self._rank4 = x.ndim == 4
        x5 = self._lift(x)
        w5 = self.w[:, :, :, None, :] if len(self.kernel) == 2 else self.w
        ky, kz, kt = w5.shape[2:]
        pt = kt // 2
        pads = ((0, 0), (0, 0), (ky // 2, ky // 2), (kz // 2, kz // 2), (pt, pt))
        xp = np.ascontiguousarray(np.pad(x5, pads))
        self._xp, self._w5 = xp, w5
        out = kernels.conv3d_forward(xp, np.ascontiguousarray(w5), self.b, self.stride_t)
        return out[:, :, :, 0, :] if self._rank4 else out

    def backward(self, gy):
        gy5 = self._lift(np.ascontiguousarray(gy))
        gxp, gw5, gb = kernels.conv3d_backward(self._xp, np.ascontiguousarray(self._w5), gy5, self.stride_t)
        ky, kz, kt = self._w5.shape[2:]
        py, pz, pt = ky // 2, kz // 2, kt // 2
        yp, zp, tp = gxp.shape[2:]
        gx5 = gxp[:, :, py : yp - py, pz : zp - pz, pt : tp - pt]
        self.gw[...] = gw5.reshape(self.w.shape)
        self.gb[...] = gb
        return gx5[:, :, :, 0, :] if self._rank4 else gx5


class AvgPool(Layer):
    """Window-2 mean over every non-channel axis with extent >= 2.

    Odd trailing elements are dropped; their gradient is zero.
    """

    def forward(self, x):
        self._in_shape = x.shape
        out = x
        self._pooled_axes = []
        for ax in range(2, x.ndim):
            if out.shape[ax] >= 2:
                n = out.shape[ax] // 2
                sl = [slice(None)] * out.ndim
                sl[ax] = slice(0, 2 * n)
                cropped = out[tuple(sl)]
                shape = cropped.shape[:ax] + (n, 2) + cropped.shape[ax + 1 :]
                out = cropped.reshape(shape).mean(axis=ax + 1)
                self._pooled_axes.append(ax)
        return out

    def backward(self, gy):
        g = gy
        for ax in reversed(self._pooled_axes):
            g = np.repeat(g / 2.0, 2, axis=ax)
            pad = self._in_shape[ax] - g.shape[ax]
            if pad:
                widths = [(0, 0)] * g.ndim
                widths[ax] = (0, pad)
                g = np.pad(g, widths)
        return g


class GlobalAvgPool(Layer):
    def forward(self, x):
        self._in_shape = x.shape
        return x.mean(axis=tuple(range(2, x.ndim)))

    def backward(self, gy):
        extra = self._in_shape[2:]
        count = int(np.prod(extra))
        g = gy.reshape(gy.shape + (1,) * len(extra)) / count
        return np.broadcast_to(g, self._in_shape).astype(gy.dtype, copy=True)


class Linear(Layer):
    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.w = he_uniform(rng, (out_features, in_features), in_features, dtype)
        self.b = np.zeros(out_features, dtype=dtype)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def params(self):
        return ((self.w, self.gw), (self.b, self.gb))

    def forward(self, x):
        self._x = x
        return x @ self.w.T + self.b

    def backward(self, gy):
        self.gw[...] = gy.T @ self._x
        self.gb[...] = gy.sum(axis=0)
        return gy @ self.w


class DenseBlock(Layer):
    """Four ReLU -> conv composite layers, growth 5, each consuming the
    concatenation of the block input and all previous outputs. Output has
    in_ch + 4 * growth channels with unchanged spatial/temporal extents."""

    def __init__(self, in_ch, rank, growth=5, n_layers=4, rng=None, dtype=np.float32):
        kernel = (3, 3) if rank == 1 else (3, 3, 3)
        self.growth, self.n_layers, self.in_ch = growth, n_layers, in_ch
        self.relus = [ReLU() for _ in range(n_layers)]
        self.convs = [
            ConvST(in_ch + i * growth, growth, kernel, stride_t=1, rng=rng, dtype=dtype)
            for i in range(n_layers)
        ]

    @property
    def out_ch(self):
        return self.in_ch + self.n_layers * self.growth

    def params(self):
        out = []
        for c in self.convs:
            out.extend(c.params())
        return out

    def forward(self, x):
        feats = [x]
        for relu, conv in zip(self.relus, self.convs):
            cat = feats[0] if len(feats) == 1 else np.concatenate(feats, axis=1)
            feats.append(conv.forward(relu.forward(cat)))
        self._channels = [f.shape[1] for f in feats]
        return np.concatenate(feats, axis=1)

    def backward(self, gy):
        bounds = np.cumsum([0] + self._channels)
        gfeats = [gy[:, bounds[i] : bounds[i + 1]].copy() for i in range(len(self._channels))]
        for i in reversed(range(self.n_layers)):
            gcat = self.relus[i].backward(self.convs[i].backward(gfeats[i + 1]))
            for j in range(i + 1):
                gfeats[j] += gcat[:, bounds[j] : bounds[j + 1]]
        return gfeats[0]

"""Central-difference gradient verification (64-bit only)."""

from __future__ import annotations

import numpy as np


def grad_check(model, x, target, h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over all
    parameters, using MSE against `target` as the loss."""
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)

    def loss():
        pred = model.forward(x).reshape(-1)
        return float(np.mean((pred - target) ** 2))

    pred = model.forward(x)
    resid = pred.reshape(-1) - target
    gy = (2.0 * resid / resid.size).reshape(pred.shape)
    model.backward(gy)

    worst = 0.0
    for w, g in model.params():
        flat_w = w.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_w.size):
            keep = flat_w[i]
            flat_w[i] = keep + h
            up = loss()
            flat_w[i] = keep - h
            down = loss()
            flat_w[i] = keep
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(numeric), abs(flat_g[i]), 1e-8)
            worst = max(worst, abs(numeric - flat_g[i]) / denom)
    return worst


def layer_grad_check(layer, x, h: float = 1e-5) -> float:
    """Check d(sum(layer(x) * R))/dx and parameter grads for a single layer."""
    rng = np.random.default_rng(1234)
    x = np.array(x, dtype=np.float64, copy=True)
    y = layer.forward(x)
    r = rng.standard_normal(y.shape)

    def loss():
        return float((layer.forward(x) * r).sum())

    gx = layer.backward(r)
    worst = 0.0
    flat_x = x.reshape(-1)
    flat_gx = np.asarray(gx).reshape(-1)
    for i in range(flat_x.size):
        keep = flat_x[i]
        flat_x[i] = keep + h
        up = loss()
        flat_x[i] = keep - h
        down = loss()
        flat_x[i] = keep
        numeric = (up - down) / (2.0 * h)
        denom = max(abs(numeric), abs(flat_gx[i]), 1e-8)
        worst = max(worst, abs(numeric - flat_gx[i]) / denom)
    # restore caches, then parameter gradients
    layer.forward(x)
    layer.backward(r)
    for w, g in layer.params():
        flat_w = w.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_w.size):
            keep = flat_w[i]
            flat_w[i] = keep + h
            up = loss()
            flat_w[i] = keep - h
            down = loss()
            flat_w[i] = keep
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(numeric), abs(flat_g[i]), 1e-8)
            worst = max(worst, abs(numeric - flat_g[i]) / denom)
    return worst

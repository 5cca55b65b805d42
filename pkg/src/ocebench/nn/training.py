"""Adam, minibatch MSE training with validation-based early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteLoss, ShapeMismatch


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(w) for w, _ in self.params]
        self.v = [np.zeros_like(w) for w, _ in self.params]

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, (w, g) in enumerate(self.params):
            if g.shape != w.shape:
                raise ShapeMismatch(f"grad shape {g.shape} vs param {w.shape}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            w -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(w.dtype)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    batch_size: int = 10
    max_epochs: int = 300
    patience: int = 30
    seed: int = 0


class ArrayDataset:
    """In-memory dataset: inputs stacked along axis 0."""

    def __init__(self, x: np.ndarray):
        self.x = x

    def __len__(self):
        return len(self.x)

    def batch(self, idx) -> np.ndarray:
        return self.x[idx]


class LazyTensorDataset:
    """Disk-backed dataset of container files with an optional transform.

    Caches decoded arrays when the whole set stays under `cache_bytes`.
    """

    def __init__(self, paths, transform=None, cache_bytes=256 << 20):
        from ..tensorio import read_tensor

        self._read = read_tensor
        self.paths = list(paths)
        self.transform = transform
        self._cache = {}
        self._cache_bytes = cache_bytes
        self._used = 0

    def __len__(self):
        return len(self.paths)

    def _get(self, i: int) -> np.ndarray:
        if i in self._cache:
            return self._cache[i]
        arr = np.asarray(self._read(self.paths[i]).data, dtype=np.float32)
        if self.transform is not None:
            arr = self.transform(arr)
        if self._used + arr.nbytes <= self._cache_bytes:
            self._cache[i] = arr
            self._used += arr.nbytes
        return arr

    def batch(self, idx) -> np.ndarray:
        return np.stack([self._get(int(i)) for i in idx])


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)  # (epoch, train_mse, val_mae)
    best_epoch: int = -1
    best_val_mae: float = float("inf")

    def to_csv(self) -> str:
        lines = ["epoch,train_mse,val_mae"]
        lines += [f"{e},{m:.8g},{v:.8g}" for e, m, v in self.epochs]
        return "\n".join(lines) + "\n"


def train_model(model, train_ds, train_y, val_ds, val_y, cfg: TrainConfig):
    """Minibatch MSE with Adam; keeps the epoch with best validation MAE.

    Deterministic for a fixed (model init, data, seed): shuffling is the
    only stochastic element and comes from one seeded generator.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps_adam)
    train_y = np.asarray(train_y, dtype=np.float64)
    val_y = np.asarray(val_y, dtype=np.float64)
    n = len(train_ds)
    history = TrainHistory()
    best_state = model.get_state()
    since_best = 0
    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb = train_ds.batch(idx)
            yb = train_y[idx]
            pred = model.forward(xb)
            resid = pred.reshape(-1) - yb
            loss = float(np.mean(resid**2))
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"epoch {epoch}: loss={loss}")
            sq_sum += float((resid**2).sum())
            gy = (2.0 * resid / len(idx)).reshape(pred.shape).astype(pred.dtype)
            model.backward(gy)
            opt.step()
        train_mse = sq_sum / n
        val_mae = float(np.mean(np.abs(_predict(model, val_ds, cfg.batch_size) - val_y)))
        history.epochs.append((epoch, train_mse, val_mae))
        if val_mae < history.best_val_mae:
            history.best_val_mae = val_mae
            history.best_epoch = epoch
            best_state = model.get_state()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    model.set_state(best_state)
    return history


def _predict(model, ds, batch_size: int) -> np.ndarray:
    out = []
    for start in range(0, len(ds), batch_size):
        idx = np.arange(start, min(start + batch_size, len(ds)))
        out.append(model.forward(ds.batch(idx)).reshape(-1))
    return np.concatenate(out) if out else np.empty(0)


def predict_dataset(model, ds, batch_size: int = 10) -> np.ndarray:
    return _predict(model, ds, batch_size)

"""Model builders, the sequential container and checkpoint I/O.

The CNN follows a fixed recipe: one initial conv (kernel 5 temporal,
3 per spatial axis, temporal stride 4, k0 output channels), four dense
blocks of four growth-5 layers joined by window-2 average pooling, global
average pooling, then a linear head with one scalar output. Channels after
block i are k0 + 20 i, so the head always sees k0 + 80 inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidSpec
from ..tensorio import Tensor, read_tensor, write_tensor
from .layers import AvgPool, ConvST, DenseBlock, GlobalAvgPool, Linear, ReLU


@dataclass(frozen=True)
class CnnArch:
    rank: int  # 1 for y+t maps, 2 for y+z+t volumes
    k0: int = 16
    blocks: int = 4
    growth: int = 5
    layers_per_block: int = 4

    def __post_init__(self):
        if self.rank not in (1, 2):
            raise InvalidSpec(f"rank must be 1 or 2, got {self.rank}")
        if min(self.k0, self.blocks, self.growth, self.layers_per_block) < 1:
            raise InvalidSpec("all architecture counts must be >= 1")

    @property
    def head_channels(self) -> int:
        return self.k0 + self.blocks * self.layers_per_block * self.growth


class Sequential:
    def __init__(self, layers, spec: dict):
        self.layers = layers
        self.spec = spec  # serializable description for checkpoints

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, gy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x).reshape(-1)

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def get_state(self):
        return [w.copy() for w, _ in self.params()]

    def set_state(self, state):
        for (w, _), saved in zip(self.params(), state):
            w[...] = saved


def build_mlp(hidden: int, seed: int = 0, dtype=np.float32) -> Sequential:
    """Scalar-input regressor with two equal hidden ReLU layers."""
    if hidden < 1:
        raise InvalidSpec("hidden must be >= 1")
    rng = np.random.default_rng(seed)
    layers = [
        Linear(1, hidden, rng=rng, dtype=dtype),
        ReLU(),
        Linear(hidden, hidden, rng=rng, dtype=dtype),
        ReLU(),
        Linear(hidden, 1, rng=rng, dtype=dtype),
    ]
    return Sequential(layers, {"kind": "mlp", "hidden": hidden, "seed": seed})


def build_cnn(arch: CnnArch, seed: int = 0, dtype=np.float32) -> Sequential:
    rng = np.random.default_rng(seed)
    first_kernel = (3, 5) if arch.rank == 1 else (3, 3, 5)
    layers = [ConvST(1, arch.k0, first_kernel, stride_t=4, rng=rng, dtype=dtype)]
    ch = arch.k0
    for b in range(arch.blocks):
        if b > 0:
            layers.append(AvgPool())
        block = DenseBlock(
            ch, arch.rank, growth=arch.growth, n_layers=arch.layers_per_block, rng=rng, dtype=dtype
        )
        layers.append(block)
        ch = block.out_ch
    layers.append(GlobalAvgPool())
    layers.append(Linear(ch, 1, rng=rng, dtype=dtype))
    spec = {
        "kind": "cnn",
        "rank": arch.rank,
        "k0": arch.k0,
        "blocks": arch.blocks,
        "growth": arch.growth,
        "layers_per_block": arch.layers_per_block,
        "seed": seed,
    }
    return Sequential(layers, spec)


def build_from_spec(spec: dict, dtype=np.float32) -> Sequential:
    if spec["kind"] == "mlp":
        return build_mlp(spec["hidden"], seed=spec.get("seed", 0), dtype=dtype)
    if spec["kind"] == "cnn":
        arch = CnnArch(
            rank=spec["rank"],
            k0=spec["k0"],
            blocks=spec["blocks"],
            growth=spec["growth"],
            layers_per_block=spec["layers_per_block"],
        )
        return build_cnn(arch, seed=spec.get("seed", 0), dtype=dtype)
    raise InvalidSpec(f"unknown model kind {spec.get('kind')!r}")


def parameter_count(model: Sequential) -> int:
    return sum(w.size for w, _ in model.params())


def save_model(model: Sequential, path: str) -> None:
    """Checkpoint = one tensor file: flat f32 parameters, architecture and
    per-parameter shapes in the header meta."""
    params = [w for w, _ in model.params()]
    flat = np.concatenate([p.reshape(-1).astype(np.float32) for p in params])
    meta = {
        "arch": json.dumps(model.spec, sort_keys=True),
        "param_shapes": [list(p.shape) for p in params],
    }
    write_tensor(Tensor(flat, ("c",), meta=meta), path)


def load_model(path: str, dtype=np.float32) -> Sequential:
    t = read_tensor(path)
    spec = json.loads(t.meta["arch"])
    model = build_from_spec(spec, dtype=dtype)
    flat = np.asarray(t.data, dtype=dtype)
    offset = 0
    for (w, _), shape in zip(model.params(), t.meta["param_shapes"]):
        n = int(np.prod(shape))
        w[...] = flat[offset : offset + n].reshape(shape)
        offset += n
    if offset != flat.size:
        raise InvalidSpec(f"checkpoint has {flat.size} values, model needs {offset}")
    return model

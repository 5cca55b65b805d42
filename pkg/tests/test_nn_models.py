import numpy as np
import pytest

from ocebench.errors import InvalidSpec
from ocebench.nn import build_cnn, build_mlp, load_model, parameter_count, save_model
from ocebench.nn.gradcheck import grad_check
from ocebench.nn.models import CnnArch, Sequential, build_from_spec


class TestMlp:
    def test_parameter_count_50(self):
        # 1*50+50 + 50*50+50 + 50*1+1
        assert parameter_count(build_mlp(50)) == 2701

    def test_parameter_count_100(self):
        assert parameter_count(build_mlp(100)) == 1 * 100 + 100 + 100 * 100 + 100 + 100 * 1 + 1

    def test_same_seed_same_params(self):
        a, b = build_mlp(50, seed=3), build_mlp(50, seed=3)
        for (wa, _), (wb, _) in zip(a.params(), b.params()):
            assert np.array_equal(wa, wb)

    def test_different_seed_differs(self):
        a, b = build_mlp(50, seed=3), build_mlp(50, seed=4)
        assert any(not np.array_equal(wa, wb) for (wa, _), (wb, _) in zip(a.params(), b.params()))

    def test_invalid(self):
        with pytest.raises(InvalidSpec):
            build_mlp(0)


class TestCnnArchitecture:
    @pytest.mark.parametrize("rank,k0", [(1, 16), (2, 16), (1, 8), (2, 8)])
    def test_head_channels(self, rank, k0):
        arch = CnnArch(rank=rank, k0=k0)
        assert arch.head_channels == k0 + 80

    @pytest.mark.parametrize("rank", [1, 2])
    def test_shape_propagation(self, rank):
        model = build_cnn(CnnArch(rank=rank, k0=16), seed=0)
        shape = (1, 1, 32, 48) if rank == 1 else (1, 1, 32, 8, 48)
        x = np.zeros(shape, dtype=np.float32)
        out = x
        channels = []
        for layer in model.layers:
            out = layer.forward(out)
            if out.ndim > 2:
                channels.append(out.shape[1])
        assert out.shape == (1, 1)
        # blocks end at 36, 56, 76, 96 channels for k0=16
        for want in (36, 56, 76, 96):
            assert want in channels

    def test_dense_block_adds_twenty(self):
        model = build_cnn(CnnArch(rank=1, k0=8), seed=0)
        x = np.zeros((1, 1, 16, 64), dtype=np.float32)
        prev = None
        for layer in model.layers:
            x = layer.forward(x)
            if type(layer).__name__ == "DenseBlock":
                if prev is not None:
                    assert x.shape[1] == prev + 20
                prev = x.shape[1]

    def test_same_seed_identical(self):
        a = build_cnn(CnnArch(rank=1, k0=4), seed=9)
        b = build_cnn(CnnArch(rank=1, k0=4), seed=9)
        for (wa, _), (wb, _) in zip(a.params(), b.params()):
            assert np.array_equal(wa, wb)

    def test_invalid_rank(self):
        with pytest.raises(InvalidSpec):
            CnnArch(rank=3)


class TestFullModelGradients:
    def test_linear_head_exact(self):
        model = Sequential(build_mlp(1, seed=0, dtype=np.float64).layers[-1:], {"kind": "mlp", "hidden": 1})
        rng = np.random.default_rng(0)
        for w, _ in model.params():
            w[...] = rng.standard_normal(w.shape)
        x = rng.standard_normal((6, 1))
        assert grad_check(model, x, rng.standard_normal(6)) < 1e-9

    def test_tiny_cnn_1dt(self):
        model = build_cnn(CnnArch(rank=1, k0=2, blocks=1), seed=1, dtype=np.float64)
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 1, 6, 17))
        assert grad_check(model, x, rng.standard_normal(2)) < 1e-5

    def test_tiny_cnn_2dt(self):
        model = build_cnn(CnnArch(rank=2, k0=2, blocks=1), seed=1, dtype=np.float64)
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 1, 5, 4, 17))
        assert grad_check(model, x, rng.standard_normal(2)) < 1e-5

    def test_tiny_mlp(self):
        model = build_mlp(4, seed=5, dtype=np.float64)
        rng = np.random.default_rng(4)
        x = rng.standard_normal((8, 1))
        assert grad_check(model, x, rng.standard_normal(8)) < 1e-5


class TestCheckpoints:
    def test_roundtrip_mlp(self, tmp_path):
        model = build_mlp(10, seed=2)
        path = str(tmp_path / "m.oct")
        save_model(model, path)
        back = load_model(path)
        x = np.random.default_rng(0).standard_normal((4, 1)).astype(np.float32)
        np.testing.assert_allclose(back.predict(x), model.predict(x), rtol=1e-6)

    def test_roundtrip_cnn(self, tmp_path):
        model = build_cnn(CnnArch(rank=1, k0=4, blocks=2), seed=2)
        path = str(tmp_path / "c.oct")
        save_model(model, path)
        back = load_model(path)
        assert back.spec == model.spec
        x = np.random.default_rng(1).standard_normal((2, 1, 8, 40)).astype(np.float32)
        np.testing.assert_allclose(back.predict(x), model.predict(x), rtol=1e-5, atol=1e-6)

    def test_build_from_spec_unknown(self):
        with pytest.raises(InvalidSpec):
            build_from_spec({"kind": "transformer"})

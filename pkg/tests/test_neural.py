import numpy as np
import pytest

from flowprox.datasets import GaussianSpec
from flowprox.neural import (Mlp, TrainConfig, forward, init_mlp, load_checkpoint,
                             loss_and_grads, save_checkpoint, train_otcfm)
from flowprox.rng import make_rng
from flowprox.schedule import Schedule


def point_mass(x):
    x = np.asarray(x, dtype=float)
    return GaussianSpec(mean=x, cov_sqrt=np.zeros((x.size, x.size)))


class TestForward:
    def test_zero_weights_give_zero(self):
        model = init_mlp([3, 8, 2], "silu", seed=0)
        for w in model.weights:
            w[:] = 0.0
        for x in (np.zeros(2), np.array([1.0, -2.0])):
            assert np.array_equal(forward(model, 0.3, x), np.zeros(2))

    def test_single_linear_layer_identity(self):
        w = np.zeros((2, 3))
        w[:, :2] = np.eye(2)
        model = Mlp([3, 2], [w], [np.zeros(2)], "tanh")
        x = np.array([0.7, -1.3])
        assert np.array_equal(forward(model, 0.9, x), x)

    def test_deterministic_output(self):
        a = forward(init_mlp([3, 16, 2], "silu", seed=5), 0.4, np.array([0.1, 0.2]))
        b = forward(init_mlp([3, 16, 2], "silu", seed=5), 0.4, np.array([0.1, 0.2]))
        assert np.array_equal(a, b)

    def test_dimension_mismatch(self):
        model = init_mlp([3, 8, 2], "silu", seed=0)
        with pytest.raises(ValueError):
            forward(model, 0.5, np.zeros(3))


@pytest.mark.parametrize("activation", ["tanh", "silu"])
def test_gradients_match_finite_differences(activation):
    model = init_mlp([3, 8, 2], activation, seed=3)
    rng = make_rng(1)
    ts = rng.uniform(0, 1, 6)
    xs = rng.standard_normal((6, 2))
    ys = rng.standard_normal((6, 2))
    _, gw, gb = loss_and_grads(model, ts, xs, ys)
    h = 1e-6
    worst = 0.0
    for li, (w, b) in enumerate(zip(model.weights, model.biases)):
        for param, grad in ((w, gw[li]), (b, gb[li])):
            flat = param.reshape(-1)
            for idx in range(0, flat.size, max(1, flat.size // 7)):
                orig = flat[idx]
                flat[idx] = orig + h
                lp, _, _ = loss_and_grads(model, ts, xs, ys)
                flat[idx] = orig - h
                lm, _, _ = loss_and_grads(model, ts, xs, ys)
                flat[idx] = orig
                fd = (lp - lm) / (2 * h)
                worst = max(worst, abs(fd - grad.reshape(-1)[idx]) / (abs(fd) + 1e-8))
    assert worst <= 1e-4


class TestTraining:
    def test_single_point_target_learnable(self):
        cfg = TrainConfig(batch_size=32, steps=2000, lr=1e-3,
                          schedule=Schedule.affine(), seed=0, hidden_dims=(32, 32))
        model, losses = train_otcfm(point_mass([1.0, -0.5]), cfg)
        assert losses[-1] < 0.1 * losses[0]
        # oracle: the conditional field at the path point recovers x1 - x0
        rng = make_rng(4)
        errs = []
        for _ in range(50):
            x0 = rng.standard_normal(2)
            t = float(rng.uniform(0.1, 0.9))
            xt = (1 - t) * x0 + t * np.array([1.0, -0.5])
            target = np.array([1.0, -0.5]) - x0
            errs.append(np.linalg.norm(forward(model, t, xt) - target))
        assert np.mean(errs) < 0.5

    def test_windowed_loss_decrease(self):
        cfg = TrainConfig(batch_size=32, steps=1000, lr=1e-3,
                          schedule=Schedule.affine(), seed=1, hidden_dims=(32, 32))
        _, losses = train_otcfm(point_mass([0.5, 0.5]), cfg)
        windows = losses.reshape(10, 100).mean(axis=1)
        violations = int(np.sum(np.diff(windows) > 0))
        assert violations <= max(1, int(0.05 * (len(windows) - 1)))

    def test_deterministic_loss_trace(self):
        cfg = TrainConfig(batch_size=16, steps=50, lr=1e-3,
                          schedule=Schedule.affine(), seed=7, hidden_dims=(16,))
        _, l1 = train_otcfm(point_mass([0.0, 0.0]), cfg)
        _, l2 = train_otcfm(point_mass([0.0, 0.0]), cfg)
        assert np.array_equal(l1, l2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=1, steps=10, lr=1e-3, schedule=Schedule.affine())
        with pytest.raises(ValueError):
            TrainConfig(batch_size=8, steps=10, lr=0.0, schedule=Schedule.affine())


class TestCheckpoint:
    def roundtrip(self, tmp_path, model):
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        return path, load_checkpoint(path)

    def test_bit_exact_roundtrip(self, tmp_path):
        model = init_mlp([3, 32, 32, 2], "silu", seed=9)
        _, back = self.roundtrip(tmp_path, model)
        assert back.layer_dims == model.layer_dims
        assert back.activation == model.activation
        assert all(np.array_equal(a, b) for a, b in zip(model.weights, back.weights))
        assert all(np.array_equal(a, b) for a, b in zip(model.biases, back.biases))

    def test_truncated_file_rejected(self, tmp_path):
        model = init_mlp([3, 8, 2], "silu", seed=0)
        path, _ = self.roundtrip(tmp_path, model)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(ValueError, match="offset"):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        model = init_mlp([3, 8, 2], "silu", seed=0)
        path, _ = self.roundtrip(tmp_path, model)
        data = bytearray(path.read_bytes())
        data[0] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)

    def test_version_mismatch_rejected(self, tmp_path):
        model = init_mlp([3, 8, 2], "silu", seed=0)
        path, _ = self.roundtrip(tmp_path, model)
        data = bytearray(path.read_bytes())
        data[16] = 99
        path.write_bytes(bytes(data))
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        model = init_mlp([3, 8, 2], "silu", seed=0)
        path, _ = self.roundtrip(tmp_path, model)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ValueError, match="trailing"):
            load_checkpoint(path)

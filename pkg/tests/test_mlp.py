import numpy as np
import pytest

from bayescircuit.mlp import (
    HIDDEN_INIT_GAIN,
    MlpParams,
    adam_update,
    backward,
    forward,
    init,
    init_adam,
    learning_rate,
    load_params,
    save_params,
)


def zero_params(d_z=3, d_h=4, d_y=3):
    return MlpParams(
        np.zeros((d_h, d_z)), np.zeros(d_h), np.zeros((d_y, d_h)), np.zeros(d_y)
    )


class TestForward:
    def test_zero_params(self):
        y, hidden = forward(zero_params(), np.array([1.0, -2.0, 0.5]))
        assert np.allclose(hidden, 0.5)
        assert np.allclose(y, 1.0)

    def test_output_bias(self):
        p = zero_params()
        p = MlpParams(p.w_h, p.b_h, p.w_o, np.full(3, np.log(2.0)))
        y, _ = forward(p, np.zeros(3))
        assert np.allclose(y, 2.0)

    def test_positivity_random(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            p = init(5, 7, 5, rng)
            y, _ = forward(p, rng.normal(scale=10.0, size=5))
            assert np.all(y > 0)

    def test_determinism(self):
        rng = np.random.default_rng(1)
        p = init(4, 6, 4, rng)
        z = np.array([0.1, -0.5, 2.0, 1.0])
        y1, h1 = forward(p, z)
        y2, h2 = forward(p, z)
        assert np.array_equal(y1, y2) and np.array_equal(h1, h2)

    def test_clamp(self):
        p = zero_params()
        p = MlpParams(p.w_h, p.b_h, p.w_o, np.full(3, 100.0))
        y, _ = forward(p, np.zeros(3))
        assert np.allclose(y, np.exp(30.0))


class TestBackward:
    def test_zero_delta(self):
        rng = np.random.default_rng(2)
        p = init(3, 4, 3, rng)
        g = backward(p, rng.normal(size=3), np.zeros(3))
        assert all(
            np.all(a == 0) for a in (g.w_h, g.b_h, g.w_o, g.b_o)
        )

    def test_output_bias_gradient(self):
        rng = np.random.default_rng(3)
        p = init(3, 4, 3, rng)
        z = rng.normal(size=3)
        delta = rng.normal(size=3)
        y, _ = forward(p, z)
        g = backward(p, z, delta)
        assert np.allclose(g.b_o, delta * y)

    @pytest.mark.parametrize("seed", range(10))
    def test_finite_difference(self, seed):
        # Moderate weights keep every sigmoid away from saturation so the
        # central difference stays well conditioned at this tolerance.
        rng = np.random.default_rng(seed)
        p = MlpParams(
            rng.normal(scale=0.5, size=(4, 3)),
            rng.normal(scale=0.5, size=4),
            rng.normal(scale=0.5, size=(3, 4)),
            rng.normal(scale=0.5, size=3),
        )
        z = rng.normal(size=3)
        delta = rng.normal(size=3)
        g = backward(p, z, delta)
        eps = 1e-6

        def objective(params):
            y, _ = forward(params, z)
            return float(delta @ y)

        for name in ("w_h", "b_h", "w_o", "b_o"):
            arr = getattr(p, name)
            grad = getattr(g, name)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                hi = {n: getattr(p, n).copy() for n in ("w_h", "b_h", "w_o", "b_o")}
                lo = {n: v.copy() for n, v in hi.items()}
                hi[name][idx] += eps
                lo[name][idx] -= eps
                fd = (objective(MlpParams(**hi)) - objective(MlpParams(**lo))) / (
                    2 * eps
                )
                scale = max(abs(fd), abs(grad[idx]), 1e-8)
                assert abs(fd - grad[idx]) / scale < 1e-5


class TestAdam:
    def test_zero_gradient_no_move(self):
        rng = np.random.default_rng(4)
        p = init(3, 4, 3, rng)
        p2, _ = adam_update(p, init_adam(p), p.map(np.zeros_like), 1e-3)
        assert np.allclose(p2.w_h, p.w_h)

    def test_constant_gradient_bounded_step(self):
        p = zero_params(1, 1, 1)
        s = init_adam(p)
        g = p.map(lambda a: np.full_like(a, 0.3))
        alpha = 1e-3
        prev = p
        for _ in range(500):
            prev, s = adam_update(prev, s, g, alpha)
        before = prev.b_o.copy()
        prev, s = adam_update(prev, s, g, alpha)
        # asymptotic per-step movement approaches alpha * sign(g)
        assert abs((before - prev.b_o)[0] - alpha) < 1e-5

    def test_learning_rate_schedule(self):
        assert learning_rate(1) == pytest.approx(5e-5)
        assert learning_rate(2) == pytest.approx(4e-5)
        assert learning_rate(3) == pytest.approx(3.2e-5)


class TestInit:
    def test_flat_initial_prediction(self):
        rng = np.random.default_rng(5)
        p = init(10, 20, 10, rng)
        y, _ = forward(p, np.zeros(10))
        assert np.allclose(y, 1.0)

    def test_uniform_std(self):
        rng = np.random.default_rng(6)
        p = init(500, 200, 500, rng)
        bound = np.sqrt(6.0 / 700)
        expected_hidden_std = HIDDEN_INIT_GAIN * bound / np.sqrt(3.0)
        expected_output_std = bound / np.sqrt(3.0)
        assert abs(p.w_h.std() / expected_hidden_std - 1) < 0.02
        assert abs(p.w_o.std() / expected_output_std - 1) < 0.02

    def test_seed_determinism(self):
        p1 = init(4, 5, 4, np.random.default_rng(7))
        p2 = init(4, 5, 4, np.random.default_rng(7))
        assert np.array_equal(p1.w_h, p2.w_h)
        assert np.array_equal(p1.w_o, p2.w_o)


class TestCheckpoint:
    def test_bit_exact_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        p = init(6, 9, 6, rng)
        path = tmp_path / "params.npz"
        save_params(path, p)
        q = load_params(path)
        for name in ("w_h", "b_h", "w_o", "b_o"):
            assert np.array_equal(getattr(p, name), getattr(q, name))

import math

import numpy as np
import pytest

from conftest import all_frames, random_frame
from gradcheck import block_error, conv_error, network_error
from pseudocount.density import QuantizedFrame
from pseudocount.errors import DomainError, ShapeError
from pseudocount.pixelcnn import (
    MaskedConv2d,
    RmsProp,
    SlimPixelCNN,
    causal_mask,
    causal_taps,
    log_softmax,
    nll_grad,
    nll_loss,
)


def small(h=4, w=4, bins=4, **kw):
    kw.setdefault("channels", 4)
    kw.setdefault("hidden", 8)
    kw.setdefault("kernel_size", 3)
    return SlimPixelCNN(h, w, bins=bins, **kw)


class TestMasks:
    def test_mask_a_3x3(self):
        np.testing.assert_array_equal(causal_mask(3, "A"), [[1, 1, 1], [1, 0, 0], [0, 0, 0]])

    def test_mask_b_3x3(self):
        np.testing.assert_array_equal(causal_mask(3, "B"), [[1, 1, 1], [1, 1, 0], [0, 0, 0]])

    def test_tap_counts(self):
        assert len(causal_taps(7, "A")) == 24
        assert len(causal_taps(7, "B")) == 25
        assert causal_taps(1, "B") == [(0, 0)]
        assert causal_taps(1, "A") == []

    def test_bad_kind(self):
        with pytest.raises(DomainError):
            causal_mask(3, "C")

    def test_masked_init_zero(self):
        layer = MaskedConv2d(2, 3, 5, "A", np.random.default_rng(0))
        assert np.all(layer.weight[:, :, causal_mask(5, "A") == 0] == 0)


class TestForward:
    def test_shapes(self, rng):
        m = small(5, 6, bins=3)
        assert m.forward(random_frame(rng, 5, 6, bins=3)).shape == (3, 5, 6)

    def test_zero_output_uniform(self, rng):
        m = small(zero_output=True)
        logits = m.forward(random_frame(rng, 4, 4, bins=4))
        assert np.all(logits == 0.0)
        assert m.log_prob(random_frame(rng, 4, 4, bins=4)) == pytest.approx(16 * math.log(1 / 4), abs=1e-12)

    def test_softmax_normalized(self, rng):
        lsm = log_softmax(small().forward(random_frame(rng, 4, 4, bins=4)))
        np.testing.assert_allclose(np.exp(lsm).sum(axis=0), 1.0, atol=1e-9)

    def test_top_left_depends_on_biases_only(self, rng):
        m = small()
        ref = m.forward(random_frame(rng, 4, 4, bins=4))[:, 0, 0]
        for _ in range(10):
            assert np.array_equal(m.forward(random_frame(rng, 4, 4, bins=4))[:, 0, 0], ref)

    def test_causality_probes(self, rng):
        m = SlimPixelCNN(8, 8, bins=8, seed=1)
        for _ in range(50):
            x = rng.integers(0, 8, size=(8, 8))
            i = int(rng.integers(0, 63))
            base = m.forward(QuantizedFrame(x, bins=8)).reshape(8, -1)[:, i].copy()
            j = int(rng.integers(i + 1, 64))
            y = x.copy().reshape(-1)
            y[j] = (y[j] + int(rng.integers(1, 8))) % 8
            out = m.forward(QuantizedFrame(y.reshape(8, 8), bins=8)).reshape(8, -1)[:, i]
            assert np.array_equal(out, base)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            small().forward(random_frame(rng, 3, 4))

    def test_deterministic(self, rng):
        x = random_frame(rng, 4, 4, bins=4)
        assert np.array_equal(small(seed=5).forward(x), small(seed=5).forward(x))


class TestLoss:
    def test_uniform_logits(self):
        assert nll_loss(np.zeros((4, 3, 5)), np.zeros((3, 5), dtype=int)) == pytest.approx(15 * math.log(4))

    def test_saturated_correct_logits(self):
        x = np.array([[0, 2], [1, 1]])
        logits = np.zeros((3, 2, 2))
        for (i, j), v in np.ndenumerate(x):
            logits[v, i, j] = 60.0
        assert nll_loss(logits, x) < 1e-20 * 1e5

    def test_matches_log_prob(self, rng):
        m = small()
        x = random_frame(rng, 4, 4, bins=4)
        assert nll_loss(m.forward(x), x) == pytest.approx(-m.log_prob(x), abs=1e-12)

    def test_zero_weights_bias_gradient(self):
        # Zero logits: softmax is 1/b; summed over pixels, each bin gets
        # d/b minus the number of pixels observed in that bin.
        m = small(2, 3, bins=4, zero_output=True)
        x = QuantizedFrame(np.array([[0, 0, 1], [3, 3, 3]]), bins=4)
        g = m.backward(x)["conv_out.bias"]
        np.testing.assert_allclose(g, [6 / 4 - 2, 6 / 4 - 1, 6 / 4, 6 / 4 - 3], atol=1e-15)

    def test_nll_grad_rows_sum_to_zero(self, rng):
        g = nll_grad(rng.normal(size=(5, 3, 3)), rng.integers(0, 5, size=(3, 3)))
        np.testing.assert_allclose(g.sum(axis=0), 0.0, atol=1e-14)


class TestGradients:
    @pytest.mark.parametrize("kind,kernel,cin,cout", [("A", 7, 1, 16), ("A", 3, 2, 3), ("B", 3, 2, 3),
                                                      ("B", 1, 16, 32), ("B", 1, 64, 8)])
    def test_masked_conv(self, kind, kernel, cin, cout, rng):
        assert conv_error(kind, kernel, cin, cout, rng) < 1e-4

    def test_gated_block(self, rng):
        assert block_error(4, rng) < 1e-4

    def test_composed_small(self, rng):
        assert network_error(rng, 4, 4, bins=4, channels=4, hidden=8, kernel_size=3) < 1e-4

    def test_masked_positions_zero_gradient(self, rng):
        m = SlimPixelCNN(6, 6, bins=8)
        grads = m.backward(random_frame(rng, 6, 6))
        for name, mask in m.masks().items():
            assert np.all(grads[name][:, :, mask == 0] == 0.0)


class TestRmsProp:
    def test_zero_gradient_no_change(self):
        w = {"w": np.array([1.0, -2.0])}
        RmsProp().step(w, {"w": np.zeros(2)}, 1)
        np.testing.assert_array_equal(w["w"], [1.0, -2.0])

    def test_scalar_step(self):
        lr = 1e-3
        w = {"w": np.array([0.0])}
        RmsProp(lr=lr).step(w, {"w": np.array([1.0])}, 1)
        # 1 / sqrt(0.05 + 1e-4) = 4.46767...
        assert -w["w"][0] == pytest.approx(lr / math.sqrt(0.0501), rel=1e-14)
        assert -w["w"][0] / lr == pytest.approx(4.468, abs=1e-3)

    def test_momentum_second_step(self):
        lr = 0.01
        opt = RmsProp(lr=lr)
        w = {"w": np.array([0.0])}
        opt.step(w, {"w": np.array([1.0])}, 1)
        opt.step(w, {"w": np.array([1.0])}, 2)
        m1 = lr / math.sqrt(0.0501)
        ms2 = 0.95 * 0.05 + 0.05
        m2 = 0.9 * m1 + lr / math.sqrt(ms2 + 1e-4)
        assert -w["w"][0] == pytest.approx(m1 + m2, rel=1e-14)

    @pytest.mark.parametrize("schedule,n,expected", [("constant", 9, 1e-3), ("inverse", 4, 2.5e-4),
                                                     ("inverse_sqrt", 4, 5e-4)])
    def test_schedules(self, schedule, n, expected):
        assert RmsProp(lr=1e-3, schedule=schedule).learning_rate(n) == pytest.approx(expected)

    def test_non_finite_fault(self):
        opt = RmsProp()
        w = {"w": np.array([1.0])}
        assert opt.step(w, {"w": np.array([np.nan])}, 1) is False
        assert opt.faults == 1 and w["w"][0] == 1.0

    def test_invalid(self):
        with pytest.raises(DomainError):
            RmsProp(lr=0.0)
        with pytest.raises(DomainError):
            RmsProp(schedule="cosine")
        with pytest.raises(DomainError):
            RmsProp().learning_rate(0)


class TestTraining:
    def test_pg_update_counts(self, rng):
        m = small()
        for k in range(1, 6):
            assert m.pg_update(random_frame(rng, 4, 4, bins=4)).step_index == k
        assert m.update_count == 5

    def test_online_identity(self, rng):
        m = small()
        x = random_frame(rng, 4, 4, bins=4)
        out = m.pg_update(x)
        assert abs(m.log_prob(x) - out.log_rho_prime) <= 1e-12

    def test_constant_frame_learning(self, rng):
        m = small(6, 6, bins=8, seed=2)
        x = random_frame(rng, 6, 6)
        outs = [m.pg_update(x) for _ in range(1000)]
        gains = np.array([o.pg for o in outs])
        losses = -np.array([o.log_rho for o in outs])
        # Positive while the model is still fitting the frame. Once the loss
        # plateaus, momentum overshoot makes the sign of pg roughly a coin flip.
        assert np.all(gains[:150] > 0)
        windows = losses.reshape(10, 100).mean(axis=1)
        assert windows[-1] < windows[0]
        assert np.all(np.diff(windows) < 1e-3)

    def test_negative_pg_reported_raw(self, rng):
        m = small(4, 4, bins=4, seed=0, optimizer=RmsProp(lr=0.05))
        gains = [m.pg_update(random_frame(rng, 4, 4, bins=4)).pg for _ in range(200)]
        assert min(gains) < 0

    def test_mask_preservation(self, rng):
        m = small(3, 3, bins=4, kernel_size=5, optimizer=RmsProp(lr=0.01))
        frames = [random_frame(rng, 3, 3, bins=4) for _ in range(16)]
        for k in range(10_000):
            m.update(frames[k % 16])
        for name, mask in m.masks().items():
            assert np.all(m.parameters()[name][:, :, mask == 0] == 0.0)

    def test_bit_identical_twins(self, rng):
        a, b = small(seed=4), small(seed=4)
        for _ in range(30):
            x = random_frame(rng, 4, 4, bins=4)
            a.update(x)
            b.update(x)
        for k, v in a.parameters().items():
            assert np.array_equal(v, b.parameters()[k])

    def test_normalization_tiny(self, rng):
        m = SlimPixelCNN(2, 2, bins=2, channels=2, hidden=4, kernel_size=3, seed=1)
        for _ in range(50):
            m.update(random_frame(rng, 2, 2, bins=2))
        total = sum(math.exp(m.log_prob(f)) for f in all_frames(2, 2, 2))
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_float32_mode(self, rng):
        m = small(dtype=np.float32)
        x = random_frame(rng, 4, 4, bins=4)
        assert m.forward(x).dtype == np.float32
        assert np.isfinite(m.pg_update(x).pg)

    def test_checkpoint_roundtrip(self, rng, tmp_path):
        m = small(optimizer=RmsProp(schedule="inverse_sqrt"))
        for _ in range(5):
            m.update(random_frame(rng, 4, 4, bins=4))
        m.save(tmp_path / "p.npz")
        loaded = SlimPixelCNN.load(tmp_path / "p.npz")
        assert loaded.update_count == 5 and loaded.optimizer.schedule == "inverse_sqrt"
        x = random_frame(rng, 4, 4, bins=4)
        assert loaded.pg_update(x) == m.pg_update(x)

    def test_sample_shape(self, rng):
        f = small(3, 3).sample(rng)
        assert f.shape == (3, 3) and f.bins == 4

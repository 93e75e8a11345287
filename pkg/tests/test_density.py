import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import all_frames, random_frame
from pseudocount.bonus import exact_pseudo_count
from pseudocount.cts import CtsFrameModel
from pseudocount.density import EmpiricalCountModel, QuantizedFrame, preprocess
from pseudocount.errors import DomainError, ShapeError, UnsupportedOperation
from pseudocount.pixelcnn import SlimPixelCNN


def frame(rows, bins=8):
    return QuantizedFrame(np.array(rows), bins=bins)


A = frame([[0, 1]], bins=2)
B = frame([[1, 1]], bins=2)


def tiny_models(h, w, bins, seed=0):
    return {
        "empirical": EmpiricalCountModel(h, w, bins),
        "cts": CtsFrameModel(h, w, bins, depth=4),
        "conv_cts": CtsFrameModel(h, w, bins, depth=4, mode="convolutional"),
        "pixelcnn": SlimPixelCNN(h, w, bins=bins, channels=4, hidden=8, kernel_size=3, seed=seed),
    }


class TestQuantizedFrame:
    def test_out_of_range(self):
        with pytest.raises(DomainError):
            frame([[0, 8]])

    def test_not_2d(self):
        with pytest.raises(ShapeError):
            QuantizedFrame(np.zeros(4, dtype=int))

    def test_immutable(self):
        f = frame([[1, 2], [3, 4]])
        with pytest.raises(ValueError):
            f.pixels[0, 0] = 5

    def test_identity(self):
        assert frame([[1, 2]]) == frame([[1, 2]])
        assert hash(frame([[1, 2]])) == hash(frame([[1, 2]]))
        assert frame([[1, 2]]) != frame([[2, 1]])
        assert frame([[1, 1]], bins=2) != frame([[1, 1]], bins=8)


class TestPreprocess:
    def test_zero_image(self):
        out = preprocess(np.zeros((84, 84)), 42, 42)
        assert out.shape == (42, 42) and out.pixels.max() == 0

    def test_max_image(self):
        out = preprocess(np.full((84, 84), 255, dtype=np.uint8), 42, 42, bins=8)
        assert out.pixels.min() == 7

    def test_checkerboard_blocks(self):
        cells = (np.add.outer(np.arange(42), np.arange(42)) % 2).astype(float)
        raw = np.kron(cells, np.ones((2, 2)))
        out = preprocess(raw, 42, 42, bins=8)
        np.testing.assert_array_equal(out.pixels, cells.astype(int) * 7)

    def test_block_average(self):
        raw = np.array([[0.0, 0.5], [0.5, 1.0]])
        # mean 0.5 lands in bin floor(0.5 * 4) = 2
        assert preprocess(raw, 1, 1, bins=4).pixels[0, 0] == 2

    def test_non_divisible_area_average(self):
        raw = np.array([[0.0, 0.0, 1.0]])
        # Left output pixel covers [0, 1.5): mean 0; right covers [1.5, 3): (0.5*0 + 1)/1.5
        out = preprocess(raw, 2, 1, bins=3)
        np.testing.assert_array_equal(out.pixels, [[0, 2]])

    def test_target_too_large(self):
        with pytest.raises(ShapeError):
            preprocess(np.zeros((10, 10)), 11, 10)

    def test_bins_validated(self):
        with pytest.raises(DomainError):
            preprocess(np.zeros((4, 4)), 2, 2, bins=1)

    @settings(max_examples=100, deadline=None)
    @given(px=hnp.arrays(np.int64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                         elements=st.integers(0, 7)))
    def test_idempotent_on_quantized_input(self, px):
        f = QuantizedFrame(px, bins=8)
        assert preprocess(f, f.width, f.height, bins=8) == f

    def test_deterministic(self, rng):
        raw = rng.uniform(size=(50, 37))
        assert preprocess(raw, 10, 7) == preprocess(raw.copy(), 10, 7)


class TestEmpiricalModel:
    def test_log_prob(self):
        m = EmpiricalCountModel(1, 2, bins=2)
        for _ in range(2):
            m.update(A)
        for _ in range(8):
            m.update(B)
        assert m.log_prob(A) == pytest.approx(math.log(0.2), abs=1e-15)

    def test_unseen_is_flagged_zero(self):
        m = EmpiricalCountModel(1, 2, bins=2)
        m.update(A)
        assert m.log_prob(B) == -math.inf

    def test_pg_single_frame(self):
        m = EmpiricalCountModel(1, 2, bins=2)
        m.update(A)
        out = m.pg_update(A)
        assert out.pg == 0.0 and out.step_index == 2

    def test_pg_two_frames(self):
        m = EmpiricalCountModel(1, 2, bins=2)
        m.update(A)
        m.update(B)
        assert m.pg_update(A).pg == pytest.approx(math.log(4 / 3), abs=1e-15)

    def test_query_pg_no_mutation(self):
        m = EmpiricalCountModel(1, 2, bins=2)
        m.update(A)
        m.update(B)
        first, second = m.query_pg(A), m.query_pg(A)
        assert first == second and m.total == 2
        clone = m.clone()
        assert clone.pg_update(A).pg == pytest.approx(first.pg, abs=1e-15)

    def test_shape_mismatch(self):
        m = EmpiricalCountModel(2, 2, bins=2)
        with pytest.raises(ShapeError):
            m.log_prob(A)
        with pytest.raises(ShapeError):
            m.update(frame([[0, 0], [0, 0]], bins=4))

    def test_sample_point_mass(self, rng):
        m = EmpiricalCountModel(1, 2, bins=2)
        m.update(A)
        assert all(m.sample(rng) == A for _ in range(20))

    def test_sample_empty(self, rng):
        with pytest.raises(DomainError):
            EmpiricalCountModel(1, 2, bins=2).sample(rng)

    @settings(max_examples=50, deadline=None)
    @given(seq=st.lists(st.integers(0, 3), min_size=1, max_size=60))
    def test_learning_positive(self, seq):
        m = EmpiricalCountModel(1, 2, bins=2)
        frames = list(all_frames(1, 2, 2))
        for i in seq:
            assert m.pg_update(frames[i]).pg >= 0.0


class TestModelContract:
    @pytest.mark.parametrize("kind", ["empirical", "cts", "conv_cts", "pixelcnn"])
    def test_normalization_brute_force(self, kind, rng):
        model = tiny_models(2, 2, 3)[kind]
        for _ in range(30):
            model.update(random_frame(rng, 2, 2, bins=3))
        total = sum(math.exp(model.log_prob(f)) for f in all_frames(2, 2, 3))
        assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("kind", ["empirical", "cts", "conv_cts", "pixelcnn"])
    def test_online_identity(self, kind, rng):
        model = tiny_models(3, 3, 4)[kind]
        for _ in range(15):
            x = random_frame(rng, 3, 3, bins=4)
            out = model.pg_update(x)
            after = model.log_prob(x)
            if math.isinf(after):
                assert after == out.log_rho_prime
            else:
                assert abs(after - out.log_rho_prime) <= 1e-12
            assert out.step_index == model.update_count

    def test_pixelcnn_uniform_single_pixel(self):
        m = SlimPixelCNN(1, 1, bins=2, channels=4, hidden=8, kernel_size=3, zero_output=True)
        assert m.log_prob(QuantizedFrame(np.array([[1]]), bins=2)) == pytest.approx(math.log(0.5), abs=1e-15)

    def test_pixelcnn_stationary_point_mass_learns(self):
        m = SlimPixelCNN(4, 4, bins=4, channels=4, hidden=8, kernel_size=3, seed=3)
        x = QuantizedFrame(np.full((4, 4), 2), bins=4)
        gains = [m.pg_update(x).pg for _ in range(20)]
        assert all(g > 0 for g in gains[3:])

    def test_pixelcnn_query_unsupported(self):
        m = SlimPixelCNN(2, 2, bins=2, channels=4, hidden=8, kernel_size=3)
        with pytest.raises(UnsupportedOperation):
            m.query_pg(QuantizedFrame(np.zeros((2, 2), dtype=int), bins=2))

    def test_pixelcnn_zero_output_samples_uniform(self):
        m = SlimPixelCNN(4, 4, bins=2, channels=4, hidden=8, kernel_size=3, zero_output=True)
        r = np.random.default_rng(0)
        draws = np.stack([m.sample(r).pixels for _ in range(200)])
        # 3200 fair bits: mean within 4 sigma of 1/2
        assert abs(draws.mean() - 0.5) < 4 * 0.5 / math.sqrt(draws.size)

    @pytest.mark.parametrize("mode", ["location", "convolutional"])
    def test_cts_sampling_frequencies(self, mode):
        rng = np.random.default_rng(7)
        model = CtsFrameModel(2, 2, 2, depth=4, mode=mode)
        for _ in range(40):
            model.update(random_frame(rng, 2, 2, bins=2))
        frames = list(all_frames(2, 2, 2))
        probs = np.array([math.exp(model.log_prob(f)) for f in frames])
        index = {f: i for i, f in enumerate(frames)}
        n = 100_000 if mode == "location" else 20_000
        counts = np.zeros(len(frames))
        for _ in range(n):
            counts[index[model.sample(rng)]] += 1
        sigma = np.sqrt(n * probs * (1 - probs))
        assert np.all(np.abs(counts - n * probs) <= 3 * sigma + 1)


class TestEmpiricalFromCounts:
    def test_matches_streamed_updates(self, rng):
        frames = [random_frame(rng, 2, 2, bins=2) for _ in range(40)]
        streamed = EmpiricalCountModel(2, 2, 2)
        for f in frames:
            streamed.update(f)
        built = EmpiricalCountModel.from_counts(streamed.counts)
        assert built.total == streamed.total
        for f in frames:
            assert built.log_prob(f) == streamed.log_prob(f)

    def test_probability_pair_is_exact(self):
        a = QuantizedFrame(np.array([[0]]), bins=2)
        b = QuantizedFrame(np.array([[1]]), bins=2)
        pair = EmpiricalCountModel.from_counts({a: 3, b: 9998}).probability_pair(a)
        assert (pair.rho, pair.rho_prime) == (Fraction(3, 10001), Fraction(4, 10002))
        assert exact_pseudo_count(pair).pc == 3.0

    def test_large_count_exact_where_floats_are_not(self):
        a = QuantizedFrame(np.array([[0]]), bins=2)
        b = QuantizedFrame(np.array([[1]]), bins=2)
        model = EmpiricalCountModel.from_counts({a: 9990, b: 10})
        assert exact_pseudo_count(model.probability_pair(a)).pc == 9990.0

    def test_rejects_empty_and_negative(self):
        with pytest.raises(DomainError):
            EmpiricalCountModel.from_counts({})
        with pytest.raises(DomainError):
            EmpiricalCountModel.from_counts({QuantizedFrame(np.array([[0]]), bins=2): -1})
        with pytest.raises(DomainError):
            EmpiricalCountModel(1, 1, 2).probability_pair(QuantizedFrame(np.array([[0]]), bins=2))

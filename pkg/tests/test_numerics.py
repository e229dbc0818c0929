"""Primitive-level tests against independent brute-force oracles."""

import math

import numpy as np
import pytest

from stc import numerics


# --- oracles -----------------------------------------------------------------


def matmul_oracle(a, b):
    """Naive triple loop with float64 accumulation."""
    rows, inner = a.shape
    cols = b.shape[1]
    out = np.zeros((rows, cols), dtype=np.float64)
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += float(a[i, k]) * float(b[k, j])
            out[i, j] = acc
    return out


def layer_norm_oracle(x, gamma, beta, eps):
    """Two-pass mean/variance per row."""
    out = np.zeros_like(x, dtype=np.float64)
    for i, row in enumerate(x):
        vals = [float(v) for v in row]
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / len(vals)
        denom = math.sqrt(var + eps)
        out[i] = [(v - mean) / denom * float(g) + float(b) for v, g, b in zip(vals, gamma, beta)]
    return out


def softmax_oracle(x):
    out = np.zeros_like(x, dtype=np.float64)
    for i, row in enumerate(x):
        shifted = [float(v) - max(float(v) for v in row) for v in row]
        exps = [math.exp(v) for v in shifted]
        total = sum(exps)
        out[i] = [e / total for e in exps]
    return out


def top_k_oracle(scores, k, direction):
    """Full stable sort by (score, index); ties go to the lower index."""
    sign = -1.0 if direction == "largest" else 1.0
    order = sorted(range(len(scores)), key=lambda i: (sign * float(scores[i]), i))
    return sorted(order[:k])


# --- matmul ------------------------------------------------------------------


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((3, 3), dtype=np.float32)
        assert np.allclose(numerics.matmul(np.eye(3, dtype=np.float32), m), m, atol=1e-7)

    def test_scalar_case(self):
        out = numerics.matmul(np.array([[2.0]], dtype=np.float32), np.array([[3.0]], dtype=np.float32))
        assert out.shape == (1, 1)
        assert out[0, 0] == 6.0

    def test_against_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((4, 5), dtype=np.float32)
        b = rng.standard_normal((5, 3), dtype=np.float32)
        assert np.max(np.abs(numerics.matmul(a, b) - matmul_oracle(a, b))) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            numerics.matmul(np.zeros((2, 3), dtype=np.float32), np.zeros((2, 3), dtype=np.float32))

    def test_associativity_property(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = rng.standard_normal((3, 4), dtype=np.float32)
            b = rng.standard_normal((4, 5), dtype=np.float32)
            c = rng.standard_normal((5, 2), dtype=np.float32)
            left = numerics.matmul(numerics.matmul(a, b), c)
            right = numerics.matmul(a, numerics.matmul(b, c))
            rel = np.max(np.abs(left - right)) / max(np.max(np.abs(right)), 1e-12)
            assert rel < 1e-4

    def test_returns_float32(self):
        out = numerics.matmul(np.ones((2, 2), dtype=np.float32), np.ones((2, 2), dtype=np.float32))
        assert out.dtype == np.float32


# --- layer norm ----------------------------------------------------------------


class TestLayerNorm:
    def test_constant_row_zeroed_by_eps(self):
        x = np.full((1, 8), 3.25, dtype=np.float32)
        out = numerics.layer_norm(x, np.ones(8, np.float32), np.zeros(8, np.float32), eps=1e-5)
        assert np.array_equal(out, np.zeros((1, 8), dtype=np.float32))

    def test_already_normalized_row(self):
        x = np.array([[1.0, -1.0]], dtype=np.float32)
        out = numerics.layer_norm(x, np.ones(2, np.float32), np.zeros(2, np.float32), eps=1e-12)
        assert np.allclose(out, [[1.0, -1.0]], atol=1e-6)

    def test_against_two_pass_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((5, 16), dtype=np.float32)
        gamma = rng.standard_normal(16).astype(np.float32)
        beta = rng.standard_normal(16).astype(np.float32)
        out = numerics.layer_norm(x, gamma, beta, eps=1e-5)
        assert np.max(np.abs(out - layer_norm_oracle(x, gamma, beta, 1e-5))) < 1e-6

    def test_param_length_checked(self):
        with pytest.raises(ValueError, match="length"):
            numerics.layer_norm(np.zeros((2, 4), np.float32), np.ones(3, np.float32), np.zeros(4, np.float32))

    def test_eps_positive(self):
        with pytest.raises(ValueError, match="eps"):
            numerics.layer_norm(np.zeros((1, 2), np.float32), np.ones(2, np.float32), np.zeros(2, np.float32), eps=0.0)


# --- softmax -------------------------------------------------------------------


class TestSoftmaxRows:
    def test_equal_values_uniform(self):
        out = numerics.softmax_rows(np.full((2, 5), 7.0, dtype=np.float32))
        assert np.allclose(out, 0.2, atol=1e-7)

    def test_analytic_two_entry_row(self):
        out = numerics.softmax_rows(np.array([[0.0, math.log(3.0)]], dtype=np.float32))
        assert np.allclose(out, [[0.25, 0.75]], atol=1e-6)

    def test_against_float64_oracle(self):
        rng = np.random.default_rng(4)
        x = (10.0 * rng.standard_normal((6, 12))).astype(np.float32)
        assert np.max(np.abs(numerics.softmax_rows(x) - softmax_oracle(x))) < 1e-6

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            x = (5.0 * rng.standard_normal((4, 9))).astype(np.float32)
            sums = numerics.softmax_rows(x).sum(axis=1)
            assert np.all(np.abs(sums - 1.0) < 1e-6)

    def test_shift_invariance(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            x = rng.standard_normal((3, 7)).astype(np.float32)
            shifted = x + np.float32(13.5)
            assert np.allclose(numerics.softmax_rows(x), numerics.softmax_rows(shifted), atol=1e-6)


# --- rowwise similarity ----------------------------------------------------------


class TestRowwiseSimilarity:
    def test_cosine_self_similarity_is_one(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((10, 8), dtype=np.float32)
        assert np.array_equal(numerics.rowwise_similarity(a, a, "cosine"), np.ones(10))

    def test_cosine_orthogonal_rows(self):
        a = np.array([[1.0, 0.0], [0.0, 2.0]], dtype=np.float32)
        b = np.array([[0.0, 3.0], [5.0, 0.0]], dtype=np.float32)
        assert np.allclose(numerics.rowwise_similarity(a, b, "cosine"), 0.0, atol=1e-12)

    def test_cosine_zero_norm_scores_zero(self):
        a = np.zeros((2, 4), dtype=np.float32)
        b = np.ones((2, 4), dtype=np.float32)
        assert np.array_equal(numerics.rowwise_similarity(a, b, "cosine"), np.zeros(2))

    def test_l2_against_elementwise_oracle(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((6, 5), dtype=np.float32)
        b = rng.standard_normal((6, 5), dtype=np.float32)
        got = numerics.rowwise_similarity(a, b, "l2")
        want = [-math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(ra, rb))) for ra, rb in zip(a, b)]
        assert np.max(np.abs(got - np.array(want))) < 1e-6

    def test_l1_and_dot_oracles(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((4, 3), dtype=np.float32)
        b = rng.standard_normal((4, 3), dtype=np.float32)
        l1_want = [-sum(abs(float(x) - float(y)) for x, y in zip(ra, rb)) for ra, rb in zip(a, b)]
        dot_want = [sum(float(x) * float(y) for x, y in zip(ra, rb)) for ra, rb in zip(a, b)]
        assert np.max(np.abs(numerics.rowwise_similarity(a, b, "l1") - np.array(l1_want))) < 1e-6
        assert np.max(np.abs(numerics.rowwise_similarity(a, b, "dot") - np.array(dot_want))) < 1e-6

    def test_distances_negated_so_larger_is_more_similar(self):
        a = np.array([[0.0, 0.0], [0.0, 0.0]], dtype=np.float32)
        b = np.array([[1.0, 1.0], [3.0, 4.0]], dtype=np.float32)
        l2 = numerics.rowwise_similarity(a, b, "l2")
        assert l2[0] > l2[1]  # closer row scores higher

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="matching"):
            numerics.rowwise_similarity(np.zeros((2, 3), np.float32), np.zeros((3, 2), np.float32), "cosine")

    def test_unknown_metric(self):
        with pytest.raises(ValueError, match="metric"):
            numerics.rowwise_similarity(np.zeros((1, 1), np.float32), np.zeros((1, 1), np.float32), "chebyshev")


# --- top-k ---------------------------------------------------------------------


class TestTopKIndices:
    def test_single_largest(self):
        assert numerics.top_k_indices(np.array([0.1, 0.9, 0.5]), 1, "largest").tolist() == [1]

    def test_k_equals_length(self):
        got = numerics.top_k_indices(np.array([3.0, 1.0, 2.0]), 3, "largest")
        assert got.tolist() == [0, 1, 2]

    def test_k_zero(self):
        assert numerics.top_k_indices(np.array([1.0, 2.0]), 0, "largest").size == 0

    def test_k_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            numerics.top_k_indices(np.array([1.0]), 2, "largest")

    def test_ties_go_to_lower_index(self):
        scores = np.array([1.0, 1.0, 1.0, 1.0])
        assert numerics.top_k_indices(scores, 2, "largest").tolist() == [0, 1]
        assert numerics.top_k_indices(scores, 2, "smallest").tolist() == [0, 1]

    def test_against_stable_sort_oracle(self):
        rng = np.random.default_rng(10)
        for trial in range(1000):
            n = int(rng.integers(1, 40))
            # quantized scores force frequent ties
            scores = np.round(rng.standard_normal(n), 1)
            k = int(rng.integers(0, n + 1))
            direction = "largest" if trial % 2 == 0 else "smallest"
            got = numerics.top_k_indices(scores, k, direction).tolist()
            assert got == top_k_oracle(scores, k, direction)

    def test_cosine_scale_invariance_at_selection_level(self):
        rng = np.random.default_rng(11)
        for scale in (0.001, 3.7, 1024.0):
            a = rng.standard_normal((20, 16), dtype=np.float32)
            b = rng.standard_normal((20, 16), dtype=np.float32)
            base = numerics.rowwise_similarity(a, b, "cosine")
            scaled = numerics.rowwise_similarity(a * np.float32(scale), b, "cosine")
            k = 5
            assert np.array_equal(
                numerics.top_k_indices(base, k, "smallest"),
                numerics.top_k_indices(scaled, k, "smallest"),
            )

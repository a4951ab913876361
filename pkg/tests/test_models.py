import math

import numpy as np
import pytest

from fairfedsim import Batch, ModelSpec, accuracy, init_params, loss, loss_grad
from fairfedsim.errors import ConfigError
from fairfedsim.models import read_vector_text, write_vector_text

LOGISTIC = ModelSpec(kind="logistic", input_dim=3, num_classes=2)
MLP = ModelSpec(kind="mlp", input_dim=4, num_classes=3, hidden_dim=5)


def random_batch(rng, d, c, n=6):
    return Batch(rng.standard_normal((n, d)), rng.integers(0, c, size=n))


def naive_cross_entropy(spec, params, batch):
    """Per-sample softmax oracle, no log-sum-exp trick, no vectorized path."""
    from fairfedsim.models import _logits

    logits = _logits(spec, params, batch.features)
    total = 0.0
    for i in range(batch.num_samples):
        row = logits[i]
        probs = np.exp(row) / np.exp(row).sum()
        total += -math.log(probs[batch.labels[i]])
    return total / batch.num_samples


def finite_difference_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        up = x.copy()
        dn = x.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


class TestParamLayout:
    def test_logistic_param_count(self):
        assert LOGISTIC.param_count == 3 * 2 + 2 == 8
        assert init_params(LOGISTIC, 0).shape == (8,)

    def test_mlp_param_count(self):
        assert MLP.param_count == 4 * 5 + 5 + 5 * 3 + 3 == 43
        assert init_params(MLP, 0).shape == (43,)

    def test_init_deterministic(self):
        a = init_params(LOGISTIC, 7)
        b = init_params(LOGISTIC, 7)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, init_params(LOGISTIC, 8))

    def test_init_biases_zero(self):
        p = init_params(LOGISTIC, 3)
        assert np.all(p[-2:] == 0.0)
        p = init_params(MLP, 3)
        # layout: W1 (20), b1 (5), W2 (15), b2 (3)
        assert np.all(p[20:25] == 0.0)
        assert np.all(p[-3:] == 0.0)

    def test_invalid_specs(self):
        with pytest.raises(ConfigError):
            ModelSpec(kind="conv", input_dim=3, num_classes=2).validate()
        with pytest.raises(ConfigError):
            ModelSpec(kind="logistic", input_dim=0, num_classes=2).validate()
        with pytest.raises(ConfigError):
            ModelSpec(kind="logistic", input_dim=3, num_classes=1).validate()
        with pytest.raises(ConfigError):
            ModelSpec(kind="mlp", input_dim=3, num_classes=2).validate()


class TestLoss:
    def test_zero_params_binary_is_ln2(self):
        rng = np.random.default_rng(0)
        batch = random_batch(rng, 3, 2)
        assert loss(LOGISTIC, np.zeros(8), batch) == pytest.approx(math.log(2), abs=1e-12)

    def test_zero_params_ten_classes_is_ln10(self):
        spec = ModelSpec(kind="logistic", input_dim=4, num_classes=10)
        rng = np.random.default_rng(1)
        batch = random_batch(rng, 4, 10, n=9)
        assert loss(spec, np.zeros(spec.param_count), batch) == pytest.approx(math.log(10), abs=1e-12)

    @pytest.mark.parametrize("spec", [LOGISTIC, MLP], ids=["logistic", "mlp"])
    def test_matches_naive_per_sample_oracle(self, spec):
        rng = np.random.default_rng(42)
        for _ in range(10):
            params = 0.7 * rng.standard_normal(spec.param_count)
            batch = random_batch(rng, spec.input_dim, spec.num_classes)
            assert loss(spec, params, batch) == pytest.approx(
                naive_cross_entropy(spec, params, batch), rel=1e-12
            )

    @pytest.mark.parametrize("spec", [LOGISTIC, MLP], ids=["logistic", "mlp"])
    def test_non_negative_and_finite(self, spec):
        rng = np.random.default_rng(5)
        for _ in range(20):
            params = 3.0 * rng.standard_normal(spec.param_count)
            batch = random_batch(rng, spec.input_dim, spec.num_classes)
            value = loss(spec, params, batch)
            assert value >= 0.0 and math.isfinite(value)

    def test_dimension_mismatch_raises(self):
        rng = np.random.default_rng(0)
        batch = random_batch(rng, 4, 2)
        with pytest.raises(ValueError):
            loss(LOGISTIC, np.zeros(8), batch)
        with pytest.raises(ValueError):
            loss(LOGISTIC, np.zeros(9), random_batch(rng, 3, 2))

    def test_large_logits_stay_finite(self):
        params = 1e3 * np.ones(8)
        batch = Batch(np.array([[50.0, -50.0, 10.0]]), np.array([1]))
        assert math.isfinite(loss(LOGISTIC, params, batch))


class TestGradient:
    @pytest.mark.parametrize("spec", [LOGISTIC, MLP], ids=["logistic", "mlp"])
    def test_matches_finite_differences(self, spec):
        rng = np.random.default_rng(7)
        for _ in range(5):
            params = 0.5 * rng.standard_normal(spec.param_count)
            batch = random_batch(rng, spec.input_dim, spec.num_classes)
            value, grad = loss_grad(spec, params, batch)
            assert value == pytest.approx(loss(spec, params, batch), rel=1e-14)
            fd = finite_difference_grad(lambda p: loss(spec, p, batch), params)
            denom = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1.0)
            assert np.max(np.abs(grad - fd) / denom) < 1e-6

    def test_duplicated_batch_same_gradient(self):
        rng = np.random.default_rng(11)
        params = rng.standard_normal(8)
        batch = random_batch(rng, 3, 2, n=5)
        doubled = Batch(
            np.repeat(batch.features, 2, axis=0), np.repeat(batch.labels, 2)
        )
        _, g1 = loss_grad(LOGISTIC, params, batch)
        _, g2 = loss_grad(LOGISTIC, params, doubled)
        np.testing.assert_allclose(g1, g2, atol=1e-15)

    def test_gradient_vanishes_at_trained_optimum(self):
        # full-batch descent on separable data drives the gradient norm down
        rng = np.random.default_rng(3)
        x = np.concatenate([rng.normal(-2, 0.3, size=(20, 1)), rng.normal(2, 0.3, size=(20, 1))])
        y = np.array([0] * 20 + [1] * 20)
        spec = ModelSpec(kind="logistic", input_dim=1, num_classes=2)
        batch = Batch(x, y)
        params = np.zeros(spec.param_count)
        norms = []
        for _ in range(400):
            _, g = loss_grad(spec, params, batch)
            norms.append(float(np.linalg.norm(g)))
            params -= 0.5 * g
        assert norms[-1] < 0.05 * norms[0]

    @pytest.mark.parametrize("spec", [LOGISTIC, MLP], ids=["logistic", "mlp"])
    def test_permutation_invariance(self, spec):
        rng = np.random.default_rng(13)
        params = rng.standard_normal(spec.param_count)
        batch = random_batch(rng, spec.input_dim, spec.num_classes, n=8)
        perm = rng.permutation(8)
        shuffled = Batch(batch.features[perm], batch.labels[perm])
        assert loss(spec, params, batch) == pytest.approx(loss(spec, params, shuffled), rel=1e-14)
        _, g1 = loss_grad(spec, params, batch)
        _, g2 = loss_grad(spec, params, shuffled)
        np.testing.assert_allclose(g1, g2, atol=1e-14)
        assert accuracy(spec, params, batch) == accuracy(spec, params, shuffled)


class TestAccuracy:
    def test_perfect_margin_is_one(self):
        x = np.array([[-3.0], [-2.5], [2.5], [3.0]])
        y = np.array([0, 0, 1, 1])
        spec = ModelSpec(kind="logistic", input_dim=1, num_classes=2)
        params = np.array([-5.0, 5.0, 0.0, 0.0])  # W=(-5, 5), b=0
        assert accuracy(spec, params, Batch(x, y)) == 1.0

    def test_zero_params_ties_break_to_class_zero(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((10, 3))
        y = np.array([0, 0, 0, 1, 1, 1, 1, 0, 1, 0])
        assert accuracy(LOGISTIC, np.zeros(8), Batch(x, y)) == pytest.approx(5 / 10)

    def test_random_params_balanced_ten_classes_near_chance(self):
        spec = ModelSpec(kind="logistic", input_dim=6, num_classes=10)
        rng = np.random.default_rng(17)
        n = 20000
        x = rng.standard_normal((n, 6))
        y = np.tile(np.arange(10), n // 10)
        params = rng.standard_normal(spec.param_count)
        acc = accuracy(spec, params, Batch(x, y))
        assert 0.05 <= acc <= 0.15


class TestVectorText:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(23)
        values = rng.standard_normal(37) * 10.0 ** rng.integers(-8, 8, size=37)
        path = tmp_path / "vec.txt"
        write_vector_text(path, values)
        assert np.array_equal(read_vector_text(path), values)


class TestBatchValidation:
    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(ValueError):
            Batch(np.zeros((0, 3)), np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            Batch(np.array([[np.nan, 0.0]]), np.array([0]))
        with pytest.raises(ValueError):
            Batch(np.zeros((2, 2)), np.array([0, -1]))

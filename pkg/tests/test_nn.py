import numpy as np
import pytest

from autofuse.exceptions import DivergenceError, ShapeMismatch, SingleClassError
from autofuse.nn import (
    MlpParams,
    TrainConfig,
    init_mlp,
    integrated_gradients,
    mlp_forward,
    mlp_gradients,
    softmax,
    target_logit,
    train_mlp,
)
from helpers import fd_param_gradient, flatten_params, max_relative_error, mlp_loss


class TestForward:
    def test_zero_params_give_uniform(self):
        params = MlpParams(
            weights=[np.zeros((3, 4))], biases=[np.zeros(4)], activation="relu"
        )
        _, probs = mlp_forward(params, np.random.default_rng(0).normal(size=(5, 3)))
        assert np.allclose(probs, 0.25)

    def test_hand_computed_forward(self):
        # one hidden relu unit: w=[1,0], output weights [1,-1]; x=[2,5] -> logits [2,-2]
        params = MlpParams(
            weights=[np.array([[1.0], [0.0]]), np.array([[1.0, -1.0]])],
            biases=[np.zeros(1), np.zeros(2)],
            activation="relu",
        )
        logits, _ = mlp_forward(params, np.array([[2.0, 5.0]]))
        assert np.array_equal(logits, np.array([[2.0, -2.0]]))

    def test_wrong_width_raises(self):
        params = init_mlp([4, 3, 2], seed=0)
        with pytest.raises(ShapeMismatch):
            mlp_forward(params, np.zeros((2, 5)))

    def test_softmax_translation_invariance(self, rng):
        logits = rng.normal(size=(20, 4))
        shifted = logits + 123.456
        assert np.abs(softmax(logits) - softmax(shifted)).max() <= 1e-12


class TestGradients:
    def test_linear_layer_gradient_is_probs_minus_onehot(self, rng):
        params = MlpParams(weights=[rng.normal(size=(3, 4))], biases=[rng.normal(size=4)])
        X = rng.normal(size=(8, 3))
        y = rng.integers(0, 4, size=8)
        grads = mlp_gradients(params, X, y)
        _, probs = mlp_forward(params, X)
        onehot = np.eye(4)[y]
        dlogits = (probs - onehot) / 8
        assert np.allclose(grads.weights[0], X.T @ dlogits, atol=1e-12)
        assert np.allclose(grads.biases[0], dlogits.sum(axis=0), atol=1e-12)

    def test_zero_weight_network_bias_gradient(self, rng):
        params = MlpParams(weights=[np.zeros((2, 2))], biases=[np.zeros(2)])
        X = rng.normal(size=(10, 2))
        y = np.array([0, 1] * 5)
        grads = mlp_gradients(params, X, y)
        # uniform probs and a balanced batch: column sums of (p - onehot)/B
        assert np.allclose(grads.biases[0], [0.0, 0.0], atol=1e-12)

    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    def test_finite_difference_check(self, activation):
        rng = np.random.default_rng(42)
        params = init_mlp([5, 6, 3], activation=activation, seed=7)
        X = rng.normal(size=(5, 5))
        y = rng.integers(0, 3, size=5)
        analytic = mlp_gradients(params, X, y)
        flat_analytic = np.concatenate(
            [g.ravel() for pair in zip(analytic.weights, analytic.biases) for g in pair]
        )
        numeric = fd_param_gradient(params, X, y, h=1e-5)
        assert max_relative_error(flat_analytic, numeric) < 1e-4

    def test_input_gradients_match_finite_differences(self):
        rng = np.random.default_rng(3)
        params = init_mlp([4, 5, 2], activation="tanh", seed=1)
        X = rng.normal(size=(3, 4))
        y = rng.integers(0, 2, size=3)
        dX = mlp_gradients(params, X, y).inputs
        h = 1e-6
        for i, j in [(0, 0), (1, 2), (2, 3)]:
            Xp = X.copy(); Xp[i, j] += h
            Xm = X.copy(); Xm[i, j] -= h
            fd = (mlp_loss(params, Xp, y) - mlp_loss(params, Xm, y)) / (2 * h)
            assert dX[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-10)


class TestTraining:
    def test_xor_is_learned(self):
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        y = np.array([0, 1, 1, 0])
        config = TrainConfig(learning_rate=0.05, epochs=2000, seed=0, optimizer="adam")
        params = train_mlp(X, y, hidden=(8,), config=config)
        _, probs = mlp_forward(params, X)
        assert (probs.argmax(axis=1) == y).all()

    def test_bit_identical_given_seed(self, rng):
        X = rng.normal(size=(30, 4))
        y = rng.integers(0, 3, size=30)
        config = TrainConfig(learning_rate=0.01, epochs=40, seed=9, batch_size=8)
        a = train_mlp(X, y, hidden=(6,), config=config)
        b = train_mlp(X, y, hidden=(6,), config=config)
        for Wa, Wb in zip(a.weights, b.weights):
            assert Wa.tobytes() == Wb.tobytes()

    def test_divergence_error(self, rng):
        X = rng.normal(size=(20, 3))
        y = rng.integers(0, 2, size=20)
        config = TrainConfig(learning_rate=1e6, epochs=50, seed=0, optimizer="sgd")
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(DivergenceError):
                train_mlp(X, y, hidden=(8,), config=config)

    def test_single_class_error(self, rng):
        X = rng.normal(size=(10, 2))
        with pytest.raises(SingleClassError):
            train_mlp(X, np.zeros(10, dtype=int), hidden=(4,), config=TrainConfig())

    def test_loss_decreases(self, rng):
        X = rng.normal(size=(50, 4))
        y = (X[:, 0] > 0).astype(int)
        config = TrainConfig(learning_rate=0.02, epochs=100, seed=0)
        _, history = train_mlp(X, y, hidden=(8,), config=config, return_history=True)
        assert history["final_loss"] < history["initial_loss"]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)


class TestIntegratedGradients:
    def test_linear_model_exact(self, rng):
        W = rng.normal(size=(6, 3))
        params = MlpParams(weights=[W], biases=[np.zeros(3)])
        x = rng.normal(size=6)
        attr = integrated_gradients(params, x, baseline=np.zeros(6), steps=4, target=1)
        assert np.abs(attr - W[:, 1] * x).max() <= 1e-9

    def test_zero_path(self, rng):
        params = init_mlp([4, 5, 2], seed=0)
        x = rng.normal(size=4)
        attr = integrated_gradients(params, x, baseline=x.copy(), steps=16)
        assert np.array_equal(attr, np.zeros(4))

    def test_completeness_against_high_resolution_reference(self):
        rng = np.random.default_rng(11)
        params = init_mlp([5, 8, 4, 3], activation="tanh", seed=2)
        x = rng.normal(size=5)
        baseline = rng.normal(size=5) * 0.2
        delta = target_logit(params, x, 0) - target_logit(params, baseline, 0)
        attr = integrated_gradients(params, x, baseline=baseline, steps=512, target=0)
        gap = abs(attr.sum() - delta)
        assert gap < 1e-3 * abs(delta) + 1e-6
        reference = integrated_gradients(params, x, baseline=baseline, steps=65536, target=0)
        assert abs(reference.sum() - delta) <= gap + 1e-12

    def test_gap_shrinks_with_steps_on_average(self):
        rng = np.random.default_rng(5)
        gaps = {steps: [] for steps in (8, 64, 512)}
        for trial in range(10):
            params = init_mlp([4, 6, 2], activation="tanh", seed=trial)
            x = rng.normal(size=4)
            delta = target_logit(params, x, 0) - target_logit(params, np.zeros(4), 0)
            for steps in gaps:
                attr = integrated_gradients(params, x, steps=steps, target=0)
                gaps[steps].append(abs(attr.sum() - delta))
        means = [np.mean(gaps[s]) for s in (8, 64, 512)]
        assert means[0] >= means[1] >= means[2]

    def test_shape_mismatch(self):
        params = init_mlp([4, 2], seed=0)
        with pytest.raises(ShapeMismatch):
            integrated_gradients(params, np.zeros(4), baseline=np.zeros(3), steps=4)

    def test_steps_validation(self):
        params = init_mlp([2, 2], seed=0)
        with pytest.raises(ValueError):
            integrated_gradients(params, np.zeros(2), steps=0)

import numpy as np
import pytest

from shopgrid.errors import InputError
from shopgrid.factorize import (
    FactorModel,
    Hyperparams,
    RegularizerSpec,
    gradient,
    neighbor_weights,
    objective,
    predict,
    train,
)
from shopgrid.grid import GeoPoint, RegionGrid
from shopgrid.patterns import MobilityPatternMatrix, ShoppingPatternMatrix


def planar(n_rows, n_cols):
    return RegionGrid(mode="planar", origin=GeoPoint(0.0, 0.0), cell_size_km=1.0,
                      n_rows=n_rows, n_cols=n_cols)


def planted(rng, r=30, n=5, m=6, l=3, mask_rows=None):
    """A noiseless instance generated from known non-negative factors."""
    Rl = rng.random((r, l)) + 0.1
    V1 = rng.random((n, l)) + 0.1
    V2 = rng.random((m, l)) + 0.1
    values = Rl @ V1.T
    mask = np.ones_like(values)
    if mask_rows is not None:
        mask[mask_rows] = 0.0
        values = values * mask
    shopping = ShoppingPatternMatrix(values, mask)
    mobility = MobilityPatternMatrix(Rl @ V2.T)
    return shopping, mobility, (Rl, V1, V2)


def random_interaction_weights(rng, r):
    W = rng.random((r, r)) + 1e-3
    return W / W.sum(axis=0)


class TestObjective:
    def test_zero_model(self):
        rng = np.random.default_rng(0)
        shopping, mobility, _ = planted(rng, r=8)
        model = FactorModel(np.zeros((8, 3)), np.zeros((5, 3)), np.zeros((6, 3)))
        h = Hyperparams(l=3, lambda1=0.5, lambda2=0.2, alpha=1.0)
        reg = RegularizerSpec("interaction", random_interaction_weights(rng, 8))
        got = objective(model, shopping, mobility, reg, h)
        want = 0.5 * (shopping.values ** 2).sum() + 0.25 * (mobility.values ** 2).sum()
        assert got == pytest.approx(want, rel=1e-12)

    def test_everything_off_is_zero(self):
        shopping = ShoppingPatternMatrix(np.zeros((4, 2)), np.zeros((4, 2)))
        mobility = MobilityPatternMatrix(np.zeros((4, 3)))
        model = FactorModel(np.ones((4, 2)), np.ones((2, 2)), np.ones((3, 2)))
        h = Hyperparams(l=2, lambda1=0.0, lambda2=0.0, alpha=0.0)
        assert objective(model, shopping, mobility, RegularizerSpec("none"), h) == 0.0

    def test_planted_solution_is_zero(self):
        rng = np.random.default_rng(1)
        shopping, mobility, (Rl, V1, V2) = planted(rng)
        model = FactorModel(Rl, V1, V2)
        h = Hyperparams(l=3, lambda1=1.0, lambda2=0.0, alpha=0.0)
        assert objective(model, shopping, mobility, RegularizerSpec("none"), h) <= 1e-18

    def test_variant_nesting_alpha_then_lambda1(self):
        rng = np.random.default_rng(2)
        shopping, mobility, (Rl, V1, V2) = planted(rng, r=9)
        model = FactorModel(rng.standard_normal((9, 3)), rng.standard_normal((5, 3)),
                            rng.standard_normal((6, 3)))
        W = random_interaction_weights(rng, 9)
        h_cmf_i = Hyperparams(l=3, lambda1=0.8, lambda2=0.05, alpha=0.0)
        v_interaction = objective(model, shopping, mobility,
                                  RegularizerSpec("interaction", W), h_cmf_i)
        v_cmf = objective(model, shopping, mobility, RegularizerSpec("none"), h_cmf_i)
        assert v_interaction == v_cmf
        h_mf = Hyperparams(l=3, lambda1=0.0, lambda2=0.05, alpha=0.0)
        v_mf_like = objective(model, shopping, mobility, RegularizerSpec("none"), h_mf)
        direct = 0.5 * ((shopping.mask * (model.R_l @ model.V1.T - shopping.values)) ** 2).sum()
        direct += 0.5 * 0.05 * sum((x ** 2).sum() for x in (model.R_l, model.V1, model.V2))
        assert v_mf_like == pytest.approx(direct, rel=1e-12)

    def test_dimension_mismatch(self):
        shopping = ShoppingPatternMatrix(np.zeros((4, 2)), np.zeros((4, 2)))
        mobility = MobilityPatternMatrix(np.zeros((5, 3)))
        model = FactorModel(np.ones((4, 2)), np.ones((2, 2)), np.ones((3, 2)))
        with pytest.raises(InputError):
            objective(model, shopping, mobility, RegularizerSpec("none"), Hyperparams(l=2))

    def test_non_finite_inputs(self):
        bad = MobilityPatternMatrix(np.array([[np.inf, 0.0]] * 3))
        model = FactorModel(np.ones((3, 2)), np.ones((2, 2)), np.ones((2, 2)))
        shopping = ShoppingPatternMatrix(np.zeros((3, 2)), np.zeros((3, 2)))
        with pytest.raises(InputError):
            objective(model, shopping, bad, RegularizerSpec("none"), Hyperparams(l=2))


class TestGradientModes:
    def test_exact_is_default_and_matches_kernel(self):
        rng = np.random.default_rng(3)
        shopping, mobility, (Rl, V1, V2) = planted(rng, r=7)
        model = FactorModel(Rl, V1, V2)
        h = Hyperparams(l=3, lambda1=1.0, lambda2=0.0, alpha=0.0)
        g = gradient(model, shopping, mobility, RegularizerSpec("none"), h)
        # planted solution with no regularization: gradients vanish
        assert all(np.abs(x).max() <= 1e-9 for x in g)

    def test_modes_agree_when_alpha_zero(self):
        rng = np.random.default_rng(4)
        shopping, mobility, _ = planted(rng, r=7)
        model = FactorModel(rng.standard_normal((7, 3)), rng.standard_normal((5, 3)),
                            rng.standard_normal((6, 3)))
        W = random_interaction_weights(rng, 7)
        h = Hyperparams(l=3, lambda1=0.9, lambda2=0.1, alpha=0.0)
        reg = RegularizerSpec("interaction", W)
        exact = gradient(model, shopping, mobility, reg, h, mode="exact")
        literal = gradient(model, shopping, mobility, reg, h, mode="uncoupled")
        for a, b in zip(exact, literal):
            assert np.abs(a - b).max() <= 1e-12

    def test_unknown_mode(self):
        rng = np.random.default_rng(5)
        shopping, mobility, (Rl, V1, V2) = planted(rng, r=5)
        model = FactorModel(Rl, V1, V2)
        with pytest.raises(InputError):
            gradient(model, shopping, mobility, RegularizerSpec("none"),
                     Hyperparams(l=3), mode="wrong")


class TestNeighborWeights:
    def test_interior_column(self):
        W = neighbor_weights(planar(3, 3))
        col = W[:, 4]
        assert col[4] == 0.0
        assert np.isclose(col.sum(), 1.0)
        assert (col[[0, 1, 2, 3, 5, 6, 7, 8]] == 1.0 / 8.0).all()

    def test_corner_column(self):
        W = neighbor_weights(planar(3, 3))
        assert (W[[1, 3, 4], 0] == 1.0 / 3.0).all()

    def test_columns_sum_to_one(self):
        W = neighbor_weights(planar(4, 6))
        assert np.allclose(W.sum(axis=0), 1.0)


class TestTrain:
    def test_planted_cmf_converges(self):
        rng = np.random.default_rng(6)
        shopping, mobility, _ = planted(rng, r=30, n=5, m=6, l=3)
        h = Hyperparams(l=3, lambda1=1.0, lambda2=1e-6, alpha=0.0,
                        max_iters=2000, epsilon=1e-14, seed=7)
        model, trace = train(shopping, mobility, RegularizerSpec("none"), h, "CMF")
        assert trace.final_loss < 1e-3 * trace.losses[0]

    def test_trace_strictly_decreasing(self):
        rng = np.random.default_rng(7)
        shopping, mobility, _ = planted(rng, r=12, n=4, m=5, l=2)
        h = Hyperparams(l=2, max_iters=60, epsilon=1e-12, seed=1)
        W = random_interaction_weights(rng, 12)
        _, trace = train(shopping, mobility, RegularizerSpec("interaction", W), h, "CMF+I")
        losses = np.array(trace.losses)
        assert (np.diff(losses) < 0).all()
        assert trace.final_loss < losses[-1]

    def test_large_epsilon_stops_after_one_iteration(self):
        rng = np.random.default_rng(8)
        shopping, mobility, _ = planted(rng, r=10, n=4, m=5, l=2)
        h = Hyperparams(l=2, max_iters=50, epsilon=1e12, seed=2)
        _, trace = train(shopping, mobility, RegularizerSpec("none"), h, "CMF")
        assert len(trace) == 1
        assert trace.stop_reason == "epsilon"

    def test_gamma_underflow_terminates_cleanly(self):
        # a constant-zero objective admits no strict decrease anywhere
        shopping = ShoppingPatternMatrix(np.zeros((4, 3)), np.zeros((4, 3)))
        mobility = MobilityPatternMatrix(np.zeros((4, 2)))
        h = Hyperparams(l=2, lambda1=0.0, lambda2=0.0, alpha=0.0,
                        max_iters=10, epsilon=1e-9, seed=3)
        model, trace = train(shopping, mobility, RegularizerSpec("none"), h, "MF")
        assert trace.stop_reason == "gamma_underflow"
        assert len(trace) == 0
        assert np.isfinite(model.R_l).all()

    def test_determinism(self):
        rng = np.random.default_rng(9)
        shopping, mobility, _ = planted(rng, r=15, n=4, m=5, l=2)
        W = random_interaction_weights(rng, 15)
        h = Hyperparams(l=2, max_iters=40, epsilon=1e-12, seed=11)
        reg = RegularizerSpec("interaction", W)
        m1, t1 = train(shopping, mobility, reg, h, "CMF+I")
        m2, t2 = train(shopping, mobility, reg, h, "CMF+I")
        assert np.array_equal(m1.R_l, m2.R_l)
        assert np.array_equal(m1.V1, m2.V1)
        assert np.array_equal(m1.V2, m2.V2)
        assert t1.losses == t2.losses and t1.gammas == t2.gammas

    def test_interaction_weight_scale_invariance_bitwise(self):
        # power-of-two rescaling of the raw interaction matrices is lossless
        # in IEEE arithmetic, so the normalized weights and the entire
        # training trajectory are bit-identical
        from shopgrid.gravity import combined_weights

        rng = np.random.default_rng(10)
        g = planar(3, 4)
        r = g.n_regions
        q_taxi = rng.random((r, r))
        q_bus = rng.random((r, r))
        shopping, mobility, _ = planted(rng, r=r, n=4, m=5, l=2)
        h = Hyperparams(l=2, max_iters=30, epsilon=1e-12, seed=13)
        results = []
        for scale in (1.0, 2.0 ** 9, 2.0 ** -17):
            W = combined_weights(q_taxi * scale, q_bus * scale, g)
            model, trace = train(shopping, mobility,
                                 RegularizerSpec("interaction", W), h, "CMF+I")
            results.append((model, trace))
        for model, trace in results[1:]:
            assert np.array_equal(model.R_l, results[0][0].R_l)
            assert np.array_equal(model.V1, results[0][0].V1)
            assert np.array_equal(model.V2, results[0][0].V2)
            assert trace.losses == results[0][1].losses

    def test_variant_requires_matching_regularizer(self):
        rng = np.random.default_rng(11)
        shopping, mobility, _ = planted(rng, r=6)
        with pytest.raises(InputError):
            train(shopping, mobility, RegularizerSpec("none"), Hyperparams(l=3), "CMF+N")

    def test_unknown_variant(self):
        rng = np.random.default_rng(12)
        shopping, mobility, _ = planted(rng, r=6)
        with pytest.raises(InputError):
            train(shopping, mobility, RegularizerSpec("none"), Hyperparams(l=3), "ALS")

    def test_mf_ignores_mobility(self):
        # MF forces lambda1 = alpha = 0: mobility content cannot change the fit
        rng = np.random.default_rng(13)
        shopping, mobility, _ = planted(rng, r=10)
        other = MobilityPatternMatrix(rng.random(mobility.values.shape) * 9)
        h = Hyperparams(l=3, max_iters=25, epsilon=1e-12, seed=5)
        m1, _ = train(shopping, mobility, RegularizerSpec("none"), h, "MF")
        m2, _ = train(shopping, other, RegularizerSpec("none"), h, "MF")
        assert np.array_equal(m1.R_l, m2.R_l)
        assert np.array_equal(m1.V1, m2.V1)


class TestPredict:
    def test_identity_model(self):
        eye = np.eye(3)
        model = FactorModel(eye, eye, np.ones((2, 3)))
        assert np.array_equal(predict(model), eye)

    def test_nonnegative_planted_product_unclamped(self):
        rng = np.random.default_rng(14)
        Rl = rng.random((6, 2))
        V1 = rng.random((4, 2))
        model = FactorModel(Rl, V1, np.ones((3, 2)))
        assert np.array_equal(predict(model), Rl @ V1.T)

    def test_negative_entries_clamped(self):
        model = FactorModel(np.array([[1.0], [-1.0]]), np.array([[1.0]]),
                            np.ones((1, 1)))
        pred = predict(model)
        assert pred[0, 0] == 1.0
        assert pred[1, 0] == 0.0

    def test_scale_applied(self):
        model = FactorModel(np.array([[2.0]]), np.array([[3.0]]), np.ones((1, 1)),
                            scale_s=10.0)
        assert predict(model)[0, 0] == 60.0


class TestHyperparams:
    def test_validation(self):
        with pytest.raises(InputError):
            Hyperparams(l=0)
        with pytest.raises(InputError):
            Hyperparams(lambda1=-0.1)
        with pytest.raises(InputError):
            Hyperparams(epsilon=0.0)

    def test_regularizer_spec_validation(self):
        with pytest.raises(InputError):
            RegularizerSpec("neighbor")
        with pytest.raises(InputError):
            RegularizerSpec("none", np.ones((2, 2)))
        with pytest.raises(InputError):
            RegularizerSpec("interaction", np.ones((2, 2)))  # columns sum to 2

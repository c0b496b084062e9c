"""Backend contract: both kernel implementations agree with each other and
with a finite-difference oracle of the objective they claim to differentiate."""

import numpy as np
import pytest

from shopgrid._kernels import available_backends

from conftest import random_instance


def finite_difference(backend, Rs, mask, Rm, Rl, V1, V2, lam1, lam2, alpha, W,
                      step=1e-5):
    """Central differences of the backend objective in every factor entry."""
    factors = [Rl.copy(), V1.copy(), V2.copy()]

    def obj():
        return backend.objective(Rs, mask, Rm, factors[0], factors[1], factors[2],
                                 lam1, lam2, alpha, W)

    grads = []
    for which in range(3):
        fd = np.zeros_like(factors[which])
        for idx in np.ndindex(fd.shape):
            orig = factors[which][idx]
            factors[which][idx] = orig + step
            hi = obj()
            factors[which][idx] = orig - step
            lo = obj()
            factors[which][idx] = orig
            fd[idx] = (hi - lo) / (2 * step)
        grads.append(fd)
    return grads


def max_rel_error(analytic, numeric):
    scale = max(max(np.abs(a).max() for a in analytic), 1e-12)
    return max(np.abs(a - f).max() for a, f in zip(analytic, numeric)) / scale


HYPER_CASES = [
    (1.0, 0.01, 1.0, True),    # full objective with interaction term
    (0.0, 0.0, 0.0, False),    # data term only
    (0.7, 0.0, 0.0, False),    # collective, no ridge
    (0.5, 0.1, 2.5, True),     # heavy interaction
]


class TestGradientOracle:
    @pytest.mark.parametrize("lam1,lam2,alpha,with_w", HYPER_CASES)
    def test_matches_finite_differences(self, kernel_backend, lam1, lam2, alpha, with_w):
        rng = np.random.default_rng(hash((lam1, lam2, alpha)) % 2**32)
        Rs, mask, Rm, Rl, V1, V2, W = random_instance(rng, r=6, n=3, m=4, l=2,
                                                      with_weights=with_w)
        analytic = kernel_backend.gradients(Rs, mask, Rm, Rl, V1, V2,
                                            lam1, lam2, alpha, W)
        numeric = finite_difference(kernel_backend, Rs, mask, Rm, Rl, V1, V2,
                                    lam1, lam2, alpha, W)
        assert max_rel_error(analytic, numeric) < 1e-5

    def test_many_random_instances(self, kernel_backend):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            dims = dict(r=int(rng.integers(3, 9)), n=int(rng.integers(2, 6)),
                        m=int(rng.integers(2, 6)), l=int(rng.integers(1, 4)))
            with_w = bool(rng.integers(2))
            Rs, mask, Rm, Rl, V1, V2, W = random_instance(rng, with_weights=with_w, **dims)
            lam1 = float(rng.uniform(0, 2))
            lam2 = float(rng.uniform(0, 0.5))
            alpha = float(rng.uniform(0, 3)) if with_w else 0.0
            analytic = kernel_backend.gradients(Rs, mask, Rm, Rl, V1, V2,
                                                lam1, lam2, alpha, W)
            numeric = finite_difference(kernel_backend, Rs, mask, Rm, Rl, V1, V2,
                                        lam1, lam2, alpha, W)
            assert max_rel_error(analytic, numeric) < 1e-5


class TestLiteralMode:
    def test_agrees_with_exact_when_alpha_zero(self, kernel_backend):
        rng = np.random.default_rng(3)
        Rs, mask, Rm, Rl, V1, V2, W = random_instance(rng)
        exact = kernel_backend.gradients(Rs, mask, Rm, Rl, V1, V2, 1.0, 0.1, 0.0, W)
        literal = kernel_backend.gradients(Rs, mask, Rm, Rl, V1, V2, 1.0, 0.1, 0.0, W,
                                           literal=True)
        for a, b in zip(exact, literal):
            assert np.abs(a - b).max() <= 1e-12

    def test_uncoupled_form(self, kernel_backend):
        # interaction part of the uncoupled gradient is alpha * r * (Rl - W^T Rl)
        rng = np.random.default_rng(4)
        Rs, mask, Rm, Rl, V1, V2, W = random_instance(rng)
        alpha = 0.9
        with_term = kernel_backend.gradients(Rs, mask, Rm, Rl, V1, V2, 0.0, 0.0,
                                             alpha, W, literal=True)[0]
        without = kernel_backend.gradients(Rs, mask, Rm, Rl, V1, V2, 0.0, 0.0,
                                           0.0, W, literal=True)[0]
        D = Rl - W.T @ Rl
        assert np.allclose(with_term - without, alpha * Rl.shape[0] * D,
                           rtol=1e-10, atol=1e-12)


class TestBackendAgreement:
    def test_objective_and_gradients_match(self):
        backends = available_backends()
        if len(backends) < 2:
            pytest.skip("only one backend importable")
        rng = np.random.default_rng(5)
        for _ in range(10):
            Rs, mask, Rm, Rl, V1, V2, W = random_instance(rng, r=15, n=6, m=7, l=3)
            args = (Rs, mask, Rm, Rl, V1, V2, 0.8, 0.02, 1.4, W)
            values = {name: b.objective(*args) for name, b in backends.items()}
            grads = {name: b.gradients(*args) for name, b in backends.items()}
            ref_v = values["numpy"]
            ref_g = grads["numpy"]
            for name in backends:
                assert values[name] == pytest.approx(ref_v, rel=1e-10)
                for a, b in zip(grads[name], ref_g):
                    assert np.allclose(a, b, rtol=1e-9, atol=1e-12)


class TestObjectiveValues:
    def test_zero_factors(self, kernel_backend):
        rng = np.random.default_rng(6)
        Rs, mask, Rm, _, _, _, W = random_instance(rng, r=5, n=3, m=4, l=2)
        Rl = np.zeros((5, 2))
        V1 = np.zeros((3, 2))
        V2 = np.zeros((4, 2))
        lam1 = 0.7
        got = kernel_backend.objective(Rs, mask, Rm, Rl, V1, V2, lam1, 0.3, 2.0, W)
        want = 0.5 * ((mask * Rs) ** 2).sum() + 0.5 * lam1 * (Rm ** 2).sum()
        assert got == pytest.approx(want, rel=1e-12)

    def test_all_masked_all_zero_weights(self, kernel_backend):
        rng = np.random.default_rng(7)
        Rs, _, Rm, Rl, V1, V2, _ = random_instance(rng, r=5, n=3, m=4, l=2,
                                                   with_weights=False)
        mask = np.zeros_like(Rs)
        got = kernel_backend.objective(Rs * 0, mask, Rm, Rl, V1, V2, 0.0, 0.0, 0.0, None)
        assert got == 0.0

    def test_planted_exact_solution(self, kernel_backend):
        rng = np.random.default_rng(8)
        r, n, m, l = 7, 4, 5, 3
        Rl = rng.random((r, l))
        V1 = rng.random((n, l))
        V2 = rng.random((m, l))
        Rs = Rl @ V1.T
        Rm = Rl @ V2.T
        mask = np.ones_like(Rs)
        got = kernel_backend.objective(Rs, mask, Rm, Rl, V1, V2, 1.0, 0.0, 0.0, None)
        assert got <= 1e-20

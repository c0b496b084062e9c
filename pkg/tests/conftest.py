import numpy as np
import pytest

from shopgrid._kernels import available_backends


@pytest.fixture(params=sorted(available_backends()))
def kernel_backend(request):
    """Run kernel-contract tests against every importable backend."""
    return available_backends()[request.param]


def random_instance(rng, r=8, n=4, m=5, l=3, with_weights=True, mask_density=0.7):
    """A random masked factorization problem for kernel and gradient tests."""
    mask = (rng.random((r, n)) < mask_density).astype(float)
    Rs = rng.random((r, n)) * mask
    Rm = rng.random((r, m))
    Rl = rng.standard_normal((r, l))
    V1 = rng.standard_normal((n, l))
    V2 = rng.standard_normal((m, l))
    W = None
    if with_weights:
        W = rng.random((r, r)) + 1e-3
        W /= W.sum(axis=0)
    return Rs, mask, Rm, Rl, V1, V2, W

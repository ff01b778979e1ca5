import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from iterreg.exceptions import DimensionError, ParameterError
from iterreg.kernel import (DictionaryKernel, GaussianKernel, KernelExpansion, LinearKernel,
                            PolynomialKernel, eval_kernel, expansion_eval, gram, kappa,
                            kernel_from_spec, predict_many, rkhs_norm_sq)

SQUARE_DICT = DictionaryKernel(features=(lambda A: A[:, 0], lambda A: A[:, 0] ** 2), dim=1)


def all_kernels(dim):
    return [
        LinearKernel(dim=dim),
        PolynomialKernel(degree=3, offset=1.0, dim=dim),
        PolynomialKernel(degree=2, offset=0.0, dim=dim),
        GaussianKernel(bandwidth=0.4, dim=dim),
        DictionaryKernel(features=(lambda A: np.sin(A).sum(axis=1),
                                   lambda A: A[:, 0] * A[:, -1], lambda A: np.ones(len(A))),
                         dim=dim),
    ]


def test_linear_eval():
    assert eval_kernel(LinearKernel(), (1, 2), (3, 4)) == 11


def test_gaussian_eval_diagonal():
    assert eval_kernel(GaussianKernel(1.0), (0.3, -2.0), (0.3, -2.0)) == 1.0


def test_gaussian_eval_matches_formula():
    x, z = np.array([0.1, 0.7]), np.array([-0.4, 0.2])
    bw = 0.6
    want = math.exp(-((0.5 ** 2 + 0.5 ** 2) / (2 * bw ** 2)))
    assert eval_kernel(GaussianKernel(bw), x, z) == pytest.approx(want, rel=1e-14)


def test_polynomial_eval():
    # (1*3 + 2*4 + 1)^2
    assert eval_kernel(PolynomialKernel(2, 1.0), (1, 2), (3, 4)) == 144


def test_dictionary_eval():
    assert eval_kernel(SQUARE_DICT, 2, 3) == 42


def test_eval_dimension_mismatch():
    with pytest.raises(DimensionError):
        eval_kernel(LinearKernel(), (1, 2), (1, 2, 3))
    with pytest.raises(DimensionError):
        eval_kernel(LinearKernel(dim=2), (1, 2, 3), (1, 2, 3))


def test_gram_linear():
    np.testing.assert_array_equal(gram(LinearKernel(), [[1.0], [2.0]]), [[1, 2], [2, 4]])


def test_gram_gaussian_repeated_point():
    x = [0.25, 0.5]
    np.testing.assert_array_equal(gram(GaussianKernel(1.0), [x, x]), np.ones((2, 2)))


def test_gram_empty():
    with pytest.raises(DimensionError):
        gram(LinearKernel(dim=2), np.empty((0, 2)))


def test_gram_matches_pointwise_eval():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(6, 3))
    for k in all_kernels(3):
        G = gram(k, X)
        for i in range(6):
            for j in range(6):
                assert G[i, j] == pytest.approx(eval_kernel(k, X[i], X[j]), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("dim", [1, 2, 5])
def test_gram_symmetric_and_psd_on_random_sets(dim):
    rng = np.random.default_rng(dim)
    for k in all_kernels(dim):
        for _ in range(200):
            n = int(rng.integers(1, 21))
            X = rng.normal(size=(n, dim)) * rng.uniform(0.1, 3.0)
            G = gram(k, X)
            assert np.array_equal(G, G.T)
            lam = np.linalg.eigvalsh(G)
            assert lam.min() >= -1e-9 * max(np.trace(G), 1e-300)


def test_expansion_eval_examples():
    assert expansion_eval(LinearKernel(), [[1.0], [2.0]], [0.0, 0.0], 5.0) == 0.0
    assert expansion_eval(LinearKernel(), [1.0], [1.0], 5.0) == 5.0
    assert expansion_eval(SQUARE_DICT, [2.0], [0.5], 3.0) == 21.0


def test_expansion_eval_length_mismatch():
    with pytest.raises(DimensionError):
        expansion_eval(LinearKernel(), [[1.0], [2.0]], [1.0], 0.0)


def test_rkhs_norm_examples():
    assert rkhs_norm_sq(np.eye(3), np.zeros(3)) == 0.0
    assert rkhs_norm_sq(gram(LinearKernel(), [1.0]), [1.0]) == 1.0
    assert rkhs_norm_sq(np.ones((2, 2)), [1.0, -1.0]) == 0.0


def test_rkhs_norm_clamps_roundoff():
    G = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-15]])
    assert rkhs_norm_sq(G, [1.0, -1.0]) >= 0.0


def test_rkhs_norm_length_mismatch():
    with pytest.raises(DimensionError):
        rkhs_norm_sq(np.eye(2), [1.0, 2.0, 3.0])


def test_kappa_provenance():
    assert kappa(GaussianKernel(0.01)) == kappa(GaussianKernel(7.0))
    kb = kappa(GaussianKernel(0.3), X=[[100.0]], user=5.0)
    assert (kb.kappa, kb.provenance) == (1.0, "analytic")
    kb = kappa(LinearKernel(), X=[[3.0, 4.0]])
    assert (kb.kappa, kb.provenance) == (5.0, "data-estimated")
    kb = kappa(LinearKernel(), X=[[3.0, 4.0]], user=10.0)
    assert (kb.kappa, kb.provenance) == (10.0, "user-supplied")


def test_kappa_without_source():
    with pytest.raises(ParameterError):
        kappa(LinearKernel())


def test_kernel_parameter_validation():
    with pytest.raises(ParameterError):
        GaussianKernel(0.0)
    with pytest.raises(ParameterError):
        PolynomialKernel(0, 1.0)
    with pytest.raises(ParameterError):
        PolynomialKernel(2, -1.0)
    with pytest.raises(ParameterError):
        DictionaryKernel(features=())


def test_kernel_spec_round_trip():
    for k in (LinearKernel(dim=2), PolynomialKernel(3, 0.5, dim=2), GaussianKernel(0.7, dim=2)):
        assert kernel_from_spec(k.to_spec()) == k
    assert kernel_from_spec({"type": "gaussian", "bandwidth": 2.0, "kappa": 1}) == GaussianKernel(2.0)
    with pytest.raises(ParameterError):
        kernel_from_spec({"type": "laplacian"})


def test_expansion_dict_round_trip():
    rng = np.random.default_rng(3)
    f = KernelExpansion(GaussianKernel(0.5, dim=2), rng.random((4, 2)), rng.normal(size=4))
    g = KernelExpansion.from_dict(f.to_dict())
    X = rng.random((10, 2))
    np.testing.assert_array_equal(f(X), g(X))


points = arrays(np.float64, st.tuples(st.integers(1, 8), st.just(2)),
                elements=st.floats(-3, 3, allow_nan=False))


@settings(max_examples=150, deadline=None)
@given(X=points, seed=st.integers(0, 2 ** 32 - 1), which=st.integers(0, 4))
def test_reproducing_consistency(X, seed, which):
    k = all_kernels(2)[which]
    c = np.random.default_rng(seed).normal(size=X.shape[0])
    G = gram(k, X)
    for i in range(X.shape[0]):
        v = expansion_eval(k, X, c, X[i])
        assert abs(v - G[i] @ c) <= 1e-10 * (1 + abs(v))


@settings(max_examples=150, deadline=None)
@given(X=points, Z=points, seed=st.integers(0, 2 ** 32 - 1), which=st.integers(0, 4))
def test_sup_norm_bounded_by_kappa(X, Z, seed, which):
    # |f(x)| <= kappa ||f||_K, with kappa taken over the centers and test points
    k = all_kernels(2)[which]
    c = np.random.default_rng(seed).normal(size=X.shape[0])
    kap = kappa(k, np.vstack([X, Z])).kappa
    f = KernelExpansion(k, X, c)
    bound = kap * math.sqrt(rkhs_norm_sq(gram(k, X), c))
    assert np.all(np.abs(f(Z)) <= bound * (1 + 1e-9) + 1e-9)


@settings(max_examples=100, deadline=None)
@given(x=arrays(np.float64, 3, elements=st.floats(-5, 5)),
       z=arrays(np.float64, 3, elements=st.floats(-5, 5)), which=st.integers(0, 4))
def test_symmetry(x, z, which):
    k = all_kernels(3)[which]
    assert eval_kernel(k, x, z) == pytest.approx(eval_kernel(k, z, x), rel=1e-14, abs=1e-300)


def test_predict_many_matches_columns():
    k = GaussianKernel(0.4, dim=2)
    rng = np.random.default_rng(5)
    centers, C, X = rng.random((7, 2)), rng.normal(size=(7, 3)), rng.random((11, 2))
    out = predict_many(k, centers, C, X)
    assert out.shape == (11, 3)
    for j in range(3):
        np.testing.assert_allclose(out[:, j], k.cross(X, centers) @ C[:, j], rtol=1e-13, atol=1e-14)
    assert predict_many(k, centers, C[:, 0], X).shape == (11,)
    with pytest.raises(DimensionError):
        predict_many(k, centers, C[:3], X)

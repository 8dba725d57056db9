import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ncsgain import densela

from oracles import cholesky_loops, eig2_charpoly, expm_taylor, lyapunov_series, matmul_loops
from plants import PUBLISHED_EIG, PUBLISHED_F

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
PROPS = settings(max_examples=100, deadline=None, derandomize=True)


def square(n_min=1, n_max=6):
    return st.integers(n_min, n_max).flatmap(lambda n: arrays(float, (n, n), elements=finite))


# -- matmul -------------------------------------------------------------------

def test_matmul_matches_loops():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 5))
    np.testing.assert_allclose(densela.matmul(a, b), matmul_loops(a, b), atol=1e-13)


def test_matmul_shape_mismatch():
    with pytest.raises(densela.DimensionError):
        densela.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        densela.matmul(np.array([[np.nan]]), np.ones((1, 1)))


# -- cholesky -----------------------------------------------------------------

def test_cholesky_known_factor():
    low = densela.cholesky([[4.0, 2.0], [2.0, 3.0]])
    np.testing.assert_allclose(low, [[2.0, 0.0], [1.0, math.sqrt(2.0)]], atol=1e-15)


def test_cholesky_matches_loops():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(6, 6))
    a = m @ m.T + 0.5 * np.eye(6)
    np.testing.assert_allclose(densela.cholesky(a), cholesky_loops(a), atol=1e-12)


@pytest.mark.parametrize(
    "a, error",
    [
        ([[1.0, 2.0], [2.0, 1.0]], densela.NotPositiveDefinite),
        ([[1.0, 0.0], [0.0, 0.0]], densela.NotPositiveDefinite),
        ([[1.0, 0.5], [0.4, 1.0]], densela.NotSymmetric),
    ],
)
def test_cholesky_rejects(a, error):
    with pytest.raises(error):
        densela.cholesky(a)


@PROPS
@given(arrays(float, (4, 4), elements=finite))
def test_cholesky_agrees_with_min_eigenvalue(m):
    a = 0.5 * (m + m.T)
    lam_min = densela.eig_sym(a).eigenvalues[0]
    scale = max(np.abs(a).max(), 1e-300)
    # skip the ambiguous band around zero
    if abs(lam_min) <= 1e-8 * scale:
        return
    try:
        densela.cholesky(a)
        ok = True
    except densela.NotPositiveDefinite:
        ok = False
    assert ok == (lam_min > 1e-11 * scale)


# -- symmetric eigen ----------------------------------------------------------

@pytest.mark.parametrize(
    "a, expected",
    [
        (np.diag([3.0, 1.0, 2.0]), [1.0, 2.0, 3.0]),
        ([[2.0, 1.0], [1.0, 2.0]], [1.0, 3.0]),
        (np.eye(6), [1.0] * 6),
    ],
)
def test_eig_sym_examples(a, expected):
    np.testing.assert_allclose(densela.eig_sym(a).eigenvalues, expected, atol=1e-12)


@PROPS
@given(square())
def test_eig_sym_reconstructs(m):
    a = 0.5 * (m + m.T)
    res = densela.eig_sym(a)
    recon = res.eigenvectors @ np.diag(res.eigenvalues) @ res.eigenvectors.T
    assert np.abs(recon - a).max() <= 1e-9 * max(1.0, np.abs(a).max())
    assert np.all(np.diff(res.eigenvalues) >= 0)


# -- eig_2x2 ------------------------------------------------------------------

def test_eig_2x2_rotation():
    lam = densela.eig_2x2([[0.0, 1.0], [-1.0, 0.0]])
    assert set(lam) == {1j, -1j}


@pytest.mark.parametrize("index", [0, 2])
def test_eig_2x2_published_f(index):
    lam = sorted((v.real for v in densela.eig_2x2(PUBLISHED_F[index])), reverse=True)
    np.testing.assert_allclose(lam, sorted(PUBLISHED_EIG[index], reverse=True), atol=5e-4)


def test_eig_2x2_no_cancellation():
    # product of roots is 1e-16; the naive formula loses the small root entirely
    lam = densela.eig_2x2([[1.0, 1e-8], [-1e-8, 0.0]])
    small = min(lam, key=abs)
    assert abs(small.real - 1e-16) < 1e-24


def test_eig_2x2_shape():
    with pytest.raises(densela.DimensionError):
        densela.eig_2x2(np.eye(3))


@PROPS
@given(arrays(float, (2, 2), elements=finite))
def test_eig_2x2_matches_charpoly(a):
    got = sorted(densela.eig_2x2(a), key=lambda z: (z.real, z.imag))
    want = sorted((complex(v) for v in eig2_charpoly(a)), key=lambda z: (z.real, z.imag))
    scale = max(1.0, np.abs(a).max())
    # repeated roots are ill-conditioned in the polynomial oracle
    tol = 1e-7 * scale
    for g, w in zip(got, want):
        assert abs(g - w) <= tol or abs(got[0] - got[1]) < 1e-6 * scale


@PROPS
@given(arrays(float, (2, 2), elements=st.floats(-2, 2, allow_nan=False)))
def test_schur_stable_agrees_with_eig_2x2(a):
    radius = max(abs(v) for v in densela.eig_2x2(a))
    if abs(radius - 1.0) < 1e-6:
        return
    assert densela.is_schur_stable(a) == (radius < 1.0)


# -- lin_solve ----------------------------------------------------------------

def test_lin_solve_identity():
    b = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(densela.lin_solve(np.eye(3), b), b)


def test_lin_solve_diagonal():
    np.testing.assert_allclose(densela.lin_solve([[2.0, 0.0], [0.0, 4.0]], [[2.0], [8.0]]), [[1.0], [2.0]])


def test_lin_solve_vector_rhs():
    x = densela.lin_solve([[2.0, 1.0], [1.0, 3.0]], [3.0, 5.0])
    assert x.shape == (2,)
    np.testing.assert_allclose(x, [0.8, 1.4])


def test_lin_solve_random_residual():
    rng = np.random.default_rng(2)
    for _ in range(20):
        q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
        a = q @ np.diag(np.logspace(0, 6, 8)) @ q.T
        b = rng.normal(size=(8, 3))
        x = densela.lin_solve(a, b)
        resid = np.abs(matmul_loops(a, x) - b).max() / (np.abs(a).max() * np.abs(x).max())
        assert resid <= 1e-10


def test_lin_solve_singular():
    with pytest.raises(densela.Singular):
        densela.lin_solve([[1.0, 2.0], [2.0, 4.0]], [1.0, 2.0])


# -- matexp -------------------------------------------------------------------

def test_matexp_zero():
    np.testing.assert_array_equal(densela.matexp(np.zeros((3, 3))), np.eye(3))


def test_matexp_diagonal():
    got = densela.matexp(np.diag([-0.4, -0.6667]))
    np.testing.assert_allclose(got, np.diag([0.6703, 0.5134]), atol=1e-4)


def test_matexp_published_mode():
    a1 = np.array([[-4.0, -0.03], [0.5, -6.667]])
    np.testing.assert_allclose(densela.matexp(0.1 * a1), PUBLISHED_F[0], atol=5e-5)


@PROPS
@given(square(1, 5))
def test_matexp_matches_taylor(m):
    a = m / max(1.0, np.abs(m).sum(axis=0).max()) * 2.0
    np.testing.assert_allclose(densela.matexp(a), expm_taylor(a), atol=1e-11, rtol=1e-11)


@PROPS
@given(square(1, 6))
def test_matexp_inverse_identity(m):
    norm = np.abs(m).sum(axis=0).max()
    a = m * (10.0 / norm) if norm > 10 else m
    err = np.abs(densela.matexp(a) @ densela.matexp(-a) - np.eye(a.shape[0])).max()
    assert err <= 1e-10 * max(1.0, np.abs(densela.matexp(a)).max() * np.abs(densela.matexp(-a)).max()) or err <= 1e-10


# -- discrete Lyapunov --------------------------------------------------------

def test_lyapunov_scalar():
    np.testing.assert_allclose(densela.discrete_lyapunov([[0.5]]), [[4.0 / 3.0]], atol=1e-14)


def test_lyapunov_nilpotent():
    np.testing.assert_allclose(densela.discrete_lyapunov(np.zeros((3, 3))), np.eye(3))


def test_lyapunov_identity_singular():
    with pytest.raises(densela.Singular):
        densela.discrete_lyapunov(np.eye(2))


def test_lyapunov_matches_series():
    rng = np.random.default_rng(3)
    phi = rng.normal(size=(5, 5))
    phi *= 0.9 / np.abs(np.linalg.eigvals(phi)).max()
    np.testing.assert_allclose(densela.discrete_lyapunov(phi), lyapunov_series(phi), rtol=1e-9)


def test_lyapunov_size_limit():
    with pytest.raises(densela.DimensionError):
        densela.discrete_lyapunov(np.zeros((21, 21)))


@PROPS
@given(square(1, 6), st.floats(0.05, 0.99))
def test_lyapunov_residual(m, radius):
    rho = np.abs(np.linalg.eigvals(m)).max()
    if rho < 1e-6:
        return
    phi = m * (radius / rho)
    # strongly non-normal rescalings make the Kronecker system numerically singular
    if np.abs(phi).max() > 100:
        return
    p = densela.discrete_lyapunov(phi)
    assert np.abs(phi.T @ p @ phi - p + np.eye(phi.shape[0])).max() <= 1e-8 * max(1.0, np.abs(p).max())


# -- Schur stability ----------------------------------------------------------

def test_schur_examples():
    assert densela.is_schur_stable(PUBLISHED_F[0])
    assert not densela.is_schur_stable(np.eye(2))
    assert densela.is_schur_stable(0.5 * np.eye(6))
    assert not densela.is_schur_stable([[1.01]])

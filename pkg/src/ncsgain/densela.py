"""Dense real matrix kernel.

Matrices are plain 2-D ``float64`` numpy arrays. The functions here add the
shape, finiteness and tolerance checks the rest of the package relies on.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

SYM_TOL = 1e-12
PIVOT_TOL = 1e-14
CHOL_PIVOT_TOL = 1e-12


class LinAlgError(ArithmeticError):
    """Base class for kernel failures."""


class DimensionError(ValueError):
    pass


class NotSymmetric(LinAlgError):
    pass


class NotPositiveDefinite(LinAlgError):
    pass


class Singular(LinAlgError):
    pass


@dataclass(frozen=True)
class SymEigResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float array (copy)."""
    m = np.array(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(1, -1) if m.size else m.reshape(0, 0)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def _require_square(a: np.ndarray, what: str) -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{what} needs a square matrix, got {a.shape}")


def check_symmetric(a: np.ndarray, tol: float = SYM_TOL) -> None:
    _require_square(a, "symmetry check")
    scale = max(max_abs(a), 1.0)
    if max_abs(a - a.T) > tol * scale:
        raise NotSymmetric(f"asymmetry {max_abs(a - a.T):.3e} exceeds {tol:g} relative")


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def cholesky(a, pivot_tol: float = CHOL_PIVOT_TOL) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    NotSymmetric
        If ``a`` is not symmetric to ``SYM_TOL`` relative.
    NotPositiveDefinite
        If any pivot falls below ``pivot_tol * max|a|``.
    """
    a = as_matrix(a)
    check_symmetric(a)
    n = a.shape[0]
    if n == 0:
        return a.copy()
    floor = pivot_tol * max_abs(a)
    try:
        low = np.linalg.cholesky(0.5 * (a + a.T))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(low) ** 2
    if np.any(pivots <= floor):
        raise NotPositiveDefinite(f"pivot {pivots.min():.3e} below {floor:.3e}")
    return low


def eig_sym(a) -> SymEigResult:
    a = as_matrix(a)
    check_symmetric(a)
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    return SymEigResult(eigenvalues=w, eigenvectors=v)


def min_eig(a: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of ``a``; no checks, hot path."""
    if a.shape[0] == 0:
        return float("inf")
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])


def eig_2x2(a) -> tuple[complex, complex]:
    """Eigenvalues of a 2x2 matrix, larger real part first.

    Uses the cancellation-free form of the quadratic formula: the
    larger-magnitude root comes from ``tr/2 + sign(tr)*sqrt(disc)`` and the
    other from ``det / root``.
    """
    a = as_matrix(a)
    if a.shape != (2, 2):
        raise DimensionError(f"eig_2x2 needs a 2x2 matrix, got {a.shape}")
    half_tr = 0.5 * (a[0, 0] + a[1, 1])
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    # (a-d)^2/4 + bc avoids the tr^2/4 - det cancellation
    disc = 0.25 * (a[0, 0] - a[1, 1]) ** 2 + a[0, 1] * a[1, 0]
    if disc < 0:
        im = np.sqrt(-disc)
        return complex(half_tr, im), complex(half_tr, -im)
    root = np.sqrt(disc)
    big = half_tr + np.copysign(root, half_tr) if half_tr != 0 else root
    if big == 0:
        return 0j, 0j
    small = det / big
    pair = sorted((big, small), reverse=True)
    return complex(pair[0]), complex(pair[1])


def lin_solve(a, b, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """Solve ``a @ x = b`` by partially pivoted LU."""
    a = as_matrix(a, "a")
    b = np.asarray(b, dtype=float)
    vector = b.ndim == 1
    b = b.reshape(-1, 1) if vector else as_matrix(b, "b")
    _require_square(a, "lin_solve")
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"rhs has {b.shape[0]} rows, matrix has {a.shape[0]}")
    if a.shape[0] == 0:
        return b.ravel() if vector else b.copy()
    with warnings.catch_warnings():
        # exact zero pivots are reported below as Singular
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    if np.min(np.abs(np.diag(lu))) <= pivot_tol * max_abs(a):
        raise Singular("pivot below tolerance")
    x = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    return x.ravel() if vector else x


def matexp(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Pade approximant."""
    a = as_matrix(a)
    _require_square(a, "matexp")
    if a.shape[0] == 0:
        return a.copy()
    return scipy.linalg.expm(a)


def discrete_lyapunov(phi) -> np.ndarray:
    """Solve ``phi.T @ P @ phi - P = -I`` through its Kronecker linear system.

    Raises ``Singular`` when some eigenvalue product of ``phi`` is 1, i.e. the
    solution is not unique.
    """
    phi = as_matrix(phi, "phi")
    _require_square(phi, "discrete_lyapunov")
    n = phi.shape[0]
    if n * n > 400:
        raise DimensionError(f"{n}x{n} exceeds the dense Kronecker limit (n^2 <= 400)")
    # row-major vec: vec(Phi^T P Phi) = kron(Phi^T, Phi^T) vec(P)
    system = np.eye(n * n) - np.kron(phi.T, phi.T)
    p = lin_solve(system, np.eye(n).reshape(-1)).reshape(n, n)
    return 0.5 * (p + p.T)


def is_schur_stable(phi) -> bool:
    """True iff every eigenvalue of ``phi`` lies strictly inside the unit circle."""
    try:
        p = discrete_lyapunov(phi)
        cholesky(p)
    except (Singular, NotPositiveDefinite, NotSymmetric):
        return False
    return True

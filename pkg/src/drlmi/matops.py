"""Dense symmetric-matrix numerics.

Everything here works on small dense ``numpy`` arrays.  Symmetric matrices
are plain ``ndarray`` objects that went through :func:`as_sym`; there is no
wrapper class.
"""

import numpy as np

from .errors import InvalidInput, NotPsd, UnstableSystem

PSD_CLIP = 1e-10
PINV_RCOND = 1e-10


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float array."""
    A = np.atleast_2d(np.asarray(M, dtype=float))
    if A.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput(f"{name} has non-finite entries")
    return A


def as_sym(M, name="matrix"):
    """Validate a square matrix and return its symmetric part."""
    A = as_matrix(M, name)
    if A.shape[0] != A.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {A.shape}")
    return 0.5 * (A + A.T)


def spectral_radius(A):
    """Largest eigenvalue modulus of a square matrix."""
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise InvalidInput(f"A must be square, got shape {A.shape}")
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def is_schur_stable(A, margin=0.0):
    return spectral_radius(A) < 1.0 - margin


def solve_discrete_lyapunov(A, W):
    """Solve ``P = A P A^T + W`` for a Schur-stable ``A``.

    Uses the Kronecker form ``(I - A (x) A) vec(P) = vec(W)``, which is exact
    up to a dense solve and fine for the state dimensions used here.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    W = as_sym(W, "W")
    if A.shape != (n, n) or W.shape != (n, n):
        raise InvalidInput(f"shape mismatch: A {A.shape}, W {W.shape}")
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise UnstableSystem(f"spectral radius {rho:.6g} >= 1")
    lhs = np.eye(n * n) - np.kron(A, A)
    P = np.linalg.solve(lhs, W.reshape(-1)).reshape(n, n)
    return 0.5 * (P + P.T)


def _eigh_checked(M, tol, scale=None):
    M = as_sym(M)
    w, V = np.linalg.eigh(M)
    if scale is None:
        scale = np.max(np.abs(w)) if w.size else 0.0
    if w.size and w[0] < -tol * scale:
        raise NotPsd(f"smallest eigenvalue {w[0]:.3e} below tolerance")
    return np.clip(w, 0.0, None), V


def psd_sqrt(M, tol=PSD_CLIP):
    """Symmetric PSD square root; eigenvalues in ``[-tol*|M|, 0)`` are clipped."""
    w, V = _eigh_checked(M, tol)
    S = (V * np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)


def psd_factor(M, tol=PSD_CLIP, scale=None):
    """Return ``F`` with ``F @ F.T == M`` and as many columns as ``rank(M)``.

    A zero matrix yields a single zero column so callers always get a 2-D
    array with at least one column.  ``tol`` is the relative clipping
    threshold for negative eigenvalues and the rank cutoff, measured against
    ``scale`` (default: the largest eigenvalue magnitude of ``M``).
    """
    w, V = _eigh_checked(M, tol, scale)
    n = w.size
    if scale is None:
        scale = np.max(w) if n else 0.0
    keep = w > tol * scale
    if not np.any(keep):
        return np.zeros((n, 1))
    # columns ordered by decreasing eigenvalue
    idx = np.flatnonzero(keep)[::-1]
    return V[:, idx] * np.sqrt(w[idx])


def pinv(M):
    """Moore-Penrose pseudoinverse of a symmetric matrix."""
    M = as_sym(M, "M")
    P = np.linalg.pinv(M, rcond=PINV_RCOND, hermitian=True)
    return 0.5 * (P + P.T)


def min_eig(M):
    return float(np.linalg.eigvalsh(as_sym(M))[0])


def max_eig(M):
    return float(np.linalg.eigvalsh(as_sym(M))[-1])

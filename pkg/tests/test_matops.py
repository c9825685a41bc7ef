import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drlmi.errors import InvalidInput, NotPsd, UnstableSystem
from drlmi.matops import (
    as_sym,
    is_schur_stable,
    max_eig,
    min_eig,
    pinv,
    psd_factor,
    psd_sqrt,
    solve_discrete_lyapunov,
    spectral_radius,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def square(max_n=4):
    return st.integers(1, max_n).flatmap(lambda n: arrays(float, (n, n), elements=finite))


def test_scalar_lyapunov_oracle():
    # P = a^2 P + w  ->  P = w / (1 - a^2)
    assert solve_discrete_lyapunov([[0.5]], [[1.0]])[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-14)


def test_lyapunov_unstable_raises():
    with pytest.raises(UnstableSystem):
        solve_discrete_lyapunov([[1.0]], [[1.0]])


def test_lyapunov_shape_mismatch():
    with pytest.raises(InvalidInput):
        solve_discrete_lyapunov(np.eye(2) * 0.5, np.eye(3))


@settings(max_examples=60, deadline=None)
@given(square(), st.floats(0.05, 0.95))
def test_lyapunov_matches_scipy(M, rho):
    r = spectral_radius(M)
    A = M * (rho / r) if r > 1e-8 else M
    W = M @ M.T + np.eye(M.shape[0])
    P = solve_discrete_lyapunov(A, W)
    np.testing.assert_allclose(P, scipy.linalg.solve_discrete_lyapunov(A, W), rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(A @ P @ A.T + W, P, rtol=1e-9, atol=1e-10)


def test_spectral_radius_rotation():
    c, s = np.cos(0.3), np.sin(0.3)
    assert spectral_radius(0.9 * np.array([[c, -s], [s, c]])) == pytest.approx(0.9)
    assert is_schur_stable([[0.99]])
    assert not is_schur_stable([[0.99]], margin=0.02)


def test_as_sym_rejects():
    with pytest.raises(InvalidInput):
        as_sym(np.ones((2, 3)))
    with pytest.raises(InvalidInput):
        as_sym([[np.nan]])


@settings(max_examples=80, deadline=None)
@given(square(5), st.integers(0, 5))
def test_psd_factor_reconstructs(M, drop):
    n = M.shape[0]
    F = M[:, : max(1, n - drop)]
    S = F @ F.T
    L = psd_factor(S)
    np.testing.assert_allclose(L @ L.T, S, atol=1e-8 * max(1.0, np.abs(S).max()))
    assert L.shape[1] <= np.linalg.matrix_rank(F) or not np.any(S)
    R = psd_sqrt(S)
    np.testing.assert_allclose(R, R.T)
    np.testing.assert_allclose(R @ R, S, atol=1e-7 * max(1.0, np.abs(S).max()))


def test_psd_factor_zero_matrix():
    L = psd_factor(np.zeros((3, 3)))
    assert L.shape == (3, 1) and not np.any(L)


def test_psd_rejects_indefinite():
    with pytest.raises(NotPsd):
        psd_factor(np.diag([1.0, -0.1]))
    # tiny negative eigenvalues are clipped
    L = psd_factor(np.diag([1.0, -1e-13]))
    assert L.shape == (2, 1)


@settings(max_examples=40, deadline=None)
@given(square(4))
def test_pinv_penrose(M):
    S = M @ M.T
    P = pinv(S)
    np.testing.assert_allclose(S @ P @ S, S, atol=1e-6 * max(1.0, np.abs(S).max()) ** 2)


def test_extreme_eigenvalues():
    assert min_eig(np.diag([3.0, -1.0])) == -1.0
    assert max_eig(np.diag([3.0, -1.0])) == 3.0

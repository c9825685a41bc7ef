import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drlmi.errors import InvalidInput
from drlmi.sdpcore import LmiProblem, SolverOptions, Status, bmat, block_residuals, svec


def test_schur_complement_minimum():
    # min t  s.t. [[t, 1], [1, 1]] >= 0  ->  t = 1
    p = LmiProblem()
    t = p.scalar("t")
    p.add_psd(bmat([[t, np.ones((1, 1))], [np.ones((1, 1)), np.ones((1, 1))]]), "schur")
    p.minimize(t)
    sol = p.solve()
    assert sol.ok
    assert sol.objective == pytest.approx(1.0, abs=1e-7)
    assert sol[t] == pytest.approx(1.0, abs=1e-7)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_max_eigenvalue_sdp(seed, d):
    # min t s.t. t I - M >= 0 gives lambda_max(M); the dual is a density matrix
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((d, d))
    M = 0.5 * (F + F.T)
    p = LmiProblem()
    t = p.scalar()
    p.add_psd(t * np.eye(d) - M, "lmax")
    p.minimize(t)
    sol = p.solve()
    lmax = np.linalg.eigvalsh(M)[-1]
    assert sol.objective == pytest.approx(lmax, abs=1e-6)
    Z = sol.dual("lmax")
    assert np.trace(Z) == pytest.approx(1.0, abs=1e-6)
    assert np.trace(Z @ M) == pytest.approx(lmax, abs=1e-6)
    assert np.linalg.eigvalsh(Z)[0] > -1e-7


def test_symmetric_variable_and_equality():
    # max tr(X) s.t. X <= I, X_01 = 0.3: (1 - a)(1 - b) >= 0.09 gives 1.4
    p = LmiProblem()
    X = p.symmetric(2, "X")
    p.add_psd(np.eye(2) - X, "ub")
    p.add_eq(X[0, 1], 0.3)
    p.maximize(X.trace())
    sol = p.solve()
    assert sol.ok
    assert sol.objective == pytest.approx(1.4, abs=1e-7)
    assert sol[X][0, 1] == pytest.approx(0.3, abs=1e-8)
    res = block_residuals(p, sol)
    assert max(res["lmi"]) < 1e-7 and max(res["eq"]) < 1e-8


def test_strict_margin_is_enforced():
    p = LmiProblem()
    t = p.scalar()
    p.add_nsd_strict(t - 1.0, "lt", eps=0.01)
    p.maximize(t)
    sol = p.solve()
    # margin = eps * (1 + |const|) = 0.02
    assert sol.objective == pytest.approx(0.98, abs=1e-7)


def test_infeasible_is_reported_not_raised():
    p = LmiProblem()
    t = p.scalar()
    p.add_psd(t - 2.0)
    p.add_psd(1.0 - t)
    p.minimize(t)
    sol = p.solve()
    assert sol.status is Status.INFEASIBLE
    assert sol.objective == np.inf
    assert not sol.ok


def test_unbounded_is_reported():
    p = LmiProblem()
    t = p.scalar()
    p.add_nonneg(t)
    p.maximize(t)
    assert p.solve().status is Status.UNBOUNDED


def test_malformed_problems_raise():
    p, q = LmiProblem(), LmiProblem()
    x = q.scalar()
    with pytest.raises(InvalidInput):
        p.add_psd(x)
    y = p.matrix(2, 3)
    with pytest.raises(InvalidInput):
        p.add_psd(y)
    with pytest.raises(InvalidInput):
        p.minimize(y)
    with pytest.raises(InvalidInput):
        p.add_variable((0, 2))


def test_solver_options_coerce():
    assert SolverOptions.coerce({"tol": 1e-7}).tol == 1e-7
    assert SolverOptions.coerce(None).eps_strict == 1e-7
    with pytest.raises(InvalidInput):
        SolverOptions.coerce({"nope": 1})


def test_svec_preserves_inner_product():
    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((2, 3, 3))
    A, B = A + A.T, B + B.T
    assert svec(A) @ svec(B) == pytest.approx(np.trace(A @ B))

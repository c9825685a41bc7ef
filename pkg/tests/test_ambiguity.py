import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drlmi.ambiguity import (
    AmbiguitySpec,
    Kind,
    gelbrich_distance,
    gelbrich_distance_sdp,
    optimal_transport_plan,
)
from drlmi.errors import InvalidInput, NotPd


def test_scalar_gelbrich_is_std_difference():
    # W2(N(0, a^2), N(0, b^2)) = |a - b|
    assert gelbrich_distance([0], [[4.0]], [0], [[9.0]]) == pytest.approx(1.0)
    assert gelbrich_distance_sdp([[4.0]], [[9.0]]) == pytest.approx(1.0, abs=1e-7)


def test_mean_shift_adds_in_quadrature():
    S = np.diag([1.0, 2.0])
    assert gelbrich_distance([0, 0], S, [3, 4], S) == pytest.approx(5.0)


def test_commuting_closed_form():
    # commuting covariances: distance is ||sqrt(S1) - sqrt(S2)||_F
    S1, S2 = np.diag([1.0, 4.0, 0.0]), np.diag([9.0, 1.0, 4.0])
    assert gelbrich_distance(np.zeros(3), S1, np.zeros(3), S2) == pytest.approx(math.sqrt(4 + 1 + 4))


def _pair(seed, d):
    rng = np.random.default_rng(seed)
    F1, F2 = rng.standard_normal((2, d, d))
    return F1 @ F1.T + 0.1 * np.eye(d), F2 @ F2.T


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_gelbrich_is_a_metric(seed, d):
    S1, S2 = _pair(seed, d)
    S3, _ = _pair(seed + 1, d)
    z = np.zeros(d)
    d12 = gelbrich_distance(z, S1, z, S2)
    assert gelbrich_distance(z, S1, z, S1) == pytest.approx(0.0, abs=1e-6)
    assert d12 == pytest.approx(gelbrich_distance(z, S2, z, S1), rel=1e-9)
    assert d12 <= gelbrich_distance(z, S1, z, S3) + gelbrich_distance(z, S3, z, S2) + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_transport_plan_postconditions(seed, d):
    S1, S2 = _pair(seed, d)
    D = optimal_transport_plan(S1, S2)
    np.testing.assert_allclose(D, D.T, atol=1e-12)
    assert np.linalg.eigvalsh(D)[0] > -1e-10
    np.testing.assert_allclose(D @ S1 @ D, S2, atol=1e-8 * max(1.0, np.abs(S2).max()))
    E = np.eye(d) - D
    dist = gelbrich_distance(np.zeros(d), S1, np.zeros(d), S2)
    assert np.trace(E @ S1 @ E.T) == pytest.approx(dist**2, rel=1e-8, abs=1e-10)


def test_transport_needs_definite_source():
    with pytest.raises(NotPd):
        optimal_transport_plan(np.diag([1.0, 0.0]), np.eye(2))


def test_spec_validation():
    a = AmbiguitySpec("IND", 0.5, [[1.0]])
    assert a.kind is Kind.INDEPENDENT and a.n_w == 1
    assert a.replace(kind="cor").kind is Kind.CORRELATED
    with pytest.raises(InvalidInput):
        AmbiguitySpec("cor", -0.1, [[1.0]])
    with pytest.raises(InvalidInput):
        AmbiguitySpec("cor", float("inf"), [[1.0]])
    with pytest.raises(InvalidInput):
        AmbiguitySpec("cor", 0.1, [[-1.0]])
    with pytest.raises(InvalidInput):
        AmbiguitySpec("both", 0.1, [[1.0]])

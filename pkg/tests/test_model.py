import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drlmi.errors import InvalidInput, UnstableSystem
from drlmi.model import (
    ClosedLoop,
    Controller,
    PlantRealization,
    close_loop,
    frequency_response_max_sv,
    simulate,
    weighted_h2_norm_sq,
)

from .conftest import random_closed_loop


def _plant():
    return PlantRealization(
        [[0.9, 0.2], [0.0, 0.5]], [[1.0], [0.5]], [[0.0], [1.0]],
        [[1.0, 0.0], [0.0, 0.0]], [[0.0], [0.0]], [[0.0], [1.0]],
        [[1.0, 1.0]], [[0.1]],
    )


def test_scalar_h2_oracle(scalar_loop):
    # sum_k 0.25^k = 4/3
    assert weighted_h2_norm_sq(scalar_loop, [[1.0]]) == pytest.approx(4.0 / 3.0, rel=1e-14)
    assert weighted_h2_norm_sq(scalar_loop, [[2.25]]) == pytest.approx(3.0, rel=1e-14)


def test_h2_feedthrough_only():
    cl = ClosedLoop([[0.0]], [[0.0, 0.0]], [[0.0]], [[2.0, 1.0]])
    assert weighted_h2_norm_sq(cl, np.diag([1.0, 3.0])) == pytest.approx(7.0)


def test_h2_unstable_raises():
    with pytest.raises(UnstableSystem):
        weighted_h2_norm_sq(ClosedLoop.scalar(1.1, 1, 1, 0), [[1.0]])


def test_plant_shape_errors_name_the_field():
    with pytest.raises(InvalidInput, match="B_u"):
        PlantRealization(np.eye(2), np.ones((2, 1)), np.ones((3, 1)), np.eye(2), np.zeros((2, 1)), np.zeros((2, 1)), np.eye(2), np.zeros((2, 1)))


def test_static_controller_closed_loop():
    p = _plant()
    K = Controller.static(p, [[-0.5]])
    cl = close_loop(p, K)
    # controller states are inert, the plant sees A + B_u D_c C_y
    Acl = p.A + p.B_u @ K.D_c @ p.C_y
    np.testing.assert_allclose(cl.calA[:2, :2], Acl)
    np.testing.assert_allclose(cl.calB[:2], p.B_w + p.B_u @ K.D_c @ p.D_yw)
    np.testing.assert_allclose(cl.calD, p.D_zw + p.D_zu @ K.D_c @ p.D_yw)


def test_close_loop_rejects_wrong_order():
    p = _plant()
    K = Controller(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    with pytest.raises(InvalidInput, match="order"):
        close_loop(p, K)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_simulated_cost_approaches_h2(seed):
    rng = np.random.default_rng(seed)
    cl = random_closed_loop(rng, rho=(0.1, 0.7))
    w = rng.standard_normal((40_000, cl.n_w))
    sim = simulate(cl, w)
    h2 = weighted_h2_norm_sq(cl, np.eye(cl.n_w))
    assert sim.cost == pytest.approx(h2, rel=0.1)


def test_simulate_deterministic_and_shapes(scalar_loop):
    w = np.arange(5.0)
    s = simulate(scalar_loop, w)
    assert s.states.shape == (6, 1) and s.outputs.shape == (5, 1)
    # x(t+1) = 0.5 x + w
    np.testing.assert_allclose(s.states[:, 0], [0, 0, 1, 2.5, 4.25, 6.125])
    with pytest.raises(InvalidInput):
        simulate(scalar_loop, np.zeros((0, 1)))


def test_frequency_response_scalar_endpoints(scalar_loop):
    # |1 / (e^{j theta} - 0.5)| is 2 at theta = 0 and 2/3 at theta = pi
    r = frequency_response_max_sv(scalar_loop, grid=[0.0, np.pi])
    np.testing.assert_allclose(r[:, 1], [2.0, 2.0 / 3.0], rtol=1e-14)


def test_frequency_response_static_gain_is_flat():
    cl = ClosedLoop([[0.3]], [[0.0]], [[0.0], [0.0]], [[3.0], [-4.0]])
    r = frequency_response_max_sv(cl, grid=np.linspace(0, np.pi, 7))
    np.testing.assert_allclose(r[:, 1], 5.0)
    with pytest.raises(InvalidInput):
        frequency_response_max_sv(cl, grid=[4.0])


def test_select_outputs_and_input_map(scalar_loop):
    cl = ClosedLoop(np.eye(2) * 0.5, np.ones((2, 1)), np.eye(2), np.zeros((2, 1)))
    assert cl.select_outputs([1]).n_z == 1
    with pytest.raises(InvalidInput):
        cl.select_outputs([2])
    scaled = scalar_loop.with_input_map([[1.5]])
    assert weighted_h2_norm_sq(scaled, [[1.0]]) == pytest.approx(3.0)

"""Shared generators and the acceptance-criteria reporter."""

import numpy as np
import pytest

from drlmi.model import ClosedLoop, PlantRealization

# plants whose nominal H2 cost exceeds this are rejected by the generator:
# they have a badly actuated unstable mode and every method is ill-conditioned
PLANT_H2_CAP = 1e3


def random_closed_loop(rng, n_max=3, nw_max=2, nz_max=2, rho=(0.1, 0.95)):
    n = int(rng.integers(1, n_max + 1))
    nw = int(rng.integers(1, nw_max + 1))
    nz = int(rng.integers(1, nz_max + 1))
    A = rng.standard_normal((n, n))
    A *= rng.uniform(*rho) / max(abs(np.linalg.eigvals(A)))
    return ClosedLoop(A, rng.standard_normal((n, nw)), rng.standard_normal((nz, n)), rng.standard_normal((nz, nw)))


def random_cov(rng, d, floor=0.1):
    F = rng.standard_normal((d, d))
    return F @ F.T + floor * np.eye(d)


def _candidate_plant(rng, n_max=3):
    n = int(rng.integers(1, n_max + 1))
    nu = int(rng.integers(1, 3))
    ny = int(rng.integers(1, 3))
    nw = ny + 1
    A = rng.standard_normal((n, n))
    A *= rng.uniform(0.5, 1.3) / max(abs(np.linalg.eigvals(A)))
    C_z = np.vstack([rng.standard_normal((1, n)), np.zeros((nu, n))])
    D_zu = np.vstack([np.zeros((1, nu)), np.eye(nu)])
    D_yw = np.hstack([np.zeros((ny, 1)), 0.1 * np.eye(ny)]) + 0.05 * rng.standard_normal((ny, nw))
    return PlantRealization(
        A, rng.standard_normal((n, nw)), rng.standard_normal((n, nu)),
        C_z, np.zeros((1 + nu, nw)), D_zu, rng.standard_normal((ny, n)), D_yw,
    )


def random_plant(rng, n_max=3):
    """Random stabilizable, detectable plant with a moderate H2 cost."""
    from drlmi.synthesis import synthesize_h2

    while True:
        p = _candidate_plant(rng, n_max)
        try:
            cost = synthesize_h2(p, np.eye(p.n_w)).cost
        except Exception:
            continue
        if cost <= PLANT_H2_CAP:
            return p


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def scalar_loop():
    return ClosedLoop.scalar(0.5, 1.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# acceptance reporting: one line per criterion at the end of the run

_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """``criterion(number, ok, detail)`` records one acceptance outcome."""

    def record(number, ok, detail=""):
        _ACCEPTANCE[number] = (bool(ok), detail)
        status = "PASS" if ok else "FAIL"
        print(f"[acceptance {number:2d}] {status} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

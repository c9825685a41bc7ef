"""
Wind-turbine blade stand-in model
=================================

Builds the 7-state stand-in used by ``drlmi bench-turbine`` and writes it
to ``src/drlmi/data/turbine_standin.json``.

The stand-in is NOT the original benchmark model.  Only the structure is
shared: state ``(omega, h, hdot, phi, phidot, beta, betadot)``, axial and
vertical wind as disturbances, pitch-rate command as input, performance
outputs ``(omega, h, phi, u)``, measurements ``(omega, h, phi)`` and a
sampling time of 0.05 s.  The coefficients below are plausible round numbers
chosen by hand.  Use ``--plant`` on the CLI to run the benchmark with the
original matrices.

Run from the repository root::

    python3 demos/make_turbine_standin.py
"""

import json
import pathlib
import sys

import numpy as np
from scipy.linalg import expm

from drlmi.ambiguity import AmbiguitySpec
from drlmi.io import ProblemFile, write_problem
from drlmi.model import PlantRealization

DT = 0.05

# continuous-time coefficients
params = dict(
    d=0.2,      # rotor speed damping (1/s)
    kv=1.0,     # axial wind -> rotor acceleration
    kb=2.0,     # pitch -> rotor deceleration
    wh=2.0,     # flapwise natural frequency (rad/s)
    zh=0.1,     # flapwise damping ratio
    f1=0.5,     # axial wind -> flapwise force
    f2=0.3,     # vertical wind -> flapwise force
    f3=1.0,     # pitch -> flapwise force
    wp=8.0,     # torsional natural frequency (rad/s)
    zp=0.05,    # torsional damping ratio
    g1=0.002,   # axial wind -> torsional moment
    g2=0.004,   # vertical wind -> torsional moment
    g3=0.01,    # pitch -> torsional moment
    tau=0.2,    # pitch-rate actuator time constant (s)
    leak=0.5,   # pitch servo stiffness
)


def continuous(p):
    Ac = np.zeros((7, 7))
    Bw = np.zeros((7, 2))
    Bu = np.zeros((7, 1))
    # rotor speed
    Ac[0, 0] = -p["d"]
    Ac[0, 5] = -p["kb"]
    Bw[0, 0] = p["kv"]
    # flapwise displacement
    Ac[1, 2] = 1.0
    Ac[2, 1] = -p["wh"] ** 2
    Ac[2, 2] = -2 * p["zh"] * p["wh"]
    Ac[2, 5] = -p["f3"]
    Bw[2] = [p["f1"], p["f2"]]
    # torsion
    Ac[3, 4] = 1.0
    Ac[4, 3] = -p["wp"] ** 2
    Ac[4, 4] = -2 * p["zp"] * p["wp"]
    Ac[4, 5] = p["g3"]
    Bw[4] = [p["g1"], p["g2"]]
    # pitch angle driven through a first-order rate actuator
    Ac[5, 6] = 1.0
    Ac[6, 5] = -p["leak"]
    Ac[6, 6] = -1.0 / p["tau"]
    Bu[6, 0] = 1.0 / p["tau"]
    return Ac, Bw, Bu


def discretize(Ac, Bw, Bu, dt):
    # zero-order hold on both inputs via the augmented exponential
    n, nw = Bw.shape
    M = np.zeros((n + nw + 1, n + nw + 1))
    M[:n, :n] = Ac
    M[:n, n : n + nw] = Bw
    M[:n, n + nw :] = Bu
    E = expm(M * dt)
    return E[:n, :n], E[:n, n : n + nw], E[:n, n + nw :]


A, B_w, B_u = discretize(*continuous(params), DT)
print("discrete pole moduli:", np.round(np.sort(np.abs(np.linalg.eigvals(A))), 4))

C_z = np.zeros((4, 7))
C_z[0, 0] = C_z[1, 1] = C_z[2, 3] = 1.0
D_zu = np.zeros((4, 1))
D_zu[3, 0] = 1.0
# measured outputs: the first three performance outputs, noise free
C_y = C_z[:3].copy()
D_yw = np.zeros((3, 2))

plant = PlantRealization(A, B_w, B_u, C_z, np.zeros((4, 2)), D_zu, C_y, D_yw)
problem = ProblemFile(
    plant,
    AmbiguitySpec("cor", 0.5, np.eye(2)),
    scaling=np.array([1.0, 5.0, 100.0, 1.0]),
    output_names=["rotor speed", "flapwise disp.", "torsional angle", "control input"],
    description=(
        "NON-AUTHORITATIVE stand-in for the linearized wind turbine blade benchmark; "
        "structure matches, coefficients are hand-picked, so benchmark tables are not reproduced"
    ),
    meta={
        "non_authoritative": True,
        "sampling_time": DT,
        "state_names": ["omega", "h", "hdot", "phi", "phidot", "beta", "betadot"],
        "continuous_parameters": params,
    },
)

out = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else pathlib.Path("src/drlmi/data/turbine_standin.json")
write_problem(out, problem)
print("wrote", out)
print(json.dumps(problem.dimensions))

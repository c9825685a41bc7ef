"""Generalized plant, controller and closed-loop data, plus nominal evaluation.

The plant is

    x(t+1) = A x + B_w w + B_u u
    z(t)   = C_z x + D_zw w + D_zu u
    y(t)   = C_y x + D_yw w

and the full-order controller

    x_c(t+1) = A_c x_c + B_c y
    u(t)     = C_c x_c + D_c y.
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidInput, UnstableSystem
from .matops import as_matrix, as_sym, solve_discrete_lyapunov, spectral_radius


def _check_shapes(obj, expected):
    for name, shape in expected.items():
        got = getattr(obj, name).shape
        if got != shape:
            raise InvalidInput(f"{name} has shape {got}, expected {shape}")


@dataclass(frozen=True, eq=False)
class PlantRealization:
    A: np.ndarray
    B_w: np.ndarray
    B_u: np.ndarray
    C_z: np.ndarray
    D_zw: np.ndarray
    D_zu: np.ndarray
    C_y: np.ndarray
    D_yw: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, as_matrix(getattr(self, f.name), f.name))
        nx, nw, nu = self.n_x, self.B_w.shape[1], self.B_u.shape[1]
        nz, ny = self.C_z.shape[0], self.C_y.shape[0]
        if nx < 1 or nw < 1:
            raise InvalidInput("plant needs n_x >= 1 and n_w >= 1")
        _check_shapes(
            self,
            {
                "A": (nx, nx),
                "B_w": (nx, nw),
                "B_u": (nx, nu),
                "C_z": (nz, nx),
                "D_zw": (nz, nw),
                "D_zu": (nz, nu),
                "C_y": (ny, nx),
                "D_yw": (ny, nw),
            },
        )

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_w(self):
        return self.B_w.shape[1]

    @property
    def n_u(self):
        return self.B_u.shape[1]

    @property
    def n_z(self):
        return self.C_z.shape[0]

    @property
    def n_y(self):
        return self.C_y.shape[0]

    @classmethod
    def from_dict(cls, d):
        return cls(**{f.name: d[f.name] for f in fields(cls)})

    def to_dict(self):
        return {f.name: getattr(self, f.name).tolist() for f in fields(self)}


@dataclass(frozen=True, eq=False)
class Controller:
    A_c: np.ndarray
    B_c: np.ndarray
    C_c: np.ndarray
    D_c: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, as_matrix(getattr(self, f.name), f.name))
        nk, ny, nu = self.A_c.shape[0], self.B_c.shape[1], self.C_c.shape[0]
        _check_shapes(
            self, {"A_c": (nk, nk), "B_c": (nk, ny), "C_c": (nu, nk), "D_c": (nu, ny)}
        )

    @property
    def order(self):
        return self.A_c.shape[0]

    @classmethod
    def zeros(cls, plant):
        n, ny, nu = plant.n_x, plant.n_y, plant.n_u
        return cls(np.zeros((n, n)), np.zeros((n, ny)), np.zeros((nu, n)), np.zeros((nu, ny)))

    @classmethod
    def static(cls, plant, D_c):
        """Static output feedback ``u = D_c y`` embedded as a full-order controller."""
        c = cls.zeros(plant)
        return cls(c.A_c, c.B_c, c.C_c, D_c)

    @classmethod
    def from_dict(cls, d):
        return cls(**{f.name: d[f.name] for f in fields(cls)})

    def to_dict(self):
        return {f.name: getattr(self, f.name).tolist() for f in fields(self)}


@dataclass(frozen=True, eq=False)
class ClosedLoop:
    """Closed-loop realization ``chi+ = calA chi + calB w``, ``z = calC chi + calD w``."""

    calA: np.ndarray
    calB: np.ndarray
    calC: np.ndarray
    calD: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, as_matrix(getattr(self, f.name), f.name))
        n, nw, nz = self.calA.shape[0], self.calB.shape[1], self.calC.shape[0]
        _check_shapes(
            self, {"calA": (n, n), "calB": (n, nw), "calC": (nz, n), "calD": (nz, nw)}
        )

    @property
    def n_chi(self):
        return self.calA.shape[0]

    @property
    def n_w(self):
        return self.calB.shape[1]

    @property
    def n_z(self):
        return self.calC.shape[0]

    @property
    def spectral_radius(self):
        return spectral_radius(self.calA)

    def is_stable(self):
        return self.spectral_radius < 1.0

    def require_stable(self):
        rho = self.spectral_radius
        if rho >= 1.0:
            raise UnstableSystem(f"closed loop has spectral radius {rho:.6g} >= 1")

    def select_outputs(self, rows):
        """Closed loop restricted to the performance outputs ``rows``."""
        rows = np.atleast_1d(np.asarray(rows, dtype=int))
        if rows.size == 0 or rows.min() < 0 or rows.max() >= self.n_z:
            raise InvalidInput(f"output selection {rows.tolist()} out of range 0..{self.n_z - 1}")
        return ClosedLoop(self.calA, self.calB, self.calC[rows], self.calD[rows])

    def with_input_map(self, Delta):
        """Closed loop driven through ``w = Delta w_hat``."""
        Delta = as_matrix(Delta, "Delta")
        return ClosedLoop(self.calA, self.calB @ Delta, self.calC, self.calD @ Delta)

    @classmethod
    def scalar(cls, a, b, c, d):
        return cls([[a]], [[b]], [[c]], [[d]])


def close_loop(plant, ctrl):
    """Interconnect a plant and a controller (``D_yu = 0``)."""
    P, K = plant, ctrl
    if K.order != P.n_x:
        raise InvalidInput(f"controller order {K.order} differs from plant order {P.n_x}")
    if K.B_c.shape[1] != P.n_y or K.C_c.shape[0] != P.n_u:
        raise InvalidInput(
            f"controller maps {K.B_c.shape[1]} measurements to {K.C_c.shape[0]} inputs, "
            f"plant has n_y={P.n_y}, n_u={P.n_u}"
        )
    BuDc = P.B_u @ K.D_c
    DzuDc = P.D_zu @ K.D_c
    calA = np.block([[P.A + BuDc @ P.C_y, P.B_u @ K.C_c], [K.B_c @ P.C_y, K.A_c]])
    calB = np.vstack([P.B_w + BuDc @ P.D_yw, K.B_c @ P.D_yw])
    calC = np.hstack([P.C_z + DzuDc @ P.C_y, P.D_zu @ K.C_c])
    calD = P.D_zw + DzuDc @ P.D_yw
    return ClosedLoop(calA, calB, calC, calD)


def observability_gramian(cl):
    """``P`` solving ``calA^T P calA - P + calC^T calC = 0``."""
    cl.require_stable()
    return solve_discrete_lyapunov(cl.calA.T, cl.calC.T @ cl.calC)


def weighted_h2_norm_sq(cl, Sigma_nom):
    """Squared ``Sigma_nom``-weighted H2 norm ``tr((B'PB + D'D) Sigma_nom)``."""
    Sigma_nom = as_sym(Sigma_nom, "Sigma_nom")
    if Sigma_nom.shape != (cl.n_w, cl.n_w):
        raise InvalidInput(f"Sigma_nom has shape {Sigma_nom.shape}, expected {(cl.n_w, cl.n_w)}")
    P = observability_gramian(cl)
    M = cl.calB.T @ P @ cl.calB + cl.calD.T @ cl.calD
    return float(np.trace(M @ Sigma_nom))


@dataclass
class SimulationResult:
    states: np.ndarray  # (T+1, n_chi)
    outputs: np.ndarray  # (T, n_z)
    cost: float


def simulate(cl, w, chi0=None):
    """Run the closed loop on the disturbance sequence ``w`` of shape ``(T, n_w)``.

    Returns the state trajectory (including the final state), the outputs and
    the time-averaged cost ``(1/T) sum ||z(t)||^2``.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim == 1 and cl.n_w == 1:
        w = w[:, None]
    if w.ndim != 2 or w.shape[1] != cl.n_w:
        raise InvalidInput(f"disturbance must have shape (T, {cl.n_w}), got {w.shape}")
    T = w.shape[0]
    if T < 1:
        raise InvalidInput("horizon must be at least 1")
    chi = np.zeros(cl.n_chi) if chi0 is None else np.asarray(chi0, dtype=float).reshape(-1)
    if chi.shape != (cl.n_chi,):
        raise InvalidInput(f"chi0 must have length {cl.n_chi}")
    states = np.empty((T + 1, cl.n_chi))
    states[0] = chi
    A, B = cl.calA, cl.calB
    for t in range(T):
        states[t + 1] = A @ states[t] + B @ w[t]
    z = states[:-1] @ cl.calC.T + w @ cl.calD.T
    cost = float(np.sum(z * z) / T)
    return SimulationResult(states, z, cost)


def default_frequency_grid(n=400):
    return np.logspace(-3, np.log10(np.pi), n)


def frequency_response_max_sv(cl, channel=None, grid=None):
    """Largest singular value of ``C_i (e^{j theta} I - A)^{-1} B + D_i`` on a grid.

    ``channel`` selects output rows (all rows when ``None``).  Returns an
    array of shape ``(len(grid), 2)`` with columns ``theta`` and ``sigma_max``.
    """
    cl.require_stable()
    sub = cl if channel is None else cl.select_outputs(channel)
    grid = default_frequency_grid() if grid is None else np.asarray(grid, dtype=float).ravel()
    if grid.size == 0 or np.any(grid < 0.0) or np.any(grid > np.pi):
        raise InvalidInput("frequency grid values must lie in [0, pi]")
    n = sub.n_chi
    out = np.empty((grid.size, 2))
    eye = np.eye(n)
    for k, th in enumerate(grid):
        G = sub.calC @ np.linalg.solve(np.exp(1j * th) * eye - sub.calA, sub.calB) + sub.calD
        out[k] = th, np.linalg.svd(G, compute_uv=False)[0]
    return out

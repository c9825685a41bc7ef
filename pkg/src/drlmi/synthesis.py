"""Full-order output-feedback synthesis by linearising change of variables.

With the closed-loop Lyapunov matrix partitioned as ``P = [[X, U], [U', *]]``
and its inverse as ``[[Y, V], [V', *]]``, the congruence by
``T = [[Y, I], [V', 0]]`` turns every Schur-form analysis LMI into an LMI in
``(X, Y, K, L, M, N)``::

    P_b = [[Y, I], [I, X]]
    A_b = [[A Y + B_u M,  A + B_u N C_y], [K,  X A + L C_y]]
    B_b = [[B_w + B_u N D_yw], [X B_w + L D_yw]]
    C_b = [C_z Y + D_zu M,  C_z + D_zu N C_y]
    D_b = D_zw + D_zu N D_yw

The controller is recovered afterwards from a factorisation
``U V' = I - X Y``.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_discrete_are

from .ambiguity import AmbiguitySpec, Kind
from .errors import IllConditioned, InvalidInput, NotPd, SolverFailure, Infeasible
from .matops import as_matrix, as_sym
from .model import Controller, PlantRealization, close_loop
from .sdpcore import LmiProblem, SolverOptions, Status, bmat

# strict margin of the synthesis LMIs and the separate one kept on P_b
SYNTH_EPS = 1e-7
PBOLD_EPS = 1e-6
ROUGH_TOL = 1e-6
# the reconditioning pass may give up this much cost for a better P_b
RECOND_SLACK = 1e-6
RECOND_ALPHA = 2.0
PBOLD_MARGIN = 1e-9
COND_LIMIT = 1e12
COND_PLAIN = 1e6


@dataclass
class SynthesisVariables:
    X: np.ndarray
    Y: np.ndarray
    K: np.ndarray
    L: np.ndarray
    M: np.ndarray
    N: np.ndarray
    Q: np.ndarray = None
    lam: float = 0.0

    @classmethod
    def zeros(cls, plant):
        n, nu, ny = plant.n_x, plant.n_u, plant.n_y
        return cls(
            np.eye(n), np.eye(n), np.zeros((n, n)), np.zeros((n, ny)),
            np.zeros((nu, n)), np.zeros((nu, ny)), np.zeros((plant.n_w, plant.n_w)), 0.0,
        )

    def check(self, plant):
        n, nu, ny = plant.n_x, plant.n_u, plant.n_y
        want = {"X": (n, n), "Y": (n, n), "K": (n, n), "L": (n, ny), "M": (nu, n), "N": (nu, ny)}
        for name, shape in want.items():
            got = np.shape(getattr(self, name))
            if got != shape:
                raise InvalidInput(f"{name} has shape {got}, expected {shape}")


@dataclass
class TransformedBlocks:
    Abold: object
    Bbold: object
    Cbold: object
    Dbold: object
    Pbold: object


def build_transformed_blocks(plant, v):
    """Evaluate the transformed blocks.

    ``v`` may hold arrays (numeric evaluation) or problem variables (affine
    expressions); the formulas are the same.
    """
    p = plant
    numeric = all(isinstance(getattr(v, f), np.ndarray) for f in ("X", "Y", "K", "L", "M", "N"))
    if numeric:
        v.check(p)
    I = np.eye(p.n_x)
    A, Bw, Bu, Cz, Dzw, Dzu, Cy, Dyw = p.A, p.B_w, p.B_u, p.C_z, p.D_zw, p.D_zu, p.C_y, p.D_yw
    X, Y, K, L, M, N = v.X, v.Y, v.K, v.L, v.M, v.N
    cat = np.block if numeric else bmat
    Ab = cat([[A @ Y + Bu @ M, A + Bu @ N @ Cy], [K, X @ A + L @ Cy]])
    Bb = cat([[Bw + Bu @ N @ Dyw], [X @ Bw + L @ Dyw]])
    Cb = cat([[Cz @ Y + Dzu @ M, Cz + Dzu @ N @ Cy]])
    Db = Dzw + Dzu @ N @ Dyw
    Pb = cat([[Y, I], [I, X]])
    return TransformedBlocks(Ab, Bb, Cb, Db, Pb)


@dataclass
class SynthesisResult:
    controller: Controller
    cost: float
    variables: SynthesisVariables
    kind: str
    solution: object = field(default=None, repr=False)

    def closed_loop(self, plant):
        return close_loop(plant, self.controller)


def _synth_opts(opts):
    o = SolverOptions.coerce(opts)
    if opts is None or (isinstance(opts, dict) and "eps_strict" not in opts):
        o = replace(o, eps_strict=SYNTH_EPS)
    return o


def _declare(prob, plant):
    n, nu, ny, nw = plant.n_x, plant.n_u, plant.n_y, plant.n_w
    v = SynthesisVariables(
        prob.symmetric(n, "X"), prob.symmetric(n, "Y"), prob.matrix(n, n, "K"),
        prob.matrix(n, ny, "L"), prob.matrix(nu, n, "M"), prob.matrix(nu, ny, "N"),
        prob.symmetric(nw, "Q"), None,
    )
    return v


def _input_rows(lam, Q, nw):
    I = np.eye(nw)
    if lam is None:
        return [[-1.0 * Q]]
    return [[-1.0 * (lam * I), lam * I], [lam * I, -1.0 * Q - lam * I]]


def _input_lmi(lam, Q, Bb, Db, Pb, nw, nz):
    """``[[input rows, B_b', D_b'], [B_b, -P_b, 0], [D_b, 0, -I]]`` (w_hat rows padded)."""
    mid = _input_rows(lam, Q, nw)
    k = len(mid)
    rows = []
    for i in range(k):
        rows.append(mid[i] + [Bb.T if i == 0 else None, Db.T if i == 0 else None])
    rows.append([Bb] + [None] * (k - 1) + [-1.0 * Pb, None])
    rows.append([Db] + [None] * (k - 1) + [None, -np.eye(nz)])
    return bmat(rows)


def build_synthesis_problem(plant, amb, kind):
    """LMI program for ``kind`` in ``{"cor", "ind", "h2"}``.

    ``h2`` ignores ``amb.gamma`` and minimises ``tr(Q Sigma_nom)``.  For
    ``gamma = 0`` the transport multiplier drops out (``w = w_hat``), which
    makes the independent program coincide with the H2 program.
    """
    if not isinstance(plant, PlantRealization):
        raise InvalidInput("expected a PlantRealization")
    if amb.n_w != plant.n_w:
        raise InvalidInput(f"Sigma_nom is {amb.n_w}x{amb.n_w}, plant has n_w={plant.n_w}")
    nw, nz, n = plant.n_w, plant.n_z, plant.n_x
    prob = LmiProblem(f"synthesis-{kind}")
    v = _declare(prob, plant)
    Q = v.Q
    lam = None
    if kind != "h2" and amb.gamma > 0.0:
        lam = prob.scalar("lambda")
        prob.add_nonneg(lam, "lambda >= 0")
    b = build_transformed_blocks(plant, v)
    Pb, Ab, Bb, Cb, Db = b.Pbold, b.Abold, b.Bbold, b.Cbold, b.Dbold
    prob.add_psd_strict(Pb, "P_b > 0", eps=PBOLD_EPS)
    if kind == "cor":
        mid = _input_rows(lam, Q, nw)
        k = len(mid)
        rows = [[-1.0 * Pb] + [None] * k + [Ab.T, Cb.T]]
        for i in range(k):
            rows.append([None] + mid[i] + [Bb.T if i == 0 else None, Db.T if i == 0 else None])
        rows.append([Ab, Bb] + [None] * (k - 1) + [-1.0 * Pb, None])
        rows.append([Cb, Db] + [None] * (k - 1) + [None, -np.eye(nz)])
        prob.add_nsd_strict(bmat(rows), "dissipation")
    elif kind in ("ind", "h2"):
        prob.add_nsd_strict(
            bmat([[-1.0 * Pb, Ab.T, Cb.T], [Ab, -1.0 * Pb, None], [Cb, None, -np.eye(nz)]]),
            "lyapunov",
        )
        prob.add_nsd_strict(_input_lmi(lam, Q, Bb, Db, Pb, nw, nz), "input")
    else:
        raise InvalidInput(f"unknown synthesis kind {kind!r}")
    obj = (Q @ amb.Sigma_nom).trace()
    if lam is not None:
        obj = obj + amb.gamma**2 * lam
    prob.minimize(obj)
    prob.handles = {"vars": v, "lambda": lam, "Pbold": Pb, "objective": obj}
    return prob


def _recondition(plant, amb_s, kind, sol1, opts):
    """Second solve: keep the objective within ``RECOND_SLACK`` of the optimum
    and push ``P_b`` away from singularity, so ``I - X Y`` is well conditioned.
    """
    prob = build_synthesis_problem(plant, amb_s, kind)
    h = prob.handles
    Pb1 = np.block([[sol1["Y"], np.eye(plant.n_x)], [np.eye(plant.n_x), sol1["X"]]])
    alpha = RECOND_ALPHA * np.linalg.eigvalsh(Pb1)[-1]
    J = sol1["objective"]
    t = prob.scalar("t")
    d = 2 * plant.n_x
    prob.add_nonneg(J * (1.0 + RECOND_SLACK) - h["objective"], "objective slack")
    prob.add_psd(h["Pbold"] - t * np.eye(d), "P_b >= t I")
    prob.add_psd(alpha * np.eye(d) - h["Pbold"], "P_b <= alpha I")
    prob.maximize(t)
    return prob


def _values(prob, sol, kind):
    h = prob.handles
    v = h["vars"]
    if kind == "h2":
        lam = 0.0
    else:
        lam = np.inf if h["lambda"] is None else max(sol[h["lambda"]], 0.0)
    return SynthesisVariables(sol[v.X], sol[v.Y], sol[v.K], sol[v.L], sol[v.M], sol[v.N], sol[v.Q], lam)


def _scaled_plant(p, T, s2):
    """Plant in coordinates ``x = T x_s`` with outputs scaled by ``sqrt(s2)``."""
    r = np.sqrt(s2)
    Ti = np.linalg.inv(T)
    return PlantRealization(
        Ti @ p.A @ T, Ti @ p.B_w, Ti @ p.B_u, r * p.C_z @ T, r * p.D_zw, r * p.D_zu, p.C_y @ T, p.D_yw
    )


def _unscale(v, T, s2):
    """Map variables of the scaled plant back to the original coordinates."""
    Ti = np.linalg.inv(T)
    return SynthesisVariables(
        X=Ti.T @ v.X @ Ti / s2,
        Y=s2 * (T @ v.Y @ T.T),
        K=Ti.T @ v.K @ T.T,
        L=Ti.T @ v.L / s2,
        M=s2 * (v.M @ T.T),
        N=v.N.copy(),
        Q=v.Q / s2,
        lam=v.lam / s2,
    )


def _balance(X, Y):
    """``T`` with ``T' X T = T^-1 Y T^-T`` diagonal (``X, Y > 0``)."""
    R = np.linalg.cholesky(0.5 * (Y + Y.T))
    U, sv, _ = np.linalg.svd(R.T @ X @ R)
    return R @ U / sv**0.25


PRIOR_REG = 1e-6


def _prior_scaling(plant, Sigma):
    """Scales from the LQG Riccati solutions, before any SDP is solved.

    The control and filter DAREs (regularised so that they always have a
    stabilising solution) give stand-ins for ``X`` and ``Y``; balancing them
    and normalising by the LQG-like cost puts the first SDP in reasonable
    coordinates.  Returns ``(I, 1)`` when the Riccati solves fail.
    """
    n = plant.n_x
    try:
        Wz = plant.C_z.T @ plant.C_z
        Ru = plant.D_zu.T @ plant.D_zu
        Wx = plant.B_w @ Sigma @ plant.B_w.T
        Vy = plant.D_yw @ Sigma @ plant.D_yw.T
        rx = PRIOR_REG * max(np.abs(Wz).max(), np.abs(Wx).max(), 1e-300)
        X = solve_discrete_are(plant.A, plant.B_u, Wz + rx * np.eye(n), Ru + rx * np.eye(plant.n_u))
        Y = solve_discrete_are(plant.A.T, plant.C_y.T, Wx + rx * np.eye(n), Vy + rx * np.eye(plant.n_y))
        J = float(np.trace(X @ Wx)) + float(np.trace(plant.D_zw @ Sigma @ plant.D_zw.T))
        if not (np.isfinite(J) and J > 0.0):
            return np.eye(n), 1.0
        s2 = 1.0 / J
        T = _balance(s2 * X, Y / s2)
    except (np.linalg.LinAlgError, ValueError):
        return np.eye(n), 1.0
    if not np.all(np.isfinite(T)) or np.linalg.cond(T) > 1e12:
        return np.eye(n), 1.0
    return T, s2


def _stage(plant, amb_s, kind, opts):
    prob = build_synthesis_problem(plant, amb_s, kind)
    sol = prob.solve(opts)
    if sol.status is Status.INFEASIBLE:
        raise Infeasible(f"{kind} synthesis LMIs are infeasible", sol)
    if sol.status is not Status.OPTIMAL:
        raise SolverFailure(f"{kind} synthesis: solver status {sol.status.value}", sol)
    return prob, sol, _values(prob, sol, kind)


PBH_TOL = 1e-9


def _check_stabilizable(plant):
    """PBH test on the modes with ``|lambda| >= 1``; raises :class:`Infeasible`.

    Without stabilizability of ``(A, B_u)`` and detectability of
    ``(A, C_y)`` no controller makes the loop stable, so the LMIs have no
    solution; failing here avoids asking the solver to discover it.
    """
    A = plant.A
    n = plant.n_x
    scale = max(1.0, np.abs(A).max())
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0:
            continue
        M = A - lam * np.eye(n)
        for name, blk in (("stabilizable", np.hstack([M, plant.B_u])), ("detectable", np.vstack([M, plant.C_y]))):
            sv = np.linalg.svd(blk, compute_uv=False)
            if sv.size < n or sv[n - 1] <= PBH_TOL * scale:
                raise Infeasible(f"plant is not {name}: mode {lam:.6g} cannot be moved")


def _solve(plant, amb, kind, opts):
    """Three passes.  A first solve, in coordinates taken from the LQG
    Riccati equations, fixes the output scale and a balancing state
    transform; the rescaled problem gives the optimum; a last pass conditions
    ``P_b`` at (almost) that optimum.  The controller does not
    depend on the plant coordinates or the output scale.
    """
    _check_stabilizable(plant)
    # the optimum is homogeneous in (Sigma_nom, gamma**2): normalise to unit trace
    c = float(np.trace(amb.Sigma_nom))
    c = c if c > 0.0 else 1.0
    amb_s = amb.replace(gamma=amb.gamma / np.sqrt(c), Sigma_nom=amb.Sigma_nom / c)
    opts = _synth_opts(opts)
    # the first pass only has to get the scales right
    rough = replace(opts, tol=max(opts.tol, ROUGH_TOL))
    T, s2 = _prior_scaling(plant, amb_s.Sigma_nom)
    _, sol, vals = _stage(_scaled_plant(plant, T, s2), amb_s, kind, rough)
    if sol.objective > 1e-12:
        s2_1 = 1.0 / sol.objective
        try:
            T = T @ _balance(s2_1 * vals.X, vals.Y / s2_1)
            s2 = s2 * s2_1
        except np.linalg.LinAlgError:
            pass
    ps = _scaled_plant(plant, T, s2)
    _, sol, vals = _stage(ps, amb_s, kind, opts)
    cost = c * sol.objective / s2
    prob2 = _recondition(ps, amb_s, kind, {"X": vals.X, "Y": vals.Y, "objective": sol.objective}, opts)
    sol2 = prob2.solve(opts)
    if sol2.status is Status.OPTIMAL:
        sol, vals = sol2, _values(prob2, sol2, kind)
    ctrl = recover_controller(ps, vals)
    return SynthesisResult(ctrl, cost, _unscale(vals, T, s2), kind, sol)


def synthesize_correlated(plant, amb, opts=None):
    """Controller minimising the worst case over the correlated set."""
    if amb.kind is not Kind.CORRELATED:
        raise InvalidInput("synthesize_correlated needs kind=cor")
    return _solve(plant, amb, "cor", opts)


def synthesize_independent(plant, amb, opts=None):
    """Controller minimising the worst case over the independent set."""
    if amb.kind is not Kind.INDEPENDENT:
        raise InvalidInput("synthesize_independent needs kind=ind")
    return _solve(plant, amb, "ind", opts)


def synthesize(plant, amb, opts=None):
    if amb.kind is Kind.CORRELATED:
        return synthesize_correlated(plant, amb, opts)
    return synthesize_independent(plant, amb, opts)


def synthesize_h2(plant, Sigma_nom, opts=None):
    """Nominal weighted-H2 optimal controller."""
    amb = AmbiguitySpec(Kind.INDEPENDENT, 0.0, Sigma_nom)
    return _solve(plant, amb, "h2", opts)


def _factor(I_XY):
    """``U, Vt`` with ``U @ Vt == I - X Y``."""
    n = I_XY.shape[0]
    sv = np.linalg.svd(I_XY, compute_uv=False)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if cond > COND_LIMIT:
        raise IllConditioned(f"I - XY has condition number {cond:.3e}")
    if cond <= COND_PLAIN:
        return np.eye(n), I_XY
    W, s, Zt = np.linalg.svd(I_XY)
    r = np.sqrt(s)
    return W * r, r[:, None] * Zt


def recover_controller(plant, v):
    """Controller matrices from the transformed variables.

    Uses ``D_c = N``, ``C_c = (M - D_c C_y Y) V^{-T}``,
    ``B_c = U^{-1} (L - X B_u D_c)`` and
    ``A_c = U^{-1} (K - X (A + B_u D_c C_y) Y - U B_c C_y Y - X B_u C_c V') V^{-T}``.
    """
    p = plant
    v.check(p)
    X, Y = as_sym(v.X, "X"), as_sym(v.Y, "Y")
    n = p.n_x
    Pb = np.block([[Y, np.eye(n)], [np.eye(n), X]])
    lmin = np.linalg.eigvalsh(Pb)[0]
    if lmin < PBOLD_MARGIN:
        raise NotPd(f"[[Y, I], [I, X]] has smallest eigenvalue {lmin:.3e}")
    K, L, M, N = (as_matrix(getattr(v, f), f) for f in ("K", "L", "M", "N"))
    U, Vt = _factor(np.eye(n) - X @ Y)
    Dc = N
    # right-division by V' is a solve against Vt from the right
    Cc = np.linalg.solve(Vt.T, (M - Dc @ p.C_y @ Y).T).T
    Bc = np.linalg.solve(U, L - X @ p.B_u @ Dc)
    inner = K - X @ (p.A + p.B_u @ Dc @ p.C_y) @ Y - U @ Bc @ p.C_y @ Y - X @ p.B_u @ Cc @ Vt
    Ac = np.linalg.solve(U, np.linalg.solve(Vt.T, inner.T).T)
    return Controller(Ac, Bc, Cc, Dc)

"""Worst-case performance analysis of a fixed closed loop.

Two routes compute the same number:

* the *moment relaxation*, a max-SDP over the stationary joint second moment
  of ``(chi, w, w_hat)`` where ``w_hat ~ N(0, Sigma_nom)`` is the coupled
  nominal disturbance, and
* the *certificate* LMIs, min-SDPs over a Lyapunov-type matrix ``P``, a
  matrix ``Q`` and a multiplier ``lambda`` for the transport budget.

An optimal moment matrix also yields an explicit worst-case disturbance
(a linear Gaussian policy) and, for independent disturbances, the transport
map ``Delta`` of the equivalent robust-H2 problem.
"""

import concurrent.futures
import math
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import AmbiguitySpec, Kind, optimal_transport_plan
from .errors import Infeasible, InvalidInput, NotPsd, SolverFailure
from .matops import as_matrix, pinv, psd_factor, solve_discrete_lyapunov
from .model import ClosedLoop, simulate, weighted_h2_norm_sq
from .sdpcore import LmiProblem, Status, bmat, block_diag

MOMENT_PSD_TOL = 1e-8
SCHUR_RESIDUAL_TOL = 1e-6


def _check(cl, amb, kind=None):
    if not isinstance(cl, ClosedLoop):
        raise InvalidInput("expected a ClosedLoop")
    if amb.n_w != cl.n_w:
        raise InvalidInput(f"Sigma_nom is {amb.n_w}x{amb.n_w} but the loop has n_w={cl.n_w}")
    if kind is not None and amb.kind is not kind:
        raise InvalidInput(f"this analysis needs kind={kind.value}, got {amb.kind.value}")
    cl.require_stable()


def _expect_optimal(sol, what):
    if sol.status is not Status.OPTIMAL:
        raise SolverFailure(f"{what}: solver status {sol.status.value}", sol)
    return sol


# ---------------------------------------------------------------------------
# moment matrices


@dataclass
class MomentMatrix:
    """Stationary second moment of ``(chi, [x_psi,] w, w_hat)``.

    ``n_psi`` is nonzero only for the autocorrelation-extended problem.
    """

    full: np.ndarray
    n_chi: int
    n_w: int
    kind: Kind
    n_psi: int = 0

    def __post_init__(self):
        self.full = 0.5 * (np.asarray(self.full, float) + np.asarray(self.full, float).T)
        n = self.n_chi + self.n_psi + 2 * self.n_w
        if self.full.shape != (n, n):
            raise InvalidInput(f"moment matrix has shape {self.full.shape}, expected {(n, n)}")

    @property
    def i_chi(self):
        return slice(0, self.n_chi)

    @property
    def i_psi(self):
        return slice(self.n_chi, self.n_chi + self.n_psi)

    @property
    def i_w(self):
        s = self.n_chi + self.n_psi
        return slice(s, s + self.n_w)

    @property
    def i_what(self):
        s = self.n_chi + self.n_psi + self.n_w
        return slice(s, s + self.n_w)

    def block(self, a, b):
        idx = {"chi": self.i_chi, "psi": self.i_psi, "w": self.i_w, "what": self.i_what}
        return self.full[idx[a], idx[b]]

    @property
    def chichi(self):
        return self.block("chi", "chi")

    @property
    def chiw(self):
        return self.block("chi", "w")

    @property
    def chiwhat(self):
        return self.block("chi", "what")

    @property
    def ww(self):
        return self.block("w", "w")

    @property
    def wwhat(self):
        return self.block("w", "what")

    @property
    def whatwhat(self):
        return self.block("what", "what")

    def check(self, tol=MOMENT_PSD_TOL):
        """Raise ``NotPsd`` when the invariants fail beyond ``tol``."""
        scale = max(1.0, np.abs(self.full).max())
        if np.linalg.eigvalsh(self.full)[0] < -tol * scale:
            raise NotPsd("moment matrix is not positive semidefinite")
        if self.kind is Kind.INDEPENDENT:
            off = max(np.abs(self.chiw).max(initial=0.0), np.abs(self.chiwhat).max(initial=0.0))
            if off > tol * scale:
                raise InvalidInput(f"independent moment matrix has chi-w coupling {off:.2e}")


def _selectors(n_chi, n_w, n_psi=0):
    n = n_chi + n_psi + 2 * n_w
    eye = np.eye(n)
    o = n_chi + n_psi
    return (
        eye[:n_chi],
        eye[n_chi : n_chi + n_psi],
        eye[o : o + n_w],
        eye[o + n_w : o + 2 * n_w],
    )


def build_moment_relaxation(cl, amb):
    """Max-SDP over the stationary moment matrix of ``(chi, w, w_hat)``.

    The returned problem has ``problem.handles["Sigma"]``.  For ``gamma = 0``
    the budget pins ``w = w_hat``; that problem has no strictly feasible
    point, so the variable is the moment of ``(chi, w)`` only and
    ``handles["lift"]`` maps it back to ``(chi, w, w_hat)``.
    """
    _check(cl, amb)
    n, nw = cl.n_chi, cl.n_w
    reduced = amb.gamma == 0.0
    m = nw if reduced else 2 * nw
    prob = LmiProblem(f"moment-{amb.kind.value}")
    S = prob.symmetric(n + m, "Sigma")
    eye = np.eye(n + m)
    E_chi, E_w = eye[:n], eye[n : n + nw]
    E_what = E_w if reduced else eye[n + nw :]
    AB = np.hstack([cl.calA, cl.calB, np.zeros((n, m - nw))])
    CD = np.hstack([cl.calC, cl.calD, np.zeros((cl.n_z, m - nw))])
    prob.maximize((CD @ S @ CD.T).trace())
    prob.add_eq(E_chi @ S @ E_chi.T, AB @ S @ AB.T, symmetric=True, name="stationarity")
    if not reduced:
        Ed = E_w - E_what
        prob.add_nonneg(amb.gamma**2 - (Ed @ S @ Ed.T).trace(), "transport budget")
    prob.add_eq(E_what @ S @ E_what.T, amb.Sigma_nom, symmetric=True, name="nominal")
    prob.add_psd(S, "Sigma psd")
    if amb.kind is Kind.INDEPENDENT:
        prob.add_eq(E_chi @ S @ E_w.T, 0.0, name="chi-w independence")
        if not reduced:
            prob.add_eq(E_chi @ S @ E_what.T, 0.0, name="chi-what independence")
    lift = np.vstack([E_chi, E_w, E_what]).T if reduced else np.eye(n + m)
    prob.handles = {"Sigma": S, "lift": lift}
    return prob


@dataclass
class MomentResult:
    value: float
    Sigma: MomentMatrix
    solution: object = field(repr=False)


# gramian regularisations tried in turn; the larger one is the safer default,
# the smaller one handles loops whose worst case excites weakly observable
# or weakly reachable directions
BALANCE_REGS = (1e-6, 1e-4, 1e-8)


def _regularise(W, reg):
    # relative to the diagonal, so a diagonal rescaling of the state (for
    # example a badly scaled controller realization) changes nothing
    d = np.diag(W).copy()
    top = d.max()
    d = np.maximum(d, reg * top)
    return W + reg * np.diag(d)


def _balancing(cl, Sigma, s2, reg=BALANCE_REGS[0], Wc=None):
    """State transform ``T`` making both regularised gramians equal and diagonal.

    ``Wc`` replaces the nominal reachability gramian when given.
    """
    n = cl.n_chi
    Wo = s2 * solve_discrete_lyapunov(cl.calA.T, cl.calC.T @ cl.calC)
    if Wc is None:
        Wc = solve_discrete_lyapunov(cl.calA, cl.calB @ Sigma @ cl.calB.T)
    if np.diag(Wo).max() <= 0.0 or np.diag(Wc).max() <= 0.0:
        return np.eye(n)
    R = np.linalg.cholesky(_regularise(Wc, reg))
    U, sv, _ = np.linalg.svd(R.T @ _regularise(Wo, reg) @ R)
    return R @ U / sv**0.25


@dataclass(frozen=True, eq=False)
class _Scaling:
    """Normalisation applied before every analysis solve.

    The optimum is homogeneous: scaling ``Sigma_nom`` and ``gamma**2`` by
    ``1/c`` and the outputs by ``sqrt(s2)`` scales it by ``s2/c``, and it
    does not depend on the state basis.  The state is changed to
    ``chi = T chi_s`` with ``T`` a balancing transform.  This keeps the
    strict-LMI margins, which scale with the constant terms, small relative
    to the optimum, and keeps the moment matrix well scaled.
    """

    c: float
    s2: float
    T: np.ndarray

    @classmethod
    def of(cls, cl, amb, reg=BALANCE_REGS[0], state_cov=None):
        c = float(np.trace(amb.Sigma_nom))
        c = c if c > 0 else 1.0
        s2 = 1.0
        for S in (amb.Sigma_nom / c, np.eye(cl.n_w) / cl.n_w):
            h = weighted_h2_norm_sq(cl, S)
            if h > 1e-14:
                s2 = 1.0 / h
                break
        Wc = None if state_cov is None else state_cov / c
        return cls(c, s2, _balancing(cl, amb.Sigma_nom / c, s2, reg, Wc))

    def apply(self, cl, amb):
        r = math.sqrt(self.s2)
        T = self.T
        cl_s = ClosedLoop(np.linalg.solve(T, cl.calA @ T), np.linalg.solve(T, cl.calB), r * cl.calC @ T, r * cl.calD)
        amb_s = amb.replace(gamma=amb.gamma / math.sqrt(self.c), Sigma_nom=amb.Sigma_nom / self.c)
        return cl_s, amb_s

    @property
    def cost(self):
        return self.c / self.s2

    def _state_map(self, dim):
        n = self.T.shape[0]
        E = np.eye(dim)
        E[:n, :n] = self.T
        return E

    def moment(self, full_s):
        E = self._state_map(full_s.shape[0])
        return self.c * (E @ full_s @ E.T)

    def multiplier(self, P_s):
        Einv = np.linalg.inv(self._state_map(P_s.shape[0]))
        P = Einv.T @ P_s @ Einv / self.s2
        return 0.5 * (P + P.T)


def _solve_scaled(cl, amb, build, what, opts, state_cov=None):
    """Build on the normalised problem and solve, re-balancing on trouble.

    ``build(cl_s, amb_s, scaling)`` returns the problem.
    """
    for reg in BALANCE_REGS:
        sc = _Scaling.of(cl, amb, reg, state_cov)
        prob = build(*sc.apply(cl, amb), sc)
        sol = prob.solve(opts)
        if sol.status is not Status.NUMERICAL_TROUBLE:
            break
    return sc, prob, _expect_optimal(sol, what)


def _certificate_moment(sol, n, nw, reduced):
    """Moment matrix of ``(chi, w, w_hat)`` read off the certificate multipliers.

    The certificate is the dual of the moment relaxation, so the dual
    matrix of its LMI(s) is a feasible, optimal moment matrix.
    """
    if len(sol.duals) == 1:
        Z = sol.duals[0][1]
    else:
        Z1, Z2 = sol.duals[0][1], sol.duals[1][1]
        Z = np.zeros((n + Z2.shape[0],) * 2)
        Z[:n, :n], Z[n:, n:] = Z1, Z2
    if reduced:
        L = np.zeros((n + nw, n + 2 * nw))
        L[:, : n + nw] = np.eye(n + nw)
        L[n:, n + nw :] = np.eye(nw)
        Z = L.T @ Z @ L
    return 0.5 * (Z + Z.T)


def _moment_of(sc, prob, sol):
    L = prob.handles["lift"]
    return sc.moment(L.T @ sol[prob.handles["Sigma"]] @ L)


def solve_moment_relaxation(cl, amb, opts=None, method="auto"):
    """Worst-case averaged cost and an optimal moment matrix.

    ``method="primal"`` solves the moment SDP itself.  ``"dual"`` solves the
    certificate SDP and takes the moment matrix from its multipliers.
    ``"auto"`` tries the primal first and falls back to the dual route when
    the solver runs into numerical trouble; this happens for correlated
    worst cases that drive the loop close to the stability boundary.  The
    SDP is solved on a normalised copy of the problem; ``solution`` refers to
    that copy.
    """
    _check(cl, amb)
    if method not in ("auto", "primal", "dual"):
        raise InvalidInput(f"unknown method {method!r}")
    if method != "dual":
        try:
            sc, prob, sol = _solve_scaled(
                cl, amb, lambda c, a, _: build_moment_relaxation(c, a), "moment relaxation", opts
            )
        except SolverFailure as exc:
            if method == "primal" or isinstance(exc, Infeasible):
                raise
        else:
            full = _moment_of(sc, prob, sol)
            # the nominal gramians can badly misjudge the worst-case state
            # covariance; one more solve balanced against it is much more
            # accurate in that case
            try:
                sc2, prob2, sol2 = _solve_scaled(
                    cl, amb, lambda c, a, _: build_moment_relaxation(c, a), "moment relaxation",
                    opts, state_cov=full[: cl.n_chi, : cl.n_chi],
                )
                sc, sol, full = sc2, sol2, _moment_of(sc2, prob2, sol2)
            except (SolverFailure, np.linalg.LinAlgError):
                pass
            return MomentResult(sc.cost * sol.objective, MomentMatrix(full, cl.n_chi, cl.n_w, amb.kind), sol)
    builder = build_correlated_certificate if amb.kind is Kind.CORRELATED else build_independent_certificate
    sc, prob, sol = _solve_scaled(cl, amb, lambda c, a, _: builder(c, a), "moment relaxation (dual route)", opts)
    full = sc.moment(_certificate_moment(sol, cl.n_chi, cl.n_w, amb.gamma == 0.0))
    if amb.kind is Kind.INDEPENDENT:
        n = cl.n_chi
        full[:n, n:] = 0.0
        full[n:, :n] = 0.0
    CD = np.hstack([cl.calC, cl.calD, np.zeros((cl.n_z, cl.n_w))])
    value = float(np.trace(CD @ full @ CD.T))
    return MomentResult(value, MomentMatrix(full, cl.n_chi, cl.n_w, amb.kind), sol)


def worst_case_output_variances(cl, amb, outputs=None, opts=None):
    """Per-output worst-case variances, one moment SDP per selected row."""
    rows = range(cl.n_z) if outputs is None else outputs
    return [solve_moment_relaxation(cl.select_outputs([i]), amb, opts).value for i in rows]


# ---------------------------------------------------------------------------
# certificate (dual) analyses


@dataclass
class AnalysisCertificate:
    P: np.ndarray
    Q: np.ndarray
    lam: float
    cost: float
    kind: Kind
    solution: object = field(default=None, repr=False)
    mu: np.ndarray = None

    @property
    def lambda_(self):
        return self.lam


def _certificate_vars(prob, cl, amb):
    P = prob.symmetric(cl.n_chi, "P")
    Q = prob.symmetric(cl.n_w, "Q")
    if amb.gamma == 0.0:
        # the budget forces w = w_hat; the multiplier would run off to
        # infinity, so the limit form without lambda is used instead
        lam = None
    else:
        lam = prob.scalar("lambda")
        prob.add_nonneg(lam, "lambda >= 0")
    prob.minimize(
        (Q @ amb.Sigma_nom).trace() + (0.0 if lam is None else amb.gamma**2 * lam)
    )
    prob.handles = {"lambda": lam, "P": P, "Q": Q}
    return lam, P, Q


def _input_block(lam, Q, nw, top=None):
    """Multiplier block on ``(w, w_hat)``; ``lam is None`` gives the gamma=0 limit on ``w``."""
    I = np.eye(nw)
    if lam is None:
        return -1.0 * Q if top is None else top - Q
    blk = bmat([[-1.0 * (lam * I), lam * I], [lam * I, -1.0 * Q - lam * I]])
    if top is not None:
        blk = blk + block_diag(top, np.zeros((nw, nw)))
    return blk


def build_correlated_certificate(cl, amb):
    """Min-SDP certifying the correlated worst case.

    The single strict LMI is the expanded outer-factor form::

        [A'PA - P + C'C   A'PB + C'D        0      ]
        [B'PA + D'C       B'PB + D'D - lI   lI     ]  < 0
        [0                lI                -lI - Q]

    For ``gamma = 0`` the ``w_hat`` row is eliminated (``w = w_hat``).
    """
    _check(cl, amb)
    prob = LmiProblem("certificate-cor")
    lam, P, Q = _certificate_vars(prob, cl, amb)
    n, nw = cl.n_chi, cl.n_w
    A, B, C, D = cl.calA, cl.calB, cl.calC, cl.calD
    m = 2 * nw if lam is not None else nw
    O1 = np.hstack([np.eye(n), np.zeros((n, m))])
    O2 = np.hstack([A, B, np.zeros((n, m - nw))])
    O3 = np.hstack([C, D, np.zeros((cl.n_z, m - nw))])
    Ed = np.hstack([np.zeros((m, n)), np.eye(m)])
    lmi = -1.0 * (O1.T @ P @ O1) + O2.T @ P @ O2 + O3.T @ O3 + Ed.T @ _input_block(lam, Q, nw) @ Ed
    prob.add_nsd_strict(lmi, "dissipation")
    return prob


def build_independent_certificate(cl, amb):
    """Min-SDP with a Lyapunov LMI and a separate input LMI (both strict)."""
    _check(cl, amb)
    prob = LmiProblem("certificate-ind")
    lam, P, Q = _certificate_vars(prob, cl, amb)
    A, B, C, D = cl.calA, cl.calB, cl.calC, cl.calD
    prob.add_nsd_strict(A.T @ P @ A - P + C.T @ C, "lyapunov")
    prob.add_nsd_strict(_input_block(lam, Q, cl.n_w, B.T @ P @ B + D.T @ D), "input")
    return prob


def _certificate(builder, cl, amb, what, opts):
    # solved on the normalised problem, then mapped back; P, Q and lambda
    # all scale like the output weight
    sc, prob, sol = _solve_scaled(cl, amb, lambda c, a, _: builder(c, a), what, opts)
    h = prob.handles
    lam = math.inf if h["lambda"] is None else max(sol[h["lambda"]], 0.0) / sc.s2
    return AnalysisCertificate(
        sc.multiplier(sol[h["P"]]), sol[h["Q"]] / sc.s2, lam, sc.cost * sol.objective, amb.kind, sol
    )


def analyze_correlated(cl, amb, opts=None):
    """Worst-case cost over the correlated ambiguity set (certificate route).

    At ``gamma = 0`` the returned multiplier is ``inf``.
    """
    _check(cl, amb, Kind.CORRELATED)
    return _certificate(build_correlated_certificate, cl, amb, "correlated analysis", opts)


def analyze_independent(cl, amb, opts=None):
    """Worst-case cost over the independent ambiguity set (certificate route)."""
    _check(cl, amb, Kind.INDEPENDENT)
    return _certificate(build_independent_certificate, cl, amb, "independent analysis", opts)


def analyze(cl, amb, opts=None):
    if amb.kind is Kind.CORRELATED:
        return analyze_correlated(cl, amb, opts)
    return analyze_independent(cl, amb, opts)


def _schur_input_rows(lam, Q, nw, PB, D, nz):
    """Rows/cols ``(w[, w_hat])`` of the Schur-form input LMI."""
    I = np.eye(nw)
    if lam is None:
        return [[-1.0 * Q]], [PB], [D]
    return [[-1.0 * (lam * I), lam * I], [lam * I, -1.0 * Q - lam * I]], [PB, None], [D, None]


def build_schur_correlated(cl, amb):
    """Certificate problem after a Schur complement: linear in ``P A``, ``P B``.

    Requires ``P > 0``; the block order is ``(chi, w, w_hat, chi+, z)``.
    """
    _check(cl, amb)
    prob = LmiProblem("schur-cor")
    lam, P, Q = _certificate_vars(prob, cl, amb)
    nz = cl.n_z
    A, B, C, D = cl.calA, cl.calB, cl.calC, cl.calD
    mid, PBcol, Dcol = _schur_input_rows(lam, Q, cl.n_w, P @ B, D, nz)
    k = len(mid)
    rows = [[-1.0 * P] + [None] * k + [(P @ A).T, C.T]]
    for i in range(k):
        rows.append([None] + mid[i] + [None if PBcol[i] is None else PBcol[i].T,
                                       None if Dcol[i] is None else Dcol[i].T])
    rows.append([P @ A] + PBcol + [-1.0 * P, None])
    rows.append([C] + Dcol + [None, -np.eye(nz)])
    prob.add_nsd_strict(bmat(rows), "schur")
    prob.add_psd_strict(P, "P > 0")
    return prob


def build_schur_independent(cl, amb):
    _check(cl, amb)
    prob = LmiProblem("schur-ind")
    lam, P, Q = _certificate_vars(prob, cl, amb)
    nz = cl.n_z
    A, B, C, D = cl.calA, cl.calB, cl.calC, cl.calD
    prob.add_nsd_strict(
        bmat([[-1.0 * P, (P @ A).T, C.T], [P @ A, -1.0 * P, None], [C, None, -np.eye(nz)]]),
        "schur lyapunov",
    )
    mid, PBcol, Dcol = _schur_input_rows(lam, Q, cl.n_w, P @ B, D, nz)
    rows = []
    for i in range(len(mid)):
        rows.append(mid[i] + [None if PBcol[i] is None else PBcol[i].T,
                              None if Dcol[i] is None else Dcol[i].T])
    rows.append(PBcol + [-1.0 * P, None])
    rows.append(Dcol + [None, -np.eye(nz)])
    prob.add_nsd_strict(bmat(rows), "schur input")
    prob.add_psd_strict(P, "P > 0")
    return prob


def schur_analysis_correlated(cl, amb, opts=None):
    _check(cl, amb, Kind.CORRELATED)
    return _certificate(build_schur_correlated, cl, amb, "Schur correlated analysis", opts)


def schur_analysis_independent(cl, amb, opts=None):
    _check(cl, amb, Kind.INDEPENDENT)
    return _certificate(build_schur_independent, cl, amb, "Schur independent analysis", opts)


@dataclass
class DualityReport:
    primal: float
    dual: float

    @property
    def gap(self):
        return self.dual - self.primal

    @property
    def relative_gap(self):
        return abs(self.gap) / (1.0 + abs(self.dual))


def duality_gap(cl, amb, opts=None):
    """Solve both routes and report the gap ``dual - primal``."""
    primal = solve_moment_relaxation(cl, amb, opts, method="primal").value
    dual = analyze(cl, amb, opts).cost
    return DualityReport(primal, dual)


# ---------------------------------------------------------------------------
# worst-case disturbance policy


@dataclass
class WorstCasePolicy:
    """Gains of the recursion ``(w, w_hat) = F_chi chi_hat + F_d d``."""

    F_wchi: np.ndarray
    F_whatchi: np.ndarray
    F_wd: np.ndarray
    F_whatd: np.ndarray
    Sigma_chichi: np.ndarray

    @property
    def n_d(self):
        return self.F_wd.shape[1]

    @property
    def n_w(self):
        return self.F_wd.shape[0]


def extract_worst_case_policy(Sigma, cl):
    """Gaussian policy whose stationary moments reproduce ``Sigma``.

    ``F_chi = Sigma_{(w,w_hat),chi} Sigma_chichi^+`` and ``F_d F_d^T`` is the
    Schur residual of the ``(w, w_hat)`` block.  For independent moment
    matrices ``F_chi`` is exactly zero.
    """
    if Sigma.n_psi:
        raise InvalidInput("policy extraction needs a plain (chi, w, w_hat) moment matrix")
    if Sigma.n_chi != cl.n_chi or Sigma.n_w != cl.n_w:
        raise InvalidInput("moment matrix does not match the closed loop")
    cl.require_stable()
    nw = Sigma.n_w
    S_chichi = Sigma.chichi
    S_dchi = np.vstack([Sigma.chiw.T, Sigma.chiwhat.T])
    S_dd = Sigma.full[Sigma.n_chi :, Sigma.n_chi :]
    if Sigma.kind is Kind.INDEPENDENT:
        F_chi = np.zeros((2 * nw, Sigma.n_chi))
        resid = S_dd
    else:
        F_chi = S_dchi @ pinv(S_chichi)
        resid = S_dd - F_chi @ S_dchi.T
    # measured against the (w, w_hat) block so an all-zero residual is fine
    F_d = psd_factor(resid, tol=SCHUR_RESIDUAL_TOL, scale=max(np.abs(S_dd).max(), 1e-300))
    return WorstCasePolicy(F_chi[:nw], F_chi[nw:], F_d[:nw], F_d[nw:], S_chichi.copy())


@dataclass
class PolicySample:
    w: np.ndarray
    what: np.ndarray
    chi_hat: np.ndarray


def sample_worst_case(policy, cl, T, seed=None):
    """Draw one trajectory of the worst-case recursion.

    ``chi_hat(0) ~ N(0, Sigma_chichi)``, ``d(t) ~ N(0, I)`` i.i.d., and
    ``chi_hat(t+1) = calA chi_hat + calB w``.  Deterministic given ``seed``.
    """
    T = int(T)
    if T < 1:
        raise InvalidInput("horizon must be at least 1")
    rng = np.random.default_rng(seed)
    n = cl.n_chi
    L0 = psd_factor(policy.Sigma_chichi, tol=SCHUR_RESIDUAL_TOL)
    chi = L0 @ rng.standard_normal(L0.shape[1])
    d = rng.standard_normal((T, policy.n_d))
    w_open = d @ policy.F_wd.T
    what_open = d @ policy.F_whatd.T
    chis = np.empty((T + 1, n))
    w = np.empty((T, cl.n_w))
    what = np.empty((T, cl.n_w))
    Fw, Fwh, A, B = policy.F_wchi, policy.F_whatchi, cl.calA, cl.calB
    feedback = bool(np.any(Fw) or np.any(Fwh))
    for t in range(T):
        chis[t] = chi
        if feedback:
            w[t] = Fw @ chi + w_open[t]
            what[t] = Fwh @ chi + what_open[t]
        else:
            w[t] = w_open[t]
            what[t] = what_open[t]
        chi = A @ chi + B @ w[t]
    chis[T] = chi
    return PolicySample(w, what, chis)


def _policy_cost(args):
    policy, cl, T, seed = args
    s = sample_worst_case(policy, cl, T, seed)
    return simulate(cl, s.w).cost


@dataclass
class PolicyCostEstimate:
    mean: float
    std: float
    costs: np.ndarray


def verify_policy_cost(policy, cl, T=20_000, n_seeds=50, seed=0, workers=None):
    """Monte-Carlo averaged cost of the policy, closed loop started at rest.

    Each run uses an independent stream spawned from ``seed``; results are
    collected in seed order, so they do not depend on ``workers``.
    """
    cl.require_stable()
    streams = np.random.SeedSequence(seed).spawn(int(n_seeds))
    jobs = [(policy, cl, T, s) for s in streams]
    if workers and workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as ex:
            costs = np.array(list(ex.map(_policy_cost, jobs)))
    else:
        costs = np.array([_policy_cost(j) for j in jobs])
    return PolicyCostEstimate(float(costs.mean()), float(costs.std(ddof=1)) if costs.size > 1 else 0.0, costs)


def empirical_moment(sample):
    """Time-averaged second moment of ``(chi_hat, w, w_hat)`` of one sample."""
    X = np.hstack([sample.chi_hat[:-1], sample.w, sample.what])
    return X.T @ X / X.shape[0]


def worst_case_transport(Sigma, amb):
    """Transport map from ``Sigma_nom`` to the worst-case ``Sigma_ww``.

    Driving the loop through ``w = Delta w_hat`` with ``w_hat ~ N(0,
    Sigma_nom)`` realises the independent worst case.
    """
    if amb.kind is not Kind.INDEPENDENT:
        raise InvalidInput("worst-case transport is defined for the independent set")
    if Sigma.n_w != amb.n_w:
        raise InvalidInput("moment matrix and ambiguity set disagree on n_w")
    return optimal_transport_plan(amb.Sigma_nom, Sigma.ww)


def transport_budget(Delta, Sigma_nom):
    """``||(I - Delta) Sigma_nom^{1/2}||_F``."""
    Delta = as_matrix(Delta, "Delta")
    E = np.eye(Delta.shape[0]) - Delta
    return float(np.sqrt(max(np.trace(E @ Sigma_nom @ E.T), 0.0)))


# ---------------------------------------------------------------------------
# autocorrelation-restricted correlated disturbances


@dataclass(frozen=True, eq=False)
class AutocorrelationConstraint:
    """Constraints ``sum_k tr(E[w(t-k) w(t)^T] M[i][k]) <= gammas[i]``.

    ``M`` has shape ``(N, lag + 1, n_w, n_w)``.  The lagged disturbances are
    generated by a delay line with state ``(w(t-1), ..., w(t-lag))``.  A lag
    of zero is realised with one delay block and a zero coefficient.
    """

    lag: int
    M: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        lag = int(self.lag)
        if lag < 0:
            raise InvalidInput("lag must be >= 0")
        gammas = np.asarray(self.gammas, dtype=float).reshape(-1)
        M = np.asarray(self.M, dtype=float)
        if M.size == 0:
            M = M.reshape(0, lag + 1, *(M.shape[-2:] if M.ndim == 4 else (0, 0)))
        if M.ndim != 4 or M.shape[1] != lag + 1 or M.shape[2] != M.shape[3]:
            raise InvalidInput(f"M must have shape (N, lag+1, n_w, n_w), got {M.shape}")
        if M.shape[0] != gammas.size:
            raise InvalidInput(f"{M.shape[0]} constraint matrices but {gammas.size} bounds")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(gammas))):
            raise InvalidInput("autocorrelation data must be finite")
        object.__setattr__(self, "lag", lag)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "gammas", gammas)

    @classmethod
    def empty(cls, n_w, lag=1):
        return cls(lag, np.zeros((0, lag + 1, n_w, n_w)), np.zeros(0))

    @property
    def N(self):
        return self.M.shape[0]

    @property
    def n_w(self):
        return self.M.shape[2]

    @property
    def n_delay(self):
        return max(self.lag, 1)

    @property
    def n_psi(self):
        return self.n_delay * self.n_w

    @property
    def A_psi(self):
        nw, l = self.n_w, self.n_delay
        return np.kron(np.eye(l, k=-1), np.eye(nw))

    @property
    def B_psi(self):
        return np.vstack([np.eye(self.n_w), np.zeros(((self.n_delay - 1) * self.n_w, self.n_w))])

    def C_psi(self, i):
        blocks = [self.M[i, k] for k in range(1, self.lag + 1)] or [np.zeros((self.n_w, self.n_w))]
        return np.hstack(blocks)

    def D_psi(self, i):
        return self.M[i, 0].copy()

    def to_dict(self):
        return {"lag": self.lag, "M": self.M.tolist(), "gammas": self.gammas.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["lag"], d["M"], d["gammas"])


def _check_acf(cl, amb, acf):
    _check(cl, amb, Kind.CORRELATED)
    if acf.N and acf.n_w != cl.n_w:
        raise InvalidInput(f"autocorrelation matrices are {acf.n_w}x{acf.n_w}, loop has n_w={cl.n_w}")


def _acf_rows(cl, acf, m):
    """Row maps on the coordinates ``(chi, x_psi, w[, w_hat])``."""
    n, nw, npsi = cl.n_chi, cl.n_w, acf.n_psi
    dim = n + npsi + m
    eye = np.eye(dim)
    E_state = eye[: n + npsi]
    E_w = eye[n + npsi : n + npsi + nw]
    E_what = E_w if m == nw else eye[n + npsi + nw :]
    A_psi, B_psi = acf.A_psi, acf.B_psi
    F = np.zeros((n + npsi, dim))
    F[:n, :n] = cl.calA
    F[:n, n + npsi : n + npsi + nw] = cl.calB
    F[n:, n : n + npsi] = A_psi
    F[n:, n + npsi : n + npsi + nw] = B_psi
    Z = np.zeros((cl.n_z, dim))
    Z[:, :n] = cl.calC
    Z[:, n + npsi : n + npsi + nw] = cl.calD
    R = []
    for i in range(acf.N):
        Ri = np.zeros((nw, dim))
        Ri[:, n : n + npsi] = acf.C_psi(i)
        Ri[:, n + npsi : n + npsi + nw] = acf.D_psi(i)
        R.append(Ri)
    return E_state, F, Z, E_w, E_what, R


def build_moment_relaxation_autocorrelated(cl, amb, acf):
    """Correlated moment problem over ``(chi, x_psi, w, w_hat)`` with the
    autocorrelation bounds ``2 tr(R_i Sigma S^T) <= 2 gamma_i``.
    """
    _check_acf(cl, amb, acf)
    nw = cl.n_w
    reduced = amb.gamma == 0.0
    m = nw if reduced else 2 * nw
    E_state, F, Z, E_w, E_what, R = _acf_rows(cl, acf, m)
    dim = E_state.shape[1]
    prob = LmiProblem("moment-acf")
    S = prob.symmetric(dim, "Sigma")
    prob.maximize((Z @ S @ Z.T).trace())
    prob.add_eq(E_state @ S @ E_state.T, F @ S @ F.T, symmetric=True, name="stationarity")
    if not reduced:
        Ed = E_w - E_what
        prob.add_nonneg(amb.gamma**2 - (Ed @ S @ Ed.T).trace(), "transport budget")
    prob.add_eq(E_what @ S @ E_what.T, amb.Sigma_nom, symmetric=True, name="nominal")
    prob.add_psd(S, "Sigma psd")
    for i, Ri in enumerate(R):
        prob.add_nonneg(acf.gammas[i] - (Ri @ S @ E_w.T).trace(), f"autocorrelation {i}")
    lift = np.vstack([np.eye(dim)[: dim - m + nw], E_what]).T if reduced else np.eye(dim)
    prob.handles = {"Sigma": S, "lift": lift}
    return prob


def build_autocorrelation_analysis(cl, amb, acf):
    """Certificate problem for the autocorrelation-restricted correlated set.

    Minimises ``tr(Q Sigma_nom) + lambda gamma**2 + 2 sum_i gamma_i mu_i``
    over ``lambda, mu >= 0`` and ``P`` on ``(chi, x_psi)`` subject to::

        -E'PE + F'PF + Z'Z - sum_i mu_i (R_i'S + S'R_i) + [input block] < 0

    where ``E`` selects ``(chi, x_psi)``, ``F`` is the joint state update,
    ``Z`` the output row, ``R_i`` the filter output ``psi_i`` and ``S``
    selects ``w``.  The multiplier terms enter with a minus sign, which is
    what Lagrange dualisation of the ``<= gamma_i`` bounds gives.
    """
    _check_acf(cl, amb, acf)
    nw = cl.n_w
    prob = LmiProblem("certificate-acf")
    n_state = cl.n_chi + acf.n_psi
    P = prob.symmetric(n_state, "P")
    Q = prob.symmetric(nw, "Q")
    reduced = amb.gamma == 0.0
    m = nw if reduced else 2 * nw
    E_state, F, Z, E_w, E_what, R = _acf_rows(cl, acf, m)
    lam = None
    if not reduced:
        lam = prob.scalar("lambda")
        prob.add_nonneg(lam, "lambda >= 0")
    mu = [prob.scalar(f"mu{i}") for i in range(acf.N)]
    for i, v in enumerate(mu):
        prob.add_nonneg(v, f"mu{i} >= 0")
    Ed = E_state.shape[1]
    Einp = np.eye(Ed)[Ed - m :]
    lmi = -1.0 * (E_state.T @ P @ E_state) + F.T @ P @ F + Z.T @ Z
    lmi = lmi + Einp.T @ _input_block(lam, Q, nw) @ Einp
    for v, Ri in zip(mu, R):
        lmi = lmi - v * (Ri.T @ E_w + E_w.T @ Ri)
    prob.add_nsd_strict(lmi, "dissipation")
    obj = (Q @ amb.Sigma_nom).trace()
    if lam is not None:
        obj = obj + amb.gamma**2 * lam
    for g, v in zip(acf.gammas, mu):
        obj = obj + 2.0 * g * v
    prob.minimize(obj)
    prob.handles = {"lambda": lam, "P": P, "Q": Q, "mu": mu}
    return prob


def _scale_acf(acf, c):
    return AutocorrelationConstraint(acf.lag, acf.M, acf.gammas / c)


def solve_moment_relaxation_autocorrelated(cl, amb, acf, opts=None):
    """Optimum and extended moment matrix of the autocorrelation-restricted problem."""
    _check_acf(cl, amb, acf)
    sc, prob, sol = _solve_scaled(
        cl, amb,
        lambda c, a, s: build_moment_relaxation_autocorrelated(c, a, _scale_acf(acf, s.c)),
        "autocorrelated moment relaxation", opts,
    )
    L = prob.handles["lift"]
    full = sc.moment(L.T @ sol[prob.handles["Sigma"]] @ L)
    Sigma = MomentMatrix(full, cl.n_chi, cl.n_w, Kind.CORRELATED, n_psi=acf.n_psi)
    return MomentResult(sc.cost * sol.objective, Sigma, sol)


def analyze_autocorrelated(cl, amb, acf, opts=None):
    """Certificate for the autocorrelation-restricted set; ``mu`` is attached.

    The value is an upper bound on the moment-problem optimum; whether the
    two coincide is not guaranteed.
    """
    _check_acf(cl, amb, acf)
    sc, prob, sol = _solve_scaled(
        cl, amb,
        lambda c, a, s: build_autocorrelation_analysis(c, a, _scale_acf(acf, s.c)),
        "autocorrelated analysis", opts,
    )
    h = prob.handles
    lam = math.inf if h["lambda"] is None else max(sol[h["lambda"]], 0.0) / sc.s2
    mu = np.array([max(sol[v], 0.0) / sc.s2 for v in h["mu"]])
    return AnalysisCertificate(
        sc.multiplier(sol[h["P"]]), sol[h["Q"]] / sc.s2, lam, sc.cost * sol.objective, Kind.CORRELATED, sol, mu
    )

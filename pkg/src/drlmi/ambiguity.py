"""Gelbrich / 2-Wasserstein geometry of Gaussian second-moment data."""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NotPd, SolverFailure
from .matops import as_sym, psd_factor, psd_sqrt
from .sdpcore import LmiProblem, SolverOptions, bmat


class Kind(enum.Enum):
    CORRELATED = "cor"
    INDEPENDENT = "ind"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        for k in cls:
            if key in (k.value, k.name.lower()):
                return k
        raise InvalidInput(f"unknown ambiguity kind {value!r}; use 'cor' or 'ind'")


@dataclass(frozen=True, eq=False)
class AmbiguitySpec:
    """Wasserstein ball of radius ``gamma`` around ``N(0, Sigma_nom)``."""

    kind: Kind
    gamma: float
    Sigma_nom: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        g = float(self.gamma)
        if not math.isfinite(g) or g < 0:
            raise InvalidInput(f"gamma must be finite and >= 0, got {self.gamma}")
        object.__setattr__(self, "gamma", g)
        S = as_sym(self.Sigma_nom, "Sigma_nom")
        if np.linalg.eigvalsh(S)[0] < -1e-10 * max(1.0, np.abs(S).max()):
            raise InvalidInput("Sigma_nom must be positive semidefinite")
        object.__setattr__(self, "Sigma_nom", S)

    @property
    def n_w(self):
        return self.Sigma_nom.shape[0]

    def replace(self, **kw):
        d = {"kind": self.kind, "gamma": self.gamma, "Sigma_nom": self.Sigma_nom}
        d.update(kw)
        return AmbiguitySpec(**d)


def _pair(S1, S2):
    S1, S2 = as_sym(S1, "Sigma1"), as_sym(S2, "Sigma2")
    if S1.shape != S2.shape:
        raise InvalidInput(f"covariance shapes differ: {S1.shape} vs {S2.shape}")
    return S1, S2


def gelbrich_distance(mu1, Sigma1, mu2, Sigma2):
    """Gelbrich distance between ``(mu1, Sigma1)`` and ``(mu2, Sigma2)``."""
    S1, S2 = _pair(Sigma1, Sigma2)
    mu1 = np.asarray(mu1, dtype=float).reshape(-1)
    mu2 = np.asarray(mu2, dtype=float).reshape(-1)
    if mu1.shape != mu2.shape or mu1.size != S1.shape[0]:
        raise InvalidInput("mean vectors must match the covariance dimension")
    # tr((S1^1/2 S2 S1^1/2)^1/2) is the nuclear norm of S1^1/2 S2^1/2; the SVD
    # keeps small singular values accurate where an eigen-sqrt would not
    cross = np.linalg.svd(psd_sqrt(S1) @ psd_sqrt(S2), compute_uv=False).sum()
    sq = float(np.sum((mu1 - mu2) ** 2) + np.trace(S1) + np.trace(S2) - 2.0 * cross)
    return math.sqrt(max(sq, 0.0))


def gelbrich_distance_sdp(Sigma1, Sigma2, opts=None):
    """Zero-mean Gelbrich distance from its coupling SDP.

    Minimises ``tr(S1 + S2 - 2 C)`` over couplings ``C`` with
    ``[[S1, C], [C^T, S2]] >= 0``.  With ``S_i = F_i F_i^T`` (full column
    rank ``F_i``) the feasible couplings are exactly ``C = F1 K F2^T`` with
    ``[[I, K], [K^T, I]] >= 0``; that form is solved because it stays strictly
    feasible when the covariances are singular.
    """
    S1, S2 = _pair(Sigma1, Sigma2)
    opts = SolverOptions.coerce(opts if opts is not None else {"tol": 1e-12})
    F1, F2 = psd_factor(S1), psd_factor(S2)
    r1, r2 = F1.shape[1], F2.shape[1]
    prob = LmiProblem("gelbrich")
    K = prob.matrix(r1, r2, "contraction")
    prob.add_psd(bmat([[np.eye(r1), K], [K.T, np.eye(r2)]]), "coupling")
    prob.minimize(np.trace(S1) + np.trace(S2) - 2.0 * (F2.T @ F1 @ K).trace())
    sol = prob.solve(opts)
    if not sol.ok:
        raise SolverFailure(f"Gelbrich SDP ended with status {sol.status.value}", sol)
    return math.sqrt(max(sol.objective, 0.0))


def optimal_transport_plan(Sigma1, Sigma2):
    """Linear map ``Delta`` pushing ``N(0, Sigma1)`` optimally onto ``N(0, Sigma2)``.

    ``Delta = S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2}``; ``Sigma1``
    must be positive definite, ``Sigma2`` may be singular.
    """
    S1, S2 = _pair(Sigma1, Sigma2)
    w, V = np.linalg.eigh(S1)
    if w[0] <= 1e-12 * max(1.0, w[-1]):
        raise NotPd(f"Sigma1 is not positive definite (min eigenvalue {w[0]:.3e})")
    R = (V * np.sqrt(w)) @ V.T
    Rinv = (V / np.sqrt(w)) @ V.T
    U, sv, _ = np.linalg.svd(R @ psd_sqrt(S2))
    Delta = Rinv @ ((U * sv) @ U.T) @ Rinv
    return 0.5 * (Delta + Delta.T)

"""Symbolic LMI programs lowered to a standard-form conic problem.

A :class:`LmiProblem` owns a flat vector of scalar decision components.
Decision variables are :class:`VarHandle` objects, which are themselves
affine expressions (:class:`Expr`) and can be combined with constant numpy
arrays through ``+``, ``-``, ``@``, ``*``, ``.T`` and :func:`bmat`.

Symmetric variables are parametrised by their scaled half-vectorisation
(off-diagonal components carry a factor ``sqrt(2)``), so ``trace(C @ X)`` has
the same coefficients as the Euclidean inner product of the components.

The lowered program has the Clarabel form::

    minimize    c0 + c^T x
    subject to  b - A x  in  K = {0}^m0 x R_+^m1 x S_+^{d1} x ... x S_+^{dk}

where positive semidefinite cones use the scaled upper triangle stored
column by column.
"""

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInput

SQRT2 = math.sqrt(2.0)
_ids = itertools.count()


class Expr:
    """Affine matrix expression ``const + sum_v coef_v[..., :] @ x_v``.

    ``terms`` maps a variable id to an array of shape ``(rows, cols, size)``
    holding the coefficient of each scalar component of that variable.
    """

    __array_ufunc__ = None  # make ndarray @ Expr dispatch to __rmatmul__

    def __init__(self, const, terms=None, owner=None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.terms = terms if terms is not None else {}
        self.owner = owner

    @property
    def shape(self):
        return self.const.shape

    @staticmethod
    def wrap(x, shape=None):
        if isinstance(x, Expr):
            return x
        if np.isscalar(x) and shape is not None:
            return Expr(np.full(shape, float(x)))
        return Expr(x)

    def _combine(self, other, sign):
        other = Expr.wrap(other, self.shape)
        if other.shape != self.shape:
            raise InvalidInput(f"shape mismatch {self.shape} vs {other.shape}")
        terms = dict(self.terms)
        for vid, c in other.terms.items():
            if vid in terms:
                terms[vid] = terms[vid] + sign * c
            else:
                terms[vid] = sign * c
        return Expr(self.const + sign * other.const, terms, self.owner or other.owner)

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self)._combine(other, 1.0)

    def __neg__(self):
        return Expr(-self.const, {k: -v for k, v in self.terms.items()}, self.owner)

    def __mul__(self, other):
        if isinstance(other, Expr):
            raise InvalidInput("product of two affine expressions is not affine")
        if np.isscalar(other):
            a = float(other)
            return Expr(a * self.const, {k: a * v for k, v in self.terms.items()}, self.owner)
        M = np.atleast_2d(np.asarray(other, dtype=float))
        if self.shape != (1, 1):
            raise InvalidInput("only scalar expressions can scale a matrix")
        return Expr(
            self.const[0, 0] * M,
            {k: M[:, :, None] * v[0, 0][None, None, :] for k, v in self.terms.items()},
            self.owner,
        )

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Expr):
            raise InvalidInput("product of two affine expressions is not affine")
        M = np.atleast_2d(np.asarray(other, dtype=float))
        return Expr(
            self.const @ M,
            {k: np.einsum("rck,cq->rqk", v, M) for k, v in self.terms.items()},
            self.owner,
        )

    def __rmatmul__(self, other):
        M = np.atleast_2d(np.asarray(other, dtype=float))
        return Expr(
            M @ self.const,
            {k: np.einsum("pr,rck->pck", M, v) for k, v in self.terms.items()},
            self.owner,
        )

    @property
    def T(self):
        return Expr(
            self.const.T, {k: v.transpose(1, 0, 2) for k, v in self.terms.items()}, self.owner
        )

    def trace(self):
        if self.shape[0] != self.shape[1]:
            raise InvalidInput("trace of a non-square expression")
        return Expr(
            np.trace(self.const).reshape(1, 1),
            {k: np.trace(v, axis1=0, axis2=1).reshape(1, 1, -1) for k, v in self.terms.items()},
            self.owner,
        )

    def sym(self):
        return 0.5 * (self + self.T)

    def __getitem__(self, key):
        rows, cols = key
        c = self.const[rows, cols]
        c = np.atleast_2d(c)
        terms = {}
        for k, v in self.terms.items():
            t = v[rows, cols]
            terms[k] = t.reshape(c.shape + (v.shape[2],))
        return Expr(c, terms, self.owner)

    def value(self, values):
        """Evaluate with ``values`` mapping variable id to component vectors."""
        out = self.const.copy()
        for vid, c in self.terms.items():
            out += c @ values[vid]
        return out


def _const_or_expr(b):
    return b if isinstance(b, Expr) else np.atleast_2d(np.asarray(b, dtype=float))


def bmat(blocks):
    """Assemble a block matrix from expressions, arrays and ``0``/``None``.

    Zero placeholders take their size from the other blocks in the same
    block row and column.
    """
    nr, nc = len(blocks), len(blocks[0])
    heights, widths = [None] * nr, [None] * nc
    for i, row in enumerate(blocks):
        if len(row) != nc:
            raise InvalidInput("ragged block matrix")
        for j, b in enumerate(row):
            if b is None or (np.isscalar(b) and b == 0):
                continue
            r, c = _const_or_expr(b).shape
            if heights[i] not in (None, r) or widths[j] not in (None, c):
                raise InvalidInput(f"inconsistent block size at ({i}, {j})")
            heights[i], widths[j] = r, c
    if None in heights or None in widths:
        raise InvalidInput("cannot infer size of an all-zero block row or column")
    ro = np.concatenate([[0], np.cumsum(heights)])
    co = np.concatenate([[0], np.cumsum(widths)])
    const = np.zeros((ro[-1], co[-1]))
    terms = {}
    owner = None
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is None or (np.isscalar(b) and b == 0):
                continue
            rs, cs = slice(ro[i], ro[i + 1]), slice(co[j], co[j + 1])
            if isinstance(b, Expr):
                owner = owner or b.owner
                const[rs, cs] = b.const
                for k, v in b.terms.items():
                    if k not in terms:
                        terms[k] = np.zeros((ro[-1], co[-1], v.shape[2]))
                    terms[k][rs, cs] = v
            else:
                const[rs, cs] = _const_or_expr(b)
    return Expr(const, terms, owner)


def block_diag(*blocks):
    n = len(blocks)
    return bmat([[blocks[i] if i == j else None for j in range(n)] for i in range(n)])


class VarHandle(Expr):
    """A decision variable; ``kind`` is ``"scalar"``, ``"sym"`` or ``"rect"``."""

    def __init__(self, owner, kind, dims, offset, name):
        self.id = next(_ids)
        self.kind = kind
        self.dims = dims
        self.offset = offset
        self.name = name
        r, c = dims
        if kind == "sym":
            size = r * (r + 1) // 2
            coef = np.zeros((r, r, size))
            for k, (i, j) in enumerate(svec_indices(r)):
                if i == j:
                    coef[i, i, k] = 1.0
                else:
                    coef[i, j, k] = coef[j, i, k] = 1.0 / SQRT2
        else:
            size = r * c
            # row-major component order
            coef = np.eye(size).reshape(r, c, size)
        self.size = size
        super().__init__(np.zeros((r, c)), {self.id: coef}, owner)

    def __hash__(self):
        return hash(self.id)

    def __eq__(self, other):
        return isinstance(other, VarHandle) and other.id == self.id

    def __repr__(self):
        return f"VarHandle({self.name!r}, {self.kind}, {self.dims})"

    def from_components(self, x):
        r, c = self.dims
        if self.kind == "sym":
            X = np.zeros((r, r))
            for k, (i, j) in enumerate(svec_indices(r)):
                if i == j:
                    X[i, i] = x[k]
                else:
                    X[i, j] = X[j, i] = x[k] / SQRT2
            return X
        if self.kind == "scalar":
            return float(x[0])
        return np.asarray(x, dtype=float).reshape(r, c)


def svec_indices(d):
    """Upper-triangle index pairs in column-major order."""
    return [(i, j) for j in range(d) for i in range(j + 1)]


def svec(M):
    """Scaled half-vectorisation matching the PSD cone convention."""
    d = M.shape[0]
    return np.array([M[i, j] if i == j else SQRT2 * 0.5 * (M[i, j] + M[j, i]) for i, j in svec_indices(d)])


class BlockKind(enum.Enum):
    PSD = "psd"  # F >= 0
    NSD_STRICT = "nsd_strict"  # F <= -eps I
    PSD_STRICT = "psd_strict"  # F >= eps I


@dataclass
class LmiBlock:
    expr: Expr
    kind: BlockKind
    name: str = ""
    eps: float = None  # overrides SolverOptions.eps_strict for this block


@dataclass
class Equality:
    expr: Expr
    symmetric: bool
    name: str = ""


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_TROUBLE = "NumericalTrouble"


@dataclass
class SolverOptions:
    """``eps_strict`` is the relative margin used for strict LMIs.

    ``backend`` holds raw Clarabel settings passed through untouched.  With
    ``retry`` a run that ends in numerical trouble is repeated with a few
    alternative step and scaling settings before giving up.
    """

    eps_strict: float = 1e-7
    tol: float = 1e-9
    max_iter: int = 200
    verbose: bool = False
    backend: dict = field(default_factory=dict)
    retry: bool = True

    @classmethod
    def coerce(cls, opts):
        if opts is None:
            return cls()
        if isinstance(opts, cls):
            return opts
        if isinstance(opts, dict):
            unknown = set(opts) - set(cls.__dataclass_fields__)
            if unknown:
                raise InvalidInput(f"unknown solver options {sorted(unknown)}")
            return cls(**opts)
        raise InvalidInput(f"bad solver options {opts!r}")


@dataclass
class Solution:
    status: Status
    objective: float
    values: dict = field(default_factory=dict)
    solver_stats: dict = field(default_factory=dict)
    _components: dict = field(default_factory=dict, repr=False)
    # dual matrices of the LMI blocks, in declaration order
    duals: list = field(default_factory=list, repr=False)

    @property
    def ok(self):
        return self.status is Status.OPTIMAL

    def __getitem__(self, var):
        return self.values[var]

    def value(self, expr):
        """Evaluate any expression of the solved problem."""
        return Expr.wrap(expr).value(self._components)

    def dual(self, name):
        """Dual matrix (``>= 0``) of the first LMI block called ``name``."""
        for blk_name, Z in self.duals:
            if blk_name == name:
                return Z
        raise KeyError(name)


class LmiProblem:
    """Container for variables, LMI blocks, equalities and an objective."""

    def __init__(self, name=""):
        self.name = name
        self.variables = []
        self.lmi_blocks = []
        self.equalities = []
        self.nonneg = []
        self.objective = None
        self.sense = "min"
        self._ncomp = 0

    # -- declaration -----------------------------------------------------
    def add_variable(self, shape, name=None):
        """Declare a variable.

        ``shape`` is ``"scalar"``, ``("sym", d)`` or ``(rows, cols)``.
        """
        if shape == "scalar":
            kind, dims = "scalar", (1, 1)
        elif isinstance(shape, tuple) and len(shape) == 2 and shape[0] == "sym":
            kind, dims = "sym", (int(shape[1]), int(shape[1]))
        elif isinstance(shape, tuple) and len(shape) == 2:
            kind, dims = "rect", (int(shape[0]), int(shape[1]))
        else:
            raise InvalidInput(f"bad variable shape {shape!r}")
        if min(dims) < 1:
            raise InvalidInput(f"variable dimensions must be positive, got {dims}")
        v = VarHandle(self, kind, dims, self._ncomp, name or f"v{len(self.variables)}")
        self._ncomp += v.size
        self.variables.append(v)
        return v

    def scalar(self, name=None):
        return self.add_variable("scalar", name)

    def symmetric(self, d, name=None):
        return self.add_variable(("sym", d), name)

    def matrix(self, rows, cols, name=None):
        return self.add_variable((rows, cols), name)

    @property
    def num_components(self):
        return self._ncomp

    def _check(self, expr):
        expr = Expr.wrap(expr)
        known = {v.id for v in self.variables}
        for vid in expr.terms:
            if vid not in known:
                raise InvalidInput("expression references a variable of another problem")
        return expr

    def add_psd(self, expr, name=""):
        """Constrain ``expr >= 0`` (symmetric part)."""
        self._add_block(expr, BlockKind.PSD, name)

    def add_nsd_strict(self, expr, name="", eps=None):
        """Constrain ``expr < 0``, implemented as ``expr <= -margin I``.

        ``margin = eps * (1 + ||constant part||_F)``; ``eps`` defaults to
        the solve-time ``eps_strict``.
        """
        self._add_block(expr, BlockKind.NSD_STRICT, name, eps)

    def add_psd_strict(self, expr, name="", eps=None):
        self._add_block(expr, BlockKind.PSD_STRICT, name, eps)

    def _add_block(self, expr, kind, name, eps=None):
        expr = self._check(expr)
        if expr.shape[0] != expr.shape[1]:
            raise InvalidInput(f"LMI block {name!r} is not square: {expr.shape}")
        if eps is not None and not eps >= 0:
            raise InvalidInput(f"strict margin must be >= 0, got {eps}")
        self.lmi_blocks.append(LmiBlock(expr.sym(), kind, name, eps))

    def add_eq(self, lhs, rhs=0.0, symmetric=False, name=""):
        """Constrain ``lhs == rhs`` entrywise (upper triangle if symmetric)."""
        lhs = self._check(lhs)
        expr = lhs - Expr.wrap(rhs, lhs.shape)
        if symmetric:
            expr = expr.sym()
        self.equalities.append(Equality(expr, symmetric, name))

    def add_nonneg(self, expr, name=""):
        expr = self._check(expr)
        for i in range(expr.shape[0]):
            for j in range(expr.shape[1]):
                self.nonneg.append(expr[i, j])

    def minimize(self, expr):
        self._set_objective(expr, "min")

    def maximize(self, expr):
        self._set_objective(expr, "max")

    def _set_objective(self, expr, sense):
        expr = self._check(expr)
        if expr.shape != (1, 1):
            raise InvalidInput(f"objective must be scalar, got {expr.shape}")
        self.objective, self.sense = expr, sense

    # -- lowering ----------------------------------------------------------
    def _dense_rows(self, expr):
        """Return (const (m,), coef (m, n)) for the row-major entries of expr."""
        n = self._ncomp
        r, c = expr.shape
        G = np.zeros((r * c, n))
        for v in self.variables:
            t = expr.terms.get(v.id)
            if t is not None:
                G[:, v.offset : v.offset + v.size] += t.reshape(r * c, v.size)
        return expr.const.reshape(-1), G

    def lower(self, opts=None):
        """Lower to conic standard form.

        Returns a :class:`ConicForm`; strict blocks get their margin here.
        """
        opts = SolverOptions.coerce(opts)
        if self.objective is None:
            raise InvalidInput("problem has no objective")
        n = self._ncomp
        sgn = 1.0 if self.sense == "min" else -1.0
        _, cvec = self._dense_rows(self.objective)
        q = sgn * cvec[0]
        q0 = sgn * float(self.objective.const[0, 0])

        A_parts, b_parts, cones = [], [], []
        # equalities: F0 + G x = 0  ->  G x + s = -F0, s in {0}
        nzero = 0
        for eq in self.equalities:
            f0, G = self._dense_rows(eq.expr)
            if eq.symmetric:
                d = eq.expr.shape[0]
                sel = [i * d + j for j in range(d) for i in range(j + 1)]
                f0, G = f0[sel], G[sel]
            A_parts.append(G)
            b_parts.append(-f0)
            nzero += f0.size
        if nzero:
            cones.append(("zero", nzero))
        # scalar inequalities: F0 + G x >= 0  ->  s = F0 + G x
        if self.nonneg:
            for e in self.nonneg:
                f0, G = self._dense_rows(e)
                A_parts.append(-G)
                b_parts.append(f0)
            cones.append(("nonneg", len(self.nonneg)))
        margins = []
        for blk in self.lmi_blocks:
            e = blk.expr
            d = e.shape[0]
            if blk.kind is BlockKind.NSD_STRICT:
                e = -e
            margin = 0.0
            if blk.kind in (BlockKind.NSD_STRICT, BlockKind.PSD_STRICT):
                eps = opts.eps_strict if blk.eps is None else blk.eps
                margin = eps * (1.0 + float(np.linalg.norm(e.const)))
                e = e - margin * np.eye(d)
            margins.append(margin)
            f0, G = self._dense_rows(e)
            idx = svec_indices(d)
            scale = np.array([1.0 if i == j else SQRT2 for i, j in idx])
            rows = [i * d + j for i, j in idx]
            A_parts.append(-(G[rows] * scale[:, None]))
            b_parts.append(f0[rows] * scale)
            if d == 1:
                cones.append(("nonneg", 1))
            else:
                cones.append(("psd", d))
        if A_parts:
            A = sp.csc_matrix(np.vstack(A_parts))
            b = np.concatenate(b_parts)
        else:
            A = sp.csc_matrix((0, n))
            b = np.zeros(0)
        return ConicForm(q=q, q0=q0, A=A, b=b, cones=cones, margins=margins)

    def solve(self, opts=None):
        return solve(self, opts)


@dataclass
class ConicForm:
    q: np.ndarray
    q0: float
    A: sp.csc_matrix
    b: np.ndarray
    cones: list
    margins: list

    def dump(self, fh):
        """Write the plain-text sparse dump.

        Format, one record per line::

            drlmi-conic 1
            nvars <n>
            nrows <m>
            cone <zero|nonneg|psd> <size>      (in row order)
            q0 <value>
            q <col> <value>                     (nonzeros only)
            A <row> <col> <value>               (nonzeros only, 0-based)
            b <row> <value>                     (nonzeros only)

        PSD cone sizes are matrix orders; their rows hold the scaled upper
        triangle in column-major order.
        """
        m, n = self.A.shape
        fh.write("drlmi-conic 1\n")
        fh.write(f"nvars {n}\nnrows {m}\n")
        for kind, size in self.cones:
            fh.write(f"cone {kind} {size}\n")
        fh.write(f"q0 {self.q0!r}\n")
        for j in np.flatnonzero(self.q):
            fh.write(f"q {j} {self.q[j]!r}\n")
        coo = self.A.tocoo()
        for i, j, v in zip(coo.row, coo.col, coo.data):
            if v != 0.0:
                fh.write(f"A {i} {j} {float(v)!r}\n")
        for i in np.flatnonzero(self.b):
            fh.write(f"b {i} {self.b[i]!r}\n")


_STATUS_MAP = {
    "Solved": Status.OPTIMAL,
    "AlmostSolved": Status.OPTIMAL,
    "PrimalInfeasible": Status.INFEASIBLE,
    "AlmostPrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.UNBOUNDED,
    "AlmostDualInfeasible": Status.UNBOUNDED,
}


def _clarabel_cones(cones):
    import clarabel

    out = []
    for kind, size in cones:
        if kind == "zero":
            out.append(clarabel.ZeroConeT(size))
        elif kind == "nonneg":
            out.append(clarabel.NonnegativeConeT(size))
        else:
            out.append(clarabel.PSDTriangleConeT(size))
    return out


# alternative settings tried, in order, after a run ends in numerical trouble
RETRY_SETTINGS = (
    {"max_step_fraction": 0.9},
    {"equilibrate_enable": False},
    {"static_regularization_enable": False},
    {"direct_solve_method": "faer"},
    {"equilibrate_max_iter": 50},
)


def _run_clarabel(form, n, opts, extra):
    import clarabel

    settings = clarabel.DefaultSettings()
    settings.verbose = bool(opts.verbose)
    settings.max_iter = int(opts.max_iter)
    settings.tol_gap_abs = opts.tol
    settings.tol_gap_rel = opts.tol
    settings.tol_feas = opts.tol
    settings.presolve_enable = False
    for key, val in {**opts.backend, **extra}.items():
        if not hasattr(settings, key):
            raise InvalidInput(f"unknown Clarabel setting {key!r}")
        setattr(settings, key, val)
    P = sp.csc_matrix((n, n))
    solver = clarabel.DefaultSolver(P, form.q, form.A, form.b, _clarabel_cones(form.cones), settings)
    res = solver.solve()
    status_name = str(res.status)
    return res, status_name, _STATUS_MAP.get(status_name, Status.NUMERICAL_TROUBLE)


def solve(problem, opts=None):
    """Solve an :class:`LmiProblem` with the Clarabel interior-point solver.

    Solver outcomes other than optimality are reported through
    :attr:`Solution.status`; only malformed problems raise.
    """
    opts = SolverOptions.coerce(opts)
    form = problem.lower(opts)
    n = problem.num_components
    res, status_name, status = _run_clarabel(form, n, opts, {})
    retries = 0
    if status is Status.NUMERICAL_TROUBLE and opts.retry:
        for extra in RETRY_SETTINGS:
            retries += 1
            res, status_name, status = _run_clarabel(form, n, opts, extra)
            if status is not Status.NUMERICAL_TROUBLE:
                break
    sgn = 1.0 if problem.sense == "min" else -1.0
    stats = {
        "solver": "clarabel",
        "raw_status": status_name,
        "iterations": int(res.iterations),
        "r_prim": float(res.r_prim),
        "r_dual": float(res.r_dual),
        "solve_time": float(res.solve_time),
        "margins": [float(m) for m in form.margins],
        "retries": retries,
    }
    if status is not Status.OPTIMAL:
        obj = math.nan
        if status is Status.INFEASIBLE:
            obj = math.inf if problem.sense == "min" else -math.inf
        elif status is Status.UNBOUNDED:
            obj = -math.inf if problem.sense == "min" else math.inf
        return Solution(status, obj, {}, stats)
    x = np.asarray(res.x, dtype=float)
    comps = {v.id: x[v.offset : v.offset + v.size] for v in problem.variables}
    values = {v: v.from_components(comps[v.id]) for v in problem.variables}
    obj = sgn * (float(res.obj_val) + form.q0)
    stats["objective_dual"] = sgn * (float(res.obj_val_dual) + form.q0)
    return Solution(status, obj, values, stats, comps, _block_duals(problem, form, np.asarray(res.z)))


def _block_duals(problem, form, z):
    # LMI blocks own the trailing cones, one each
    sizes = [d * (d + 1) // 2 if kind == "psd" else d for kind, d in form.cones]
    nblk = len(problem.lmi_blocks)
    start = sum(sizes[: len(sizes) - nblk])
    out = []
    for blk, size in zip(problem.lmi_blocks, sizes[len(sizes) - nblk :]):
        d = blk.expr.shape[0]
        Z = np.zeros((d, d))
        for k, (i, j) in enumerate(svec_indices(d)):
            Z[i, j] = Z[j, i] = z[start + k] if i == j else z[start + k] / SQRT2
        out.append((blk.name, Z))
        start += size
    return out


def add_variable(problem, shape, name=None):
    return problem.add_variable(shape, name)


def block_residuals(problem, solution):
    """Worst constraint violation per block family for a solved problem.

    LMI blocks report ``-lambda_min`` of the constrained side (positive means
    violated), strict blocks are measured against zero rather than their
    margin, equalities report the max absolute entry.
    """
    out = {"lmi": [], "eq": [], "nonneg": []}
    for blk in problem.lmi_blocks:
        F = solution.value(blk.expr)
        F = 0.5 * (F + F.T)
        if blk.kind is BlockKind.NSD_STRICT:
            F = -F
        out["lmi"].append(-float(np.linalg.eigvalsh(F)[0]))
    for eq in problem.equalities:
        out["eq"].append(float(np.max(np.abs(solution.value(eq.expr)))))
    for e in problem.nonneg:
        out["nonneg"].append(-float(solution.value(e)[0, 0]))
    return out

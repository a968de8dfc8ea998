"""Small dense LMI layer on top of cvxopt's conic solver.

Problems are written with :class:`Affine` matrix expressions over a
:class:`VarSpace`, collected into an :class:`LmiProblem`, and handed to
:func:`solve`.  Every point the solver returns is re-checked with numpy
eigenvalue computations before it is reported as feasible.

Example
-------
>>> space = VarSpace()
>>> x = space.scalar("x")
>>> prob = LmiProblem.build(space, [psd(x - np.eye(1))], minimize=x)
>>> round(solve(prob).value("x").item(), 6)
1.0
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import cvxopt
import numpy as np
from cvxopt import solvers

from .errors import NoFeasibleGamma

logger = logging.getLogger(__name__)

FEASIBLE_EIG_TOL = 1e-9
STRICT_REL_MARGIN = 1e-7

_CVXOPT_OPTIONS = {
    "show_progress": False,
    "maxiters": 200,
    "abstol": 1e-9,
    "reltol": 1e-9,
    "feastol": 1e-10,
    "refinement": 2,
}


# ---------------------------------------------------------------------------
# affine matrix expressions
# ---------------------------------------------------------------------------

class Affine:
    """Matrix-valued affine map ``const + sum_j x[j] * terms[j]``."""

    __slots__ = ("const", "terms")
    __array_priority__ = 100.0

    def __init__(self, const: np.ndarray, terms: dict[int, np.ndarray] | None = None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.terms = terms if terms is not None else {}

    @property
    def shape(self) -> tuple[int, int]:
        return self.const.shape

    @property
    def is_constant(self) -> bool:
        return not self.terms

    @property
    def T(self) -> "Affine":
        return Affine(self.const.T, {j: M.T for j, M in self.terms.items()})

    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        for j, M in self.terms.items():
            out += x[j] * M
        return out

    def symmetrized(self) -> "Affine":
        return 0.5 * (self + self.T)

    def __neg__(self) -> "Affine":
        return Affine(-self.const, {j: -M for j, M in self.terms.items()})

    def __add__(self, other) -> "Affine":
        other = as_affine(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        terms = dict(self.terms)
        for j, M in other.terms.items():
            terms[j] = terms[j] + M if j in terms else M
        return Affine(self.const + other.const, terms)

    __radd__ = __add__

    def __sub__(self, other) -> "Affine":
        return self + (-as_affine(other))

    def __rsub__(self, other) -> "Affine":
        return as_affine(other) + (-self)

    def __mul__(self, s) -> "Affine":
        if isinstance(s, Affine):
            if s.is_constant and s.shape == (1, 1):
                s = s.const[0, 0]
            elif self.is_constant and self.shape == (1, 1):
                return s * self.const[0, 0]
            else:
                raise TypeError("product of two decision-dependent expressions is not affine")
        s = float(s)
        return Affine(s * self.const, {j: s * M for j, M in self.terms.items()})

    __rmul__ = __mul__

    def __matmul__(self, other) -> "Affine":
        if isinstance(other, Affine):
            if other.is_constant:
                other = other.const
            elif self.is_constant:
                return self.const @ other
            else:
                raise TypeError("product of two decision-dependent expressions is not affine")
        other = np.atleast_2d(np.asarray(other, dtype=float))
        return Affine(self.const @ other, {j: M @ other for j, M in self.terms.items()})

    def __rmatmul__(self, other) -> "Affine":
        other = np.atleast_2d(np.asarray(other, dtype=float))
        return Affine(other @ self.const, {j: other @ M for j, M in self.terms.items()})

    def __repr__(self) -> str:
        return f"Affine(shape={self.shape}, vars={sorted(self.terms)})"


def as_affine(obj) -> Affine:
    if isinstance(obj, Affine):
        return obj
    return Affine(np.atleast_2d(np.asarray(obj, dtype=float)))


def smul(scalar, M) -> Affine:
    """Product of a 1x1 affine expression with a constant matrix."""
    a = as_affine(scalar)
    if a.shape != (1, 1):
        raise ValueError("smul expects a 1x1 expression")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return Affine(a.const[0, 0] * M, {j: t[0, 0] * M for j, t in a.terms.items()})


def trace(expr) -> Affine:
    """1x1 affine expression equal to the trace of a square expression."""
    e = as_affine(expr)
    return Affine(np.array([[np.trace(e.const)]]),
                  {j: np.array([[np.trace(M)]]) for j, M in e.terms.items()})


def bmat(blocks: Sequence[Sequence]) -> Affine:
    """Assemble a block matrix; ``None`` entries become zero blocks."""
    rows = len(blocks)
    cols = len(blocks[0])
    heights = [None] * rows
    widths = [None] * cols
    for i, row in enumerate(blocks):
        if len(row) != cols:
            raise ValueError("ragged block matrix")
        for j, b in enumerate(row):
            if b is None:
                continue
            r, c = as_affine(b).shape
            if heights[i] not in (None, r) or widths[j] not in (None, c):
                raise ValueError(f"inconsistent block ({i},{j}) of shape {(r, c)}")
            heights[i], widths[j] = r, c
    heights = [0 if h is None else h for h in heights]
    widths = [0 if w is None else w for w in widths]
    ro = np.concatenate([[0], np.cumsum(heights)]).astype(int)
    co = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    const = np.zeros((ro[-1], co[-1]))
    terms: dict[int, np.ndarray] = {}
    for i, row in enumerate(blocks):
        for j, b in enumerate(row):
            if b is None:
                continue
            b = as_affine(b)
            sl = (slice(ro[i], ro[i + 1]), slice(co[j], co[j + 1]))
            const[sl] = b.const
            for k, M in b.terms.items():
                if k not in terms:
                    terms[k] = np.zeros_like(const)
                terms[k][sl] = M
    return Affine(const, terms)


def block_diag(*blocks) -> Affine:
    n = len(blocks)
    grid = [[None] * n for _ in range(n)]
    shapes = [as_affine(b).shape for b in blocks]
    for i, b in enumerate(blocks):
        grid[i][i] = b
        for j in range(n):
            if j != i:
                grid[i][j] = np.zeros((shapes[i][0], shapes[j][1]))
    return bmat(grid)


def quad_form(rows: Sequence, middle: Sequence[Sequence]) -> Affine:
    """Return ``sum_ij rows[i]^T middle[i][j] rows[j]``.

    ``rows`` are the row blocks of the outer factor, ``middle`` the block
    matrix in between (``None`` = zero block).  Each term may depend on the
    decision variables through at most one of its three factors.
    """
    total = None
    for i, Ri in enumerate(rows):
        for j, Rj in enumerate(rows):
            W = middle[i][j]
            if W is None:
                continue
            Ri_, W_, Rj_ = as_affine(Ri), as_affine(W), as_affine(Rj)
            n_var = sum(not t.is_constant for t in (Ri_, W_, Rj_))
            if n_var > 1:
                raise TypeError(f"term ({i},{j}) is not affine in the decision variables")
            if not Ri_.is_constant:
                term = Ri_.T @ (W_.const @ Rj_.const)
            elif not Rj_.is_constant:
                term = (Ri_.const.T @ W_.const) @ Rj_
            else:
                term = Ri_.const.T @ W_ @ Rj_.const
            total = term if total is None else total + term
    if total is None:
        raise ValueError("empty quadratic form")
    return total.symmetrized()


# ---------------------------------------------------------------------------
# decision variables
# ---------------------------------------------------------------------------

@dataclass
class _Group:
    kind: str
    shape: tuple[int, int]
    index: np.ndarray  # variable index per entry, -1 where fixed to zero
    basis: tuple | None = None  # for "combination" groups: one matrix per variable


class VarSpace:
    """Allocator for named scalar/matrix decision variables."""

    def __init__(self):
        self.n = 0
        self.groups: dict[str, _Group] = {}

    def _alloc(self, count: int) -> np.ndarray:
        idx = np.arange(self.n, self.n + count)
        self.n += count
        return idx

    def _affine(self, index: np.ndarray) -> Affine:
        r, c = index.shape
        terms = {}
        for (a, b), j in np.ndenumerate(index):
            if j < 0:
                continue
            M = terms.get(int(j))
            if M is None:
                M = np.zeros((r, c))
                terms[int(j)] = M
            M[a, b] = 1.0
        return Affine(np.zeros((r, c)), terms)

    def scalar(self, name: str) -> Affine:
        return self.matrix(name, 1, 1)

    def matrix(self, name: str, rows: int, cols: int, mask: np.ndarray | None = None) -> Affine:
        if name in self.groups:
            raise ValueError(f"duplicate variable {name!r}")
        mask = np.ones((rows, cols), bool) if mask is None else np.asarray(mask, bool)
        if mask.shape != (rows, cols):
            raise ValueError("mask shape mismatch")
        index = -np.ones((rows, cols), dtype=int)
        index[mask] = self._alloc(int(mask.sum()))
        self.groups[name] = _Group("matrix", (rows, cols), index)
        return self._affine(index)

    def symmetric(self, name: str, k: int) -> Affine:
        if name in self.groups:
            raise ValueError(f"duplicate variable {name!r}")
        iu = np.triu_indices(k)
        index = -np.ones((k, k), dtype=int)
        ids = self._alloc(len(iu[0]))
        index[iu] = ids
        index[(iu[1], iu[0])] = ids
        self.groups[name] = _Group("symmetric", (k, k), index)
        return self._affine(index)

    def combination(self, name: str, basis: Sequence[np.ndarray], shape: tuple[int, int]) -> Affine:
        """Matrix variable ``sum_j y_j basis[j]`` over new scalars ``y``."""
        if name in self.groups:
            raise ValueError(f"duplicate variable {name!r}")
        mats = tuple(np.asarray(B, dtype=float).reshape(shape) for B in basis)
        ids = self._alloc(len(mats))
        self.groups[name] = _Group("combination", tuple(shape), ids, mats)
        return Affine(np.zeros(shape), {int(j): B.copy() for j, B in zip(ids, mats)})

    def value(self, name: str, x: np.ndarray) -> np.ndarray:
        g = self.groups[name]
        if g.basis is not None:
            out = np.zeros(g.shape)
            for j, B in zip(g.index, g.basis):
                out += x[j] * B
            return out
        out = np.zeros(g.shape)
        free = g.index >= 0
        out[free] = x[g.index[free]]
        return out

    def indices(self, name: str) -> np.ndarray:
        g = self.groups[name]
        if g.basis is not None:
            return np.asarray(g.index)
        return np.unique(g.index[g.index >= 0])


# ---------------------------------------------------------------------------
# problem / solution records
# ---------------------------------------------------------------------------

@dataclass
class LmiBlock:
    """``const + sum_j x_j coeffs[j]  >=  margin * I``."""

    const: np.ndarray
    coeffs: dict[int, np.ndarray]
    strict: bool = False
    margin: float = 0.0
    name: str = ""

    def __post_init__(self):
        self.const = np.asarray(self.const, float)
        if not np.allclose(self.const, self.const.T, atol=1e-12, rtol=0):
            raise ValueError(f"block {self.name!r}: constant term not symmetric")
        for j, M in self.coeffs.items():
            if not np.allclose(M, M.T, atol=1e-12, rtol=0):
                raise ValueError(f"block {self.name!r}: coefficient {j} not symmetric")
        if self.strict and self.margin <= 0.0:
            self.margin = STRICT_REL_MARGIN * (1.0 + np.linalg.norm(self.const, 2))

    @property
    def size(self) -> int:
        return self.const.shape[0]

    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        for j, M in self.coeffs.items():
            out += x[j] * M
        return out


def psd(expr, strict: bool = False, name: str = "", margin: float = 0.0) -> LmiBlock:
    """Constraint ``expr >= 0`` (``> 0`` when ``strict``)."""
    e = as_affine(expr).symmetrized()
    return LmiBlock(e.const, dict(e.terms), strict=strict, margin=margin, name=name)


def nsd(expr, strict: bool = False, name: str = "", margin: float = 0.0) -> LmiBlock:
    """Constraint ``expr <= 0`` (``< 0`` when ``strict``)."""
    return psd(-as_affine(expr), strict=strict, name=name, margin=margin)


@dataclass
class LmiProblem:
    n_vars: int
    blocks: list[LmiBlock]
    objective: np.ndarray | None = None
    equalities: tuple[np.ndarray, np.ndarray] | None = None
    space: VarSpace | None = None

    @classmethod
    def build(cls, space: VarSpace, blocks: Iterable[LmiBlock], minimize=None,
              equalities: Iterable[tuple] = ()) -> "LmiProblem":
        """``minimize`` is a 1x1 affine expression; ``equalities`` are
        ``(expr, rhs)`` pairs with ``expr`` affine (any shape)."""
        n = space.n
        c = None
        if minimize is not None:
            m = as_affine(minimize)
            if m.shape != (1, 1):
                raise ValueError("objective must be scalar")
            c = np.zeros(n)
            for j, M in m.terms.items():
                c[j] = M[0, 0]
        rows, rhs = [], []
        for expr, value in equalities:
            e = as_affine(expr)
            value = np.broadcast_to(np.asarray(value, float), e.shape)
            for (a, b), _ in np.ndenumerate(e.const):
                row = np.zeros(n)
                for j, M in e.terms.items():
                    row[j] = M[a, b]
                rows.append(row)
                rhs.append(value[a, b] - e.const[a, b])
        eq = (np.array(rows), np.array(rhs)) if rows else None
        return cls(n, list(blocks), c, eq, space)


@dataclass
class SdpSolution:
    status: str  # optimal | feasible | infeasible | numerical-failure
    x: np.ndarray
    objective_value: float
    min_block_eig: float
    iterations: int
    gap: float = float("nan")
    space: VarSpace | None = field(default=None, repr=False)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")

    def value(self, name: str) -> np.ndarray:
        if self.space is None:
            raise ValueError("solution carries no variable space")
        return self.space.value(name, self.x)


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

def verify_point(problem: LmiProblem, x: np.ndarray) -> float:
    """Smallest eigenvalue over all blocks at ``x`` (numpy, solver-independent)."""
    worst = np.inf
    for blk in problem.blocks:
        V = blk.value(x)
        worst = min(worst, float(np.linalg.eigvalsh(0.5 * (V + V.T))[0]))
    return worst


def _equality_residual(problem: LmiProblem, x: np.ndarray) -> float:
    if problem.equalities is None:
        return 0.0
    A, b = problem.equalities
    return float(np.max(np.abs(A @ x - b) / (1.0 + np.abs(b))))


def _to_cvxopt(problem: LmiProblem, keep: np.ndarray, extra_t: bool):
    """Translate to cvxopt's ``G x + s = h`` form over the kept columns.

    When ``extra_t`` is set a trailing variable ``t`` is appended and every
    block becomes ``F(x) - margin I - t I >= 0`` (phase-one form).
    """
    ncol = len(keep) + (1 if extra_t else 0)
    col_of = {int(j): k for k, j in enumerate(keep)}
    Gl_rows, hl = [], []
    Gs, hs = [], []
    for blk in problem.blocks:
        k = blk.size
        h = blk.const - blk.margin * np.eye(k)
        if k == 1:
            row = np.zeros(ncol)
            for j, M in blk.coeffs.items():
                if j in col_of:
                    row[col_of[j]] = -M[0, 0]
            if extra_t:
                row[-1] = 1.0
            Gl_rows.append(row)
            hl.append(h[0, 0])
        else:
            G = np.zeros((k * k, ncol))
            for j, M in blk.coeffs.items():
                if j in col_of:
                    G[:, col_of[j]] = -M.reshape(-1, order="F")
            if extra_t:
                G[:, -1] = np.eye(k).reshape(-1, order="F")
            Gs.append(cvxopt.matrix(G))
            hs.append(cvxopt.matrix(h))
    kw = {}
    if extra_t:
        # cap t <= 1 so the phase-one problem stays bounded
        row = np.zeros(ncol)
        row[-1] = 1.0
        Gl_rows.append(row)
        hl.append(1.0)
    if Gl_rows:
        kw["Gl"] = cvxopt.matrix(np.array(Gl_rows))
        kw["hl"] = cvxopt.matrix(np.array(hl, dtype=float))
    if Gs:
        kw["Gs"], kw["hs"] = Gs, hs
    if problem.equalities is not None:
        A, b = problem.equalities
        A = A[:, keep]
        if extra_t:
            A = np.hstack([A, np.zeros((A.shape[0], 1))])
        kw["A"] = cvxopt.matrix(A)
        kw["b"] = cvxopt.matrix(np.asarray(b, float))
    return kw


def _used_columns(problem: LmiProblem) -> np.ndarray:
    used = np.zeros(problem.n_vars, bool)
    for blk in problem.blocks:
        for j, M in blk.coeffs.items():
            if np.any(M != 0.0):
                used[j] = True
    if problem.equalities is not None:
        used |= np.any(problem.equalities[0] != 0.0, axis=0)
    return np.flatnonzero(used)


def _run(c, kw, options):
    try:
        return solvers.sdp(cvxopt.matrix(c), options=options, **kw)
    except (ValueError, ArithmeticError) as exc:
        return {"status": "error", "x": None, "message": str(exc)}


def solve(problem: LmiProblem, options: dict | None = None) -> SdpSolution:
    """Solve an LMI feasibility / linear-objective problem.

    Returns a solution whose ``status`` is ``optimal`` (duality gap within
    ``1e-6 (1 + |obj|)``), ``feasible`` (verified point, gap not certified),
    ``infeasible`` (solver produced an infeasibility certificate) or
    ``numerical-failure``.
    """
    opts = dict(_CVXOPT_OPTIONS)
    if options:
        opts.update(options)
    n = problem.n_vars
    c_full = np.zeros(n) if problem.objective is None else np.asarray(problem.objective, float)
    keep = _used_columns(problem)
    dropped = np.setdiff1d(np.arange(n), keep)
    if np.any(c_full[dropped] != 0.0):
        return SdpSolution("numerical-failure", np.zeros(n), -np.inf, np.nan, 0,
                           space=problem.space, message="objective unbounded in unconstrained variable")

    def lift(xk):
        x = np.zeros(n)
        x[keep] = xk
        return x

    if len(keep) == 0:  # nothing to optimize: a plain eigenvalue test
        x = np.zeros(n)
        eig = verify_point(problem, x) if problem.blocks else 0.0
        ok = eig >= -FEASIBLE_EIG_TOL and all(
            np.linalg.eigvalsh(b.const)[0] > 0.0 for b in problem.blocks if b.strict)
        return SdpSolution("optimal" if ok else "infeasible", x, 0.0, eig, 0, 0.0, problem.space)

    kw = _to_cvxopt(problem, keep, extra_t=False)
    res = _run(c_full[keep], kw, opts)
    status = res["status"]
    iters = int(res.get("iterations", 0) or 0)

    if status in ("optimal", "unknown") and res.get("x") is not None:
        x = lift(np.array(res["x"]).ravel())
        eig = verify_point(problem, x)
        eq_ok = _equality_residual(problem, x) < 1e-7
        obj = float(c_full @ x)
        gap = res.get("gap")
        gap = float("nan") if gap is None else float(gap)
        if eig >= -FEASIBLE_EIG_TOL and eq_ok:
            strict_ok = all(np.linalg.eigvalsh(b.value(x))[0] > 0.0 for b in problem.blocks if b.strict)
            if strict_ok:
                if problem.objective is None:
                    return SdpSolution("optimal", x, 0.0, eig, iters, 0.0, problem.space)
                certified = status == "optimal" and np.isfinite(gap) and gap <= 1e-6 * (1 + abs(obj))
                return SdpSolution("optimal" if certified else "feasible", x, obj, eig, iters, gap,
                                   problem.space)
        logger.debug("main solve returned %s but point failed verification (eig=%g)", status, eig)
    elif status == "primal infeasible":
        return SdpSolution("infeasible", np.full(n, np.nan), np.inf, np.nan, iters,
                           space=problem.space, message="cvxopt primal infeasibility certificate")
    elif status == "dual infeasible":
        return SdpSolution("numerical-failure", np.full(n, np.nan), -np.inf, np.nan, iters,
                           space=problem.space, message="objective unbounded below")

    return _phase_one(problem, keep, lift, opts, iters, c_full)


def _phase_one(problem, keep, lift, opts, iters, c_full) -> SdpSolution:
    """Maximize the uniform slack ``t``; ``t* < 0`` certifies infeasibility."""
    n = problem.n_vars
    kw = _to_cvxopt(problem, keep, extra_t=True)
    c = np.zeros(len(keep) + 1)
    c[-1] = -1.0
    res = _run(c, kw, opts)
    iters += int(res.get("iterations", 0) or 0)
    if res.get("x") is None:
        return SdpSolution("numerical-failure", np.full(n, np.nan), np.nan, np.nan, iters,
                           space=problem.space, message=res.get("message", res["status"]))
    z = np.array(res["x"]).ravel()
    t = z[-1]
    x = lift(z[:-1])
    scale = max(1.0, max(np.linalg.norm(b.const, 2) for b in problem.blocks))
    if res["status"] in ("optimal", "unknown") and t < -1e-8 * scale:
        if res["status"] == "optimal":
            return SdpSolution("infeasible", x, np.inf, verify_point(problem, x), iters,
                               space=problem.space, message=f"phase-one optimum t*={t:.3e} < 0")
    eig = verify_point(problem, x)
    if t >= 0 and eig >= -FEASIBLE_EIG_TOL and _equality_residual(problem, x) < 1e-7:
        obj = float(c_full @ x)
        st = "optimal" if problem.objective is None else "feasible"
        return SdpSolution(st, x, obj, eig, iters, np.nan, problem.space,
                           message="recovered by phase one")
    return SdpSolution("numerical-failure", x, np.nan, eig, iters, space=problem.space,
                       message=f"phase one status {res['status']}, t*={t:.3e}")


def is_feasible(problem: LmiProblem) -> bool:
    sol = solve(problem)
    if sol.status == "numerical-failure":
        logger.warning("treating numerical failure as infeasible: %s", sol.message)
    return sol.ok


def bisect_gamma(problem_factory: Callable[[float], LmiProblem], lo: float, hi: float,
                 tol: float = 1e-3) -> float:
    """Smallest ``gamma`` (within ``tol``) for which ``problem_factory(gamma)``
    is feasible.  Feasibility must be monotone in ``gamma``; ``hi`` is
    expanded geometrically up to ``2**16`` times its initial value."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo = max(float(lo), 0.0)
    hi0 = hi = float(hi)
    while not is_feasible(problem_factory(hi)):
        lo = hi
        hi *= 2.0
        if hi > hi0 * 2.0 ** 16:
            raise NoFeasibleGamma(f"no feasible gamma up to {hi0 * 2.0 ** 16:g}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_feasible(problem_factory(mid)):
            hi = mid
        else:
            lo = mid
    return hi

"""Linear fractional representations of the equilibrium map and multiplier cones.

The equilibrium input-to-error map is written as

    e = F u + G p + E1 w,    q = H u + J p + E2 w,    p = Delta(q)

and the nonlinearity is described by a cone of symmetric multipliers
``Theta`` such that ``[dp; dq]' Theta [dp; dq] >= 0`` for every increment
pair.  Cones are finitely parameterized (``Theta = sum_j theta_j M_j``) with
LMI side constraints on ``theta`` so that they can be handed to ``sdp``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import kernels, sdp
from .errors import (DimensionMismatch, DualConeInvalid, DualUnavailable, FixedPointDivergence,
                     SingularBasis)

FP_DAMPING = 0.5
FP_TOL = 1e-10
FP_MAX_ITER = 10_000


def _zeros(r: int, c: int) -> np.ndarray:
    return np.zeros((r, c))


def _as_matrix(a, name: str, rows: int | None, cols: int | None) -> np.ndarray:
    if a is None:
        if rows is None or cols is None:
            raise DimensionMismatch(f"cannot infer the shape of omitted {name}")
        return _zeros(rows, cols)
    arr = np.asarray(a, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(rows if rows is not None else 0, cols if cols is not None else 0)
    arr = np.atleast_2d(arr)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix")
    if (rows is not None and arr.shape[0] != rows) or (cols is not None and arr.shape[1] != cols):
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected ({rows}, {cols})")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


# ---------------------------------------------------------------------------
# LFR record
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lfr:
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    J: np.ndarray
    E1: np.ndarray
    E2: np.ndarray

    @property
    def p(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.F.shape[1]

    @property
    def n_w(self) -> int:
        return self.E1.shape[1]

    @property
    def n_p(self) -> int:
        return self.G.shape[1]

    @property
    def n_q(self) -> int:
        return self.H.shape[0]

    @property
    def is_lti(self) -> bool:
        return self.n_p == 0 and self.n_q == 0

    def to_dict(self) -> dict[str, Any]:
        out = {k: getattr(self, k).tolist() for k in ("F", "G", "H", "J", "E1", "E2")}
        out["dims"] = {"m": self.m, "p": self.p, "n_w": self.n_w, "n_p": self.n_p, "n_q": self.n_q}
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Lfr":
        if "F" not in d:
            raise KeyError("F")
        dims = d.get("dims", {})
        F = np.atleast_2d(np.asarray(d["F"], float))
        p, m = F.shape
        n_p = dims.get("n_p", np.shape(d["G"])[1] if "G" in d and np.size(d["G"]) else 0)
        n_q = dims.get("n_q", np.shape(d["H"])[0] if "H" in d and np.size(d["H"]) else 0)
        n_w = dims.get("n_w", np.shape(d["E1"])[1] if "E1" in d and np.size(d["E1"]) else 0)
        return make_lfr(F, d.get("G"), d.get("H"), d.get("J"), d.get("E1"), d.get("E2"),
                        n_p=n_p, n_q=n_q, n_w=n_w)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Lfr":
        return cls.from_dict(json.loads(text))


def make_lfr(F, G=None, H=None, J=None, E1=None, E2=None, *, n_p: int | None = None,
             n_q: int | None = None, n_w: int | None = None) -> Lfr:
    """Validate and assemble an :class:`Lfr`.

    Omitted blocks are zero.  Channel counts are inferred from whichever
    blocks are given; pass ``n_p``/``n_q``/``n_w`` to disambiguate when all
    blocks touching a channel are omitted (they then default to zero).
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.ndim != 2:
        raise DimensionMismatch("F must be a matrix")
    p, m = F.shape

    def _dim(current, arr, axis):
        if arr is None or np.size(arr) == 0:
            return current
        got = np.atleast_2d(np.asarray(arr, float)).shape[axis]
        if current is not None and current != got:
            raise DimensionMismatch(f"inconsistent channel dimension {got} vs {current}")
        return got

    n_p = _dim(_dim(_dim(n_p, G, 1), J, 1), None, 0)
    n_q = _dim(_dim(_dim(n_q, H, 0), J, 0), E2, 0)
    n_w = _dim(_dim(n_w, E1, 1), E2, 1)
    n_p = 0 if n_p is None else n_p
    n_q = 0 if n_q is None else n_q
    n_w = 0 if n_w is None else n_w
    return Lfr(F=_as_matrix(F, "F", p, m), G=_as_matrix(G, "G", p, n_p),
               H=_as_matrix(H, "H", n_q, m), J=_as_matrix(J, "J", n_q, n_p),
               E1=_as_matrix(E1, "E1", p, n_w), E2=_as_matrix(E2, "E2", n_q, n_w))


def loop_shift(lfr: Lfr, shift) -> Lfr:
    """Rewrite ``p = Delta(q)`` as ``p = shift q + Delta'(q)``.

    Returns the LFR in which ``Delta'`` is the new feedback block.  The
    input-to-error map is unchanged; this is the classical loop
    transformation that moves a sector ``[mu, L]`` to ``[0, L - mu]``.
    """
    S = np.atleast_2d(np.asarray(shift, float))
    if S.size == 1 and lfr.n_p == lfr.n_q:
        S = float(S.item()) * np.eye(lfr.n_p)
    if S.shape != (lfr.n_p, lfr.n_q):
        raise DimensionMismatch(f"shift must be {lfr.n_p}x{lfr.n_q}")
    if not np.any(S):
        return lfr
    T = np.eye(lfr.n_q) - lfr.J @ S
    try:
        H = np.linalg.solve(T, lfr.H)
        J = np.linalg.solve(T, lfr.J)
        E2 = np.linalg.solve(T, lfr.E2)
    except np.linalg.LinAlgError as exc:
        raise DimensionMismatch("loop shift makes the LFR ill-posed") from exc
    GS = lfr.G @ S
    return Lfr(F=lfr.F + GS @ H, G=lfr.G + GS @ J, H=H, J=J, E1=lfr.E1 + GS @ E2, E2=E2)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

_CHANNEL_KINDS = {"lin": kernels.LIN, "sat": kernels.SAT, "tanh": kernels.TANH}


@dataclass(frozen=True)
class DeltaMap:
    """The feedback block ``p = Delta(q)``.

    Elementwise blocks built with :meth:`from_channels` carry a compact
    channel encoding that the compiled kernels understand and that
    serializes to JSON.  Arbitrary callables are accepted as well.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    n_q: int
    n_p: int
    family: str = "nonlinear"
    lipschitz: float | None = None
    channels: tuple | None = None
    metadata: dict = field(default_factory=dict)

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, float).reshape(self.n_q)
        out = np.asarray(self.fn(q), float).reshape(-1)
        if out.shape != (self.n_p,):
            raise DimensionMismatch(f"Delta returned shape {out.shape}, expected ({self.n_p},)")
        return out

    @property
    def kernel_encoding(self):
        if self.channels is None:
            return None
        kinds = np.array([_CHANNEL_KINDS[c[0]] for c in self.channels], dtype=np.int_)
        params = np.zeros((len(self.channels), 2))
        for i, c in enumerate(self.channels):
            params[i, : len(c) - 1] = c[1:]
        return kinds, params

    @classmethod
    def from_channels(cls, channels: Sequence[Sequence], **metadata) -> "DeltaMap":
        """Elementwise block from ``("lin", g)``, ``("sat", limit)`` or ``("tanh", a, b)``.

        ``("tanh", a, b)`` means ``a q + b tanh(q)``.
        """
        chans = tuple((str(c[0]),) + tuple(float(v) for v in c[1:]) for c in channels)
        for c in chans:
            if c[0] not in _CHANNEL_KINDS:
                raise ValueError(f"unknown channel kind {c[0]!r}")
            if c[0] == "sat" and not c[1] > 0:
                raise ValueError("saturation limit must be positive")
        kinds = np.array([_CHANNEL_KINDS[c[0]] for c in chans], dtype=np.int_)
        params = np.zeros((len(chans), 2))
        for i, c in enumerate(chans):
            params[i, : len(c) - 1] = c[1:]

        def fn(q, _k=kinds, _p=params):
            return kernels.python_backend.apply_channels(_k, _p, np.asarray(q, float))

        lip = 0.0
        for c in chans:
            if c[0] == "lin":
                lip = max(lip, abs(c[1]))
            elif c[0] == "sat":
                lip = max(lip, 1.0)
            else:
                lip = max(lip, abs(c[1]) + abs(c[2]))
        linear = all(c[0] == "lin" for c in chans)
        family = metadata.pop("family", "linear" if linear else "lipschitz")
        return cls(fn, len(chans), len(chans), family=family, lipschitz=lip, channels=chans,
                   metadata=metadata)

    @classmethod
    def linear(cls, D) -> "DeltaMap":
        D = np.atleast_2d(np.asarray(D, float))
        return cls(lambda q, _D=D: _D @ q, D.shape[1], D.shape[0], family="linear",
                   lipschitz=float(np.linalg.norm(D, 2)))

    def to_dict(self) -> dict[str, Any]:
        if self.channels is None:
            raise TypeError("only channel-encoded Delta maps are serializable")
        return {"channels": [list(c) for c in self.channels], "family": self.family}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DeltaMap":
        if "channels" not in d:
            raise KeyError("channels")
        extra = {"family": d["family"]} if d.get("family") else {}
        return cls.from_channels(d["channels"], **extra)


def eval_pi_delta(lfr: Lfr, delta: DeltaMap | None, u, w, *, damping: float = FP_DAMPING,
                  tol: float = FP_TOL, max_iter: int = FP_MAX_ITER) -> np.ndarray:
    """Evaluate the equilibrium error ``e = F u + G p + E1 w``.

    With ``J = 0`` the feedback block is applied once; otherwise the fixed
    point ``q = H u + J Delta(q) + E2 w`` is found by damped iteration.
    """
    u = np.asarray(u, float).reshape(lfr.m)
    w = np.asarray(w, float).reshape(lfr.n_w)
    e = lfr.F @ u + lfr.E1 @ w
    if lfr.n_p == 0 and lfr.n_q == 0:
        return e
    if delta is None:
        raise ValueError("a Delta map is required when the LFR has feedback channels")
    if (delta.n_q, delta.n_p) != (lfr.n_q, lfr.n_p):
        raise DimensionMismatch("Delta dimensions do not match the LFR")
    c = lfr.H @ u + lfr.E2 @ w
    enc = delta.kernel_encoding
    if enc is not None:
        _, p, iters, ok = kernels.fixed_point(c, lfr.J, enc[0], enc[1], damping, tol, max_iter)
    else:
        p, iters, ok = _fixed_point_generic(c, lfr.J, delta, damping, tol, max_iter)
    if not ok:
        raise FixedPointDivergence(f"fixed point did not converge in {iters} iterations")
    return e + lfr.G @ p


def _fixed_point_generic(c, J, delta, damping, tol, max_iter):
    q = c.copy()
    p = delta(q)
    if not np.any(J):
        return p, 0, True
    for it in range(1, max_iter + 1):
        target = c + J @ p
        if np.max(np.abs(target - q)) < tol:
            return p, it, True
        q = (1.0 - damping) * q + damping * target
        if not np.all(np.isfinite(q)):
            return p, it, False
        p = delta(q)
    return p, max_iter, False


class WellPosedness(enum.Enum):
    YES = "yes"
    NO = "no"
    UNVERIFIED = "unverified"

    def __bool__(self) -> bool:
        return self is WellPosedness.YES


def well_posedness_check(lfr: Lfr, family: str | DeltaMap = "nonlinear", *,
                         lipschitz: float | None = None, n_grid: int = 101,
                         margin: float = 1e-8) -> WellPosedness:
    """Decide whether ``q -> q - J Delta(q)`` is invertible for a Delta family.

    ``family`` is ``"scalar"`` (``Delta = delta I`` with ``|delta| <= 1``),
    ``"lipschitz"`` (any map with Lipschitz constant ``lipschitz``), or
    ``"nonlinear"`` (no usable structure).  A :class:`DeltaMap` supplies its
    own family and Lipschitz constant.
    """
    if isinstance(family, DeltaMap):
        lipschitz = family.lipschitz if lipschitz is None else lipschitz
        family = family.family if family.family != "linear" else "lipschitz"
    if not np.any(lfr.J):
        return WellPosedness.YES
    if family == "scalar":
        if lfr.n_p != lfr.n_q:
            return WellPosedness.NO
        eye = np.eye(lfr.n_q)
        for d in np.linspace(-1.0, 1.0, n_grid):
            if abs(np.linalg.det(eye - d * lfr.J)) <= margin:
                return WellPosedness.NO
        return WellPosedness.YES
    if family == "lipschitz" and lipschitz is not None:
        if np.linalg.norm(lfr.J, 2) * lipschitz < 1.0:
            return WellPosedness.YES
        return WellPosedness.UNVERIFIED
    return WellPosedness.UNVERIFIED


# ---------------------------------------------------------------------------
# multiplier cones
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamConstraint:
    """``const + sum_j theta_j coeffs[j]  >= 0`` (``> 0`` if strict)."""

    coeffs: tuple
    const: np.ndarray
    strict: bool = False

    def value(self, theta) -> np.ndarray:
        out = np.array(self.const, float)
        for t, C in zip(theta, self.coeffs):
            out = out + t * C
        return out


@dataclass(frozen=True)
class ConeSpec:
    dim_p: int
    dim_q: int
    basis: tuple
    constraints: tuple = ()
    name: str = ""

    def __post_init__(self):
        k = self.dim_p + self.dim_q
        for M in self.basis:
            if M.shape != (k, k):
                raise DimensionMismatch(f"basis matrix of shape {M.shape}, expected {(k, k)}")
            if not np.allclose(M, M.T, atol=1e-14):
                raise ValueError("basis matrices must be symmetric")

    @property
    def n_params(self) -> int:
        return len(self.basis)

    def element(self, theta) -> np.ndarray:
        theta = np.asarray(theta, float).reshape(self.n_params)
        k = self.dim_p + self.dim_q
        out = np.zeros((k, k))
        for t, M in zip(theta, self.basis):
            out += t * M
        return out

    def contains(self, theta, tol: float = 0.0) -> bool:
        for c in self.constraints:
            lo = float(np.linalg.eigvalsh(np.atleast_2d(c.value(theta)))[0])
            if lo < (tol if c.strict else -tol) or (c.strict and lo <= 0):
                return False
        return True

    def sample_interior(self, rng: np.random.Generator, max_tries: int = 10_000) -> np.ndarray:
        """Rejection-sample a parameter vector strictly inside the cone."""
        for _ in range(max_tries):
            theta = rng.standard_normal(self.n_params)
            if all(np.linalg.eigvalsh(np.atleast_2d(c.value(theta)))[0] > 1e-6
                   for c in self.constraints):
                return theta
        raise RuntimeError("could not sample an interior cone element")

    def affine(self, space: sdp.VarSpace, name: str = "theta"):
        """Return ``(Theta, blocks)`` with ``theta`` as new decision variables."""
        th = space.matrix(name, self.n_params, 1)
        Theta = sdp.Affine(np.zeros((self.dim_p + self.dim_q,) * 2))
        for j, M in enumerate(self.basis):
            Theta = Theta + sdp.smul(_row(th, j), M)
        blocks = []
        for c in self.constraints:
            expr = sdp.as_affine(c.const)
            for j, C in enumerate(c.coeffs):
                expr = expr + sdp.smul(_row(th, j), C)
            blocks.append(sdp.psd(expr, strict=c.strict, name=f"{name}-cone"))
        return Theta, blocks

    def quad_form(self, theta, dp, dq) -> float:
        v = np.concatenate([np.asarray(dp, float).reshape(-1), np.asarray(dq, float).reshape(-1)])
        return float(v @ self.element(theta) @ v)


def _row(vec: sdp.Affine, j: int) -> sdp.Affine:
    sel = np.zeros((1, vec.shape[0]))
    sel[0, j] = 1.0
    return sel @ vec


def _nonneg(n_params: int, j: int) -> ParamConstraint:
    coeffs = tuple(np.array([[1.0 if i == j else 0.0]]) for i in range(n_params))
    return ParamConstraint(coeffs, np.zeros((1, 1)))


@dataclass(frozen=True)
class ConePair:
    """A primal cone, its matched inverse cone, and how parameters correspond.

    ``to_dual(theta)`` maps primal parameters to dual parameters with
    ``dual.element(to_dual(theta)) == inv(primal.element(theta))``.
    ``shift`` is a loop transformation (see :func:`loop_shift`) that must be
    applied to the LFR before the dual cone can be used; ``analysis`` is an
    optional richer primal cone for re-certification.
    """

    primal: ConeSpec
    dual_spec: ConeSpec | None = None
    to_dual: Callable | None = None
    validity_conditions: tuple = ()
    shift: np.ndarray | None = None
    shifted_primal: ConeSpec | None = None
    analysis: ConeSpec | None = None
    descriptor: dict | None = None

    @property
    def dual(self) -> ConeSpec:
        if self.dual_spec is None:
            raise DualUnavailable("this cone has no matched dual cone")
        return self.dual_spec

    @property
    def has_dual(self) -> bool:
        return self.dual_spec is not None

    @property
    def analysis_cone(self) -> ConeSpec:
        return self.analysis if self.analysis is not None else self.primal

    @property
    def dual_primal(self) -> ConeSpec:
        """Primal cone the dual is matched to (after any loop shift)."""
        return self.shifted_primal if self.shifted_primal is not None else self.primal

    def check_signs(self, n_samples: int = 20, seed: int = 0, tol: float = 1e-12) -> None:
        """Raise :class:`DualConeInvalid` unless sampled elements satisfy the
        dualization sign conditions (``Theta_22 >= 0``, ``dual_11 <= 0``)."""
        dual = self.dual
        primal = self.dual_primal
        rng = np.random.default_rng(seed)
        k = primal.dim_p
        for _ in range(n_samples):
            th = primal.sample_interior(rng)
            T22 = primal.element(th)[k:, k:]
            if T22.size and np.linalg.eigvalsh(T22)[0] < -tol:
                raise DualConeInvalid("sampled primal element has an indefinite q-block")
            Td11 = dual.element(self.to_dual(th))[:k, :k]
            if Td11.size and np.linalg.eigvalsh(Td11)[-1] > tol:
                raise DualConeInvalid("sampled dual element has an indefinite p-block")


def lipschitz_cone(L: float, n_p: int, n_q: int) -> ConeSpec:
    if not L > 0:
        raise ValueError("L must be positive")
    M = np.diag(np.concatenate([-np.ones(n_p), (L ** 2) * np.ones(n_q)]))
    return ConeSpec(n_p, n_q, (M,), (_nonneg(1, 0),), name=f"lipschitz(L={L})")


def lipschitz_pair(L: float, n: int) -> ConePair:
    """Lipschitz cone with ``n_p = n_q = n`` and its inverse cone."""
    primal = lipschitz_cone(L, n, n)
    Md = np.diag(np.concatenate([-np.ones(n), np.ones(n) / L ** 2]))
    dual = ConeSpec(n, n, (Md,), (_nonneg(1, 0),), name=f"lipschitz-dual(L={L})")
    return ConePair(primal, dual, lambda th: 1.0 / np.asarray(th, float),
                    ("theta > 0",), descriptor={"kind": "lipschitz", "L": L, "n": n})


def sector_primal(mu: float, L: float) -> ConeSpec:
    if mu < 0 or L < mu:
        raise ValueError("need 0 <= mu <= L")
    M = np.array([[-2.0, mu + L], [mu + L, -2.0 * mu * L]])
    return ConeSpec(1, 1, (M,), (_nonneg(1, 0),), name=f"sector({mu},{L})")


def _sector_dual_basis(mu: float, L: float) -> np.ndarray:
    # inverse of [[-2, a], [a, -2 mu L]] with a = mu + L; det = -(L - mu)^2
    d = (L - mu) ** 2
    return np.array([[2.0 * mu * L, mu + L], [mu + L, 2.0]]) / d


def sector_cone(mu: float, L: float) -> ConePair:
    """Sector ``[mu, L]`` cone ``theta [[-2, mu+L], [mu+L, -2 mu L]]`` and its inverse.

    For ``mu > 0`` the primal q-block is negative, which breaks the sign
    conditions needed for dualization.  The returned pair then carries a
    loop shift by ``mu`` under which the dual is matched to the
    ``[0, L - mu]`` sector cone instead.
    """
    if mu < 0 or L < mu:
        raise ValueError("need 0 <= mu <= L")
    if L - mu <= 0:
        raise SingularBasis("sector cone with mu == L has a singular basis")
    primal = sector_primal(mu, L)
    desc = {"kind": "sector", "mu": mu, "L": L}
    if mu == 0:
        dual = ConeSpec(1, 1, (_sector_dual_basis(0.0, L),), (_nonneg(1, 0),),
                        name=f"sector-dual(0,{L})")
        return ConePair(primal, dual, lambda th: 1.0 / np.asarray(th, float),
                        ("mu < L", "theta > 0"), descriptor=desc)
    shifted = sector_primal(0.0, L - mu)
    dual = ConeSpec(1, 1, (_sector_dual_basis(0.0, L - mu),), (_nonneg(1, 0),),
                    name=f"sector-dual(0,{L - mu})")
    return ConePair(primal, dual, lambda th: 1.0 / np.asarray(th, float),
                    ("mu < L", "theta > 0", f"loop shift by mu={mu}"),
                    shift=np.array([[float(mu)]]), shifted_primal=shifted, descriptor=desc)


def sector_dual_unshifted(mu: float, L: float) -> ConeSpec:
    """Exact inverse of the ``[mu, L]`` sector basis (no loop shift)."""
    if L - mu <= 0:
        raise SingularBasis("sector cone with mu == L has a singular basis")
    return ConeSpec(1, 1, (_sector_dual_basis(mu, L),), (_nonneg(1, 0),),
                    name=f"sector-dual({mu},{L})")


def _sym_basis(k: int) -> list[np.ndarray]:
    out = []
    for i in range(k):
        for j in range(i, k):
            E = np.zeros((k, k))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return out


def _sym_from_params(params, k: int) -> np.ndarray:
    M = np.zeros((k, k))
    for t, E in zip(params, _sym_basis(k)):
        M += t * E
    return M


def _params_from_sym(M: np.ndarray) -> np.ndarray:
    iu = np.triu_indices(M.shape[0])
    return M[iu]


def parametric_cone(block_dim: int = 2, allow_skew: bool = False) -> ConePair:
    """Cone ``[[-Q, S], [S', Q]]`` for ``Delta = delta I`` with ``|delta| <= 1``.

    ``Q`` is a full symmetric positive-definite parameter.  With
    ``allow_skew`` (only for ``block_dim = 2``) ``S = [[0, s], [-s, 0]]``
    adds one free parameter; no matched dual exists then.
    """
    k = int(block_dim)
    if k < 1:
        raise ValueError("block_dim must be positive")
    if allow_skew and k != 2:
        raise ValueError("the skew-parameterized form is defined for block_dim = 2")
    sb = _sym_basis(k)
    Z = np.zeros((k, k))
    basis = [np.block([[-E, Z], [Z, E]]) for E in sb]
    if allow_skew:
        S = np.array([[0.0, 1.0], [-1.0, 0.0]])
        basis.append(np.block([[Z, S], [S.T, Z]]))
    qpd = ParamConstraint(tuple(sb) + ((Z,) if allow_skew else ()), np.zeros((k, k)), strict=True)
    primal = ConeSpec(k, k, tuple(basis), (qpd,),
                      name=f"parametric({k}{', skew' if allow_skew else ''})")
    desc = {"kind": "parametric", "block_dim": k, "allow_skew": bool(allow_skew)}
    if allow_skew:
        return ConePair(primal, None, None, ("dual requires s = 0",), descriptor=desc)
    dual_basis = tuple(np.block([[-E, Z], [Z, E]]) for E in sb)
    dual = ConeSpec(k, k, dual_basis, (ParamConstraint(tuple(sb), np.zeros((k, k)), True),),
                    name=f"parametric-dual({k})")

    def to_dual(theta, _k=k):
        Q = _sym_from_params(theta, _k)
        return _params_from_sym(np.linalg.inv(Q))

    return ConePair(primal, dual, to_dual, ("s = 0", "Q > 0"), descriptor=desc)


def _daug_matrix(A: np.ndarray, pa: int, B: np.ndarray, pb: int) -> np.ndarray:
    qa, qb = A.shape[0] - pa, B.shape[0] - pb
    k = pa + pb + qa + qb
    ia = np.r_[0:pa, pa + pb:pa + pb + qa]
    ib = np.r_[pa:pa + pb, pa + pb + qa:k]
    out = np.zeros((k, k))
    out[np.ix_(ia, ia)] = A
    out[np.ix_(ib, ib)] = B
    return out


def daug(A: np.ndarray, pa: int, B: np.ndarray, pb: int) -> np.ndarray:
    """Diagonal augmentation of two partitioned matrices (p-blocks first)."""
    return _daug_matrix(np.asarray(A, float), pa, np.asarray(B, float), pb)


def _lift_constraint(c: ParamConstraint, before: int, after: int) -> ParamConstraint:
    Z = np.zeros_like(c.const)
    return ParamConstraint((Z,) * before + tuple(c.coeffs) + (Z,) * after, c.const, c.strict)


def daug_cone(a: ConeSpec, b: ConeSpec) -> ConeSpec:
    za = np.zeros((a.dim_p + a.dim_q,) * 2)
    zb = np.zeros((b.dim_p + b.dim_q,) * 2)
    basis = [_daug_matrix(M, a.dim_p, zb, b.dim_p) for M in a.basis]
    basis += [_daug_matrix(za, a.dim_p, M, b.dim_p) for M in b.basis]
    cons = [_lift_constraint(c, 0, b.n_params) for c in a.constraints]
    cons += [_lift_constraint(c, a.n_params, 0) for c in b.constraints]
    return ConeSpec(a.dim_p + b.dim_p, a.dim_q + b.dim_q, tuple(basis), tuple(cons),
                    name=f"daug({a.name}, {b.name})")


def daug_pair(a: ConePair, b: ConePair) -> ConePair:
    """Compose two pairs blockwise.  The dual exists only if both duals do."""
    primal = daug_cone(a.primal, b.primal)
    analysis = None
    if a.analysis is not None or b.analysis is not None:
        analysis = daug_cone(a.analysis_cone, b.analysis_cone)
    desc = {"kind": "daug", "parts": [a.descriptor, b.descriptor]}
    conds = tuple(a.validity_conditions) + tuple(b.validity_conditions)
    if not (a.has_dual and b.has_dual):
        return ConePair(primal, None, None, conds, analysis=analysis, descriptor=desc)
    na = a.dual_primal.n_params
    dual = daug_cone(a.dual, b.dual)

    def to_dual(theta, _na=na, _a=a.to_dual, _b=b.to_dual):
        theta = np.asarray(theta, float)
        return np.concatenate([np.atleast_1d(_a(theta[:_na])), np.atleast_1d(_b(theta[_na:]))])

    shift = shifted = None
    if a.shift is not None or b.shift is not None:
        sa = a.shift if a.shift is not None else np.zeros((a.primal.dim_p, a.primal.dim_q))
        sb = b.shift if b.shift is not None else np.zeros((b.primal.dim_p, b.primal.dim_q))
        shift = np.block([[sa, np.zeros((sa.shape[0], sb.shape[1]))],
                          [np.zeros((sb.shape[0], sa.shape[1])), sb]])
        shifted = daug_cone(a.dual_primal, b.dual_primal)
    return ConePair(primal, dual, to_dual, conds, shift=shift, shifted_primal=shifted,
                    analysis=analysis, descriptor=desc)


# ---------------------------------------------------------------------------
# sampling harness
# ---------------------------------------------------------------------------

@dataclass
class IqcCheck:
    ok: bool
    n_checked: int
    witness: dict | None = None

    def __bool__(self) -> bool:
        return self.ok


def check_iqc_samples(cone: ConeSpec, delta: DeltaMap, n_samples: int = 1000, seed: int = 0,
                      theta=None, scale: float = 3.0, tol: float = 1e-10) -> IqcCheck:
    """Sample increment pairs and test the quadratic constraint.

    One interior cone element is drawn (unless ``theta`` is given) and the
    form ``[dp; dq]' Theta [dp; dq]`` is evaluated on ``n_samples`` random
    pairs ``(q, q')``.  Returns on the first value below ``-tol``.
    """
    if (delta.n_p, delta.n_q) != (cone.dim_p, cone.dim_q):
        raise DimensionMismatch("Delta and cone dimensions differ")
    rng = np.random.default_rng(seed)
    if theta is None:
        theta = cone.sample_interior(rng)
    Theta = cone.element(theta)
    for i in range(n_samples):
        q1 = scale * rng.standard_normal(cone.dim_q)
        q2 = scale * rng.standard_normal(cone.dim_q)
        v = np.concatenate([delta(q1) - delta(q2), q1 - q2])
        val = float(v @ Theta @ v)
        if val < -tol * (1.0 + v @ v):
            return IqcCheck(False, i + 1, {"q": q1, "q_prime": q2, "theta": np.asarray(theta),
                                           "value": val})
    return IqcCheck(True, n_samples)


# ---------------------------------------------------------------------------
# JSON catalog
# ---------------------------------------------------------------------------

def cone_from_dict(d: dict[str, Any]) -> ConePair:
    """Rebuild a cone pair from its catalog descriptor."""
    kind = d.get("kind")
    if kind == "sector":
        mu, L = float(d["mu"]), float(d["L"])
        if mu == L:
            return ConePair(sector_primal(mu, L), descriptor=dict(d))
        return sector_cone(mu, L)
    if kind == "lipschitz":
        return lipschitz_pair(float(d["L"]), int(d["n"]))
    if kind == "parametric":
        return parametric_cone(int(d.get("block_dim", 2)), bool(d.get("allow_skew", False)))
    if kind == "daug":
        parts = d["parts"]
        if len(parts) < 2:
            raise ValueError("daug needs at least two parts")
        pair = cone_from_dict(parts[0])
        for part in parts[1:]:
            pair = daug_pair(pair, cone_from_dict(part))
        if "analysis" in d:
            pair = _with_analysis(pair, cone_from_dict(d["analysis"]).primal)
        return pair
    raise ValueError(f"unknown cone kind {kind!r}")


def _with_analysis(pair: ConePair, analysis: ConeSpec) -> ConePair:
    from dataclasses import replace
    return replace(pair, analysis=analysis)


def cone_to_dict(pair: ConePair) -> dict[str, Any]:
    if pair.descriptor is None:
        raise TypeError("cone pair has no catalog descriptor")
    return dict(pair.descriptor)

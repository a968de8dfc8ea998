"""Gain design for the slow loop: Davison, LTI H-infinity, robust analysis and synthesis.

All LMIs are stated for the reduced dynamics ``eta' = -pi(K eta, w)`` with the
equilibrium map given either by DC gains (LTI) or by an :class:`~lowgain.lfr.Lfr`.
The recovery variable ``Y`` never enters the matrix inequalities, so it is
fixed to the identity and structure constraints act on ``Z`` directly.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import sdp
from .errors import (DimensionMismatch, DualUnavailable, Infeasible, NumericalFailure,
                     RankDeficient, StructureTooRestrictive)
from .lfr import ConePair, ConeSpec, Lfr, loop_shift
from .measures import contraction_rate
from .model import DcGains, is_hurwitz

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# structure and result records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructureSpec:
    """Sparsity pattern for ``K`` (``True`` marks a free entry)."""

    pattern: np.ndarray
    y_constraint: str = "none"
    y_blocks: tuple | None = None

    def __post_init__(self):
        pat = np.atleast_2d(np.asarray(self.pattern, dtype=bool))
        object.__setattr__(self, "pattern", pat)
        if not pat.any():
            raise ValueError("structure pattern has no free entries")
        if self.y_constraint not in ("none", "diagonal", "block"):
            raise ValueError(f"unknown y_constraint {self.y_constraint!r}")
        if self.y_constraint == "block":
            if not self.y_blocks or sum(self.y_blocks) != pat.shape[1]:
                raise ValueError("Y block sizes must sum to p")

    @classmethod
    def block_diagonal(cls, blocks: Sequence[tuple[int, int]]) -> "StructureSpec":
        """Block-diagonal ``K`` with blocks of the given (rows, cols) sizes."""
        m = sum(r for r, _ in blocks)
        p = sum(c for _, c in blocks)
        pat = np.zeros((m, p), dtype=bool)
        r0 = c0 = 0
        for r, c in blocks:
            pat[r0:r0 + r, c0:c0 + c] = True
            r0, c0 = r0 + r, c0 + c
        return cls(pat, "block", tuple(c for _, c in blocks))

    def to_dict(self) -> dict[str, Any]:
        return {"pattern": self.pattern.astype(int).tolist(), "y_constraint": self.y_constraint,
                "y_blocks": list(self.y_blocks) if self.y_blocks else None}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StructureSpec":
        if "blocks" in d:
            return cls.block_diagonal([tuple(b) for b in d["blocks"]])
        if "pattern" not in d:
            raise KeyError("pattern")
        blocks = d.get("y_blocks")
        return cls(np.asarray(d["pattern"], dtype=bool), d.get("y_constraint", "none"),
                   tuple(blocks) if blocks else None)


@dataclass
class SynthesisResult:
    K: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    gamma: float
    mode: str
    multiplier: dict = field(default_factory=dict)
    certificate: np.ndarray | None = None
    gamma_analysis: float | None = None
    status: str = "optimal"
    structure: StructureSpec | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "K": self.K.tolist(), "Y": self.Y.tolist(), "Z": self.Z.tolist(),
            "gamma": self.gamma, "gamma_analysis": self.gamma_analysis, "mode": self.mode,
            "multiplier": {k: np.asarray(v).tolist() for k, v in self.multiplier.items()},
            "P": None if self.certificate is None else self.certificate.tolist(),
            "status": self.status,
            "structure": None if self.structure is None else self.structure.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SynthesisResult":
        K = np.atleast_2d(np.asarray(d["K"], float))
        p = K.shape[1]
        return cls(K=K, Y=np.asarray(d.get("Y", np.eye(p)), float),
                   Z=np.atleast_2d(np.asarray(d.get("Z", K), float)), gamma=float(d["gamma"]),
                   mode=d.get("mode", "unknown"),
                   multiplier={k: np.asarray(v) for k, v in (d.get("multiplier") or {}).items()},
                   certificate=None if d.get("P") is None else np.asarray(d["P"], float),
                   gamma_analysis=d.get("gamma_analysis"), status=d.get("status", "optimal"),
                   structure=None if not d.get("structure") else StructureSpec.from_dict(d["structure"]))


@dataclass
class AnalysisResult:
    gamma: float
    P: np.ndarray
    theta: np.ndarray
    rho_s: float | None
    status: str
    min_eig: float

    def __iter__(self):
        return iter((self.gamma, self.P, self.theta))

    def to_dict(self) -> dict[str, Any]:
        return {"gamma": self.gamma, "P": self.P.tolist(), "theta": self.theta.tolist(),
                "rho_s": self.rho_s, "status": self.status, "min_eig": self.min_eig}


# ---------------------------------------------------------------------------
# Davison and LTI H-infinity
# ---------------------------------------------------------------------------

def davison_gain(dc: DcGains | np.ndarray) -> np.ndarray:
    """Moore-Penrose right inverse of ``G0``."""
    G0 = dc.G0 if isinstance(dc, DcGains) else np.atleast_2d(np.asarray(dc, float))
    U, s, Vt = np.linalg.svd(G0, full_matrices=False)
    keep = s > 1e-10 * s[0] if s.size else np.zeros(0, bool)
    if keep.sum() < G0.shape[0]:
        raise RankDeficient(f"G0 has rank {int(keep.sum())} < {G0.shape[0]} rows")
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def gain_basis(maps: Sequence[np.ndarray], m: int, p: int,
               structure: StructureSpec | None = None, rtol: float = 1e-10) -> list[np.ndarray]:
    """Basis of admissible ``Z`` modulo the null space of ``Z -> [M Z for M in maps]``.

    The LMIs see ``Z`` only through these products, so directions in the
    null space are unbounded in the SDP and are removed.  Every basis
    matrix is exactly zero outside the structure mask.
    """
    pattern = np.ones((m, p), bool) if structure is None else structure.pattern
    if pattern.shape != (m, p):
        raise DimensionMismatch(f"structure pattern {pattern.shape} does not match K {(m, p)}")
    free = np.argwhere(pattern)
    stacked = np.vstack([np.atleast_2d(M) for M in maps])
    cols = []
    for r, c in free:
        img = np.zeros((stacked.shape[0], p))
        img[:, c] = stacked[:, r]
        cols.append(img.ravel())
    A = np.array(cols).T
    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    basis = []
    for v in Vt[:rank]:
        B = np.zeros((m, p))
        B[free[:, 0], free[:, 1]] = v
        basis.append(B)
    return basis


def _z_variable(space: sdp.VarSpace, maps, m: int, p: int, structure: StructureSpec | None):
    return space.combination("Z", gain_basis(maps, m, p, structure), (m, p))


def lti_lmi(G0, Gw0, Z, gamma):
    """Left-hand side of the LTI H-infinity LMI (must be positive definite)."""
    p, n_w = Gw0.shape
    G0Z = G0 @ Z
    gI_w = sdp.smul(gamma, np.eye(n_w)) if isinstance(gamma, sdp.Affine) else gamma * np.eye(n_w)
    gI_p = sdp.smul(gamma, np.eye(p)) if isinstance(gamma, sdp.Affine) else gamma * np.eye(p)
    return sdp.bmat([[G0Z + G0Z.T, Gw0, -(G0Z.T)],
                     [Gw0.T, gI_w, -Gw0.T],
                     [-G0Z, -Gw0, gI_p]])


def _lti_problem(dc: DcGains, structure: StructureSpec | None,
                 gamma: float | None = None) -> sdp.LmiProblem:
    space = sdp.VarSpace()
    Z = _z_variable(space, [dc.G0], dc.m, dc.p, structure)
    g = space.scalar("gamma") if gamma is None else gamma
    lmi = lti_lmi(dc.G0, dc.Gw0, Z, g)
    return sdp.LmiProblem.build(space, [sdp.psd(lmi, strict=True, name="hinf")],
                                minimize=g if gamma is None else None)


def hinf_lti_synthesis(dc: DcGains, structure: StructureSpec | None = None) -> SynthesisResult:
    """Minimize the slow-loop H-infinity level over (structured) gains.

    The LMI is homogeneous in ``(Z, Gw0, gamma)`` and in ``(G0, 1/Z)``, so
    it is solved for unit-norm data and rescaled; this keeps the interior
    point iterations well conditioned.
    """
    a = float(np.linalg.norm(dc.G0, 2)) or 1.0
    b = float(np.linalg.norm(dc.Gw0, 2)) or 1.0
    dcn = DcGains(dc.G0 / a, dc.Gw0 / b)
    sol = sdp.solve(_lti_problem(dcn, structure))
    if not sol.ok:
        if structure is not None:
            free = sdp.solve(_lti_problem(dcn, None))
            if free.ok:
                raise StructureTooRestrictive(
                    f"structured problem {sol.status}; unstructured gamma={b * free.objective_value:.6g}",
                    solution=sol)
        raise Infeasible(f"LTI H-infinity synthesis {sol.status}: {sol.message}", solution=sol)
    gamma_n = float(sol.value("gamma")[0, 0])
    if sol.status != "optimal":
        # the unstructured optimum is |Gw0|, which is 1 after normalization
        gamma_n, sol = _refine(lambda g: _lti_problem(dcn, structure, g), sol, 1.0, hi=gamma_n)
    Z = sol.value("Z") * (b / a)
    K = Z.copy()
    if not is_hurwitz(-dc.G0 @ K):
        raise NumericalFailure("synthesized gain does not make -G0 K Hurwitz", solution=sol)
    return SynthesisResult(K=K, Y=np.eye(dc.p), Z=Z, gamma=b * gamma_n,
                           mode="lti-hinf", status=sol.status, structure=structure)


# ---------------------------------------------------------------------------
# robust analysis (primal, P-form)
# ---------------------------------------------------------------------------

def _check_conformal(lfr: Lfr, K: np.ndarray, cone: ConeSpec | None):
    if K.shape != (lfr.m, lfr.p):
        raise DimensionMismatch(f"K has shape {K.shape}, expected {(lfr.m, lfr.p)}")
    if cone is None:
        if not lfr.is_lti:
            raise ValueError("a cone is required when the LFR has feedback channels")
    elif (cone.dim_p, cone.dim_q) != (lfr.n_p, lfr.n_q):
        raise DimensionMismatch("cone block sizes do not match the LFR channels")


def _theta_or_empty(cone: ConeSpec | None, space: sdp.VarSpace, name: str):
    if cone is None:
        return np.zeros((0, 0)), []
    return cone.affine(space, name)


def analysis_lmi(lfr: Lfr, K, P, Theta, gamma2):
    """Quadratic-form LMI of the robust analysis (must be negative definite).

    ``P``, ``Theta`` and ``gamma2`` may be decision expressions or numbers.
    """
    FK, HK = lfr.F @ K, lfr.H @ K
    p, n_p, n_w = lfr.p, lfr.n_p, lfr.n_w
    Ip, Inp, Inw = np.eye(p), np.eye(n_p), np.eye(n_w)
    Z = np.zeros
    rows = [
        np.hstack([Ip, Z((p, n_p)), Z((p, n_w))]),
        np.hstack([-FK, -lfr.G, -lfr.E1]),
        np.hstack([Z((n_p, p)), Inp, Z((n_p, n_w))]),
        np.hstack([HK, lfr.J, lfr.E2]),
        np.hstack([Z((n_w, p)), Z((n_w, n_p)), Inw]),
        np.hstack([FK, lfr.G, lfr.E1]),
    ]
    k = n_p + lfr.n_q
    Theta = sdp.as_affine(Theta) if k else sdp.Affine(np.zeros((0, 0)))
    g2 = sdp.smul(gamma2, -Inw) if isinstance(gamma2, sdp.Affine) else -float(gamma2) * Inw
    mid = _middle_6(P, P, Theta, n_p, g2, Ip)
    return sdp.quad_form(rows, mid)


def _middle_6(P12, P21, Theta, n_p, W55, W66):
    """Middle factor diag([[0, P12], [P21, 0]], Theta, diag(W55, W66))."""
    Theta = sdp.as_affine(Theta)
    T11 = Theta_block(Theta, slice(0, n_p), slice(0, n_p))
    T12 = Theta_block(Theta, slice(0, n_p), slice(n_p, None))
    T21 = Theta_block(Theta, slice(n_p, None), slice(0, n_p))
    T22 = Theta_block(Theta, slice(n_p, None), slice(n_p, None))
    return [
        [None, P12, None, None, None, None],
        [P21, None, None, None, None, None],
        [None, None, T11, T12, None, None],
        [None, None, T21, T22, None, None],
        [None, None, None, None, W55, None],
        [None, None, None, None, None, W66],
    ]


def Theta_block(Theta: sdp.Affine, rs: slice, cs: slice) -> sdp.Affine:
    k = Theta.shape[0]
    R = np.eye(k)[rs]
    C = np.eye(k)[:, cs]
    return R @ Theta @ C


def _analysis_problem(lfr: Lfr, cone: ConeSpec | None, K: np.ndarray,
                      gamma: float | None = None) -> sdp.LmiProblem:
    space = sdp.VarSpace()
    P = space.symmetric("P", lfr.p)
    Theta, cone_blocks = _theta_or_empty(cone, space, "theta")
    g2 = space.scalar("gamma2") if gamma is None else gamma ** 2
    lmi = analysis_lmi(lfr, K, P, Theta, g2)
    blocks = [sdp.psd(-lmi, strict=True, name="analysis"), sdp.psd(P, strict=True, name="P")]
    return sdp.LmiProblem.build(space, blocks + cone_blocks,
                                minimize=g2 if gamma is None else None)


def robust_analysis(lfr: Lfr, cone: ConeSpec | None, K) -> AnalysisResult:
    """Smallest certified gain level and the certificate ``(P, theta)``.

    Two rescalings keep the interior-point iterates well conditioned.  ``K``
    is divided by ``t = ||[F K; H K]|| / ||[G, E1]||`` (a change of time scale) and
    the error channel by ``c = ||[F K/t, G, E1]||``.  ``P``, ``theta`` and
    ``gamma`` are mapped back afterwards.
    """
    K = np.atleast_2d(np.asarray(K, float))
    _check_conformal(lfr, K, cone)
    # K -> K / t is a time rescaling: gamma is unchanged and P picks up t.
    nfk = float(np.linalg.norm(np.vstack([lfr.F @ K, lfr.H @ K]), 2))
    nge = float(np.linalg.norm(np.hstack([lfr.G, lfr.E1]), 2))
    t = nfk / nge if nfk > 0 and nge > 0 else 1.0
    Kt = K / t
    c = float(np.linalg.norm(np.hstack([lfr.F @ Kt, lfr.G, lfr.E1]), 2)) or 1.0
    scaled = Lfr(lfr.F / c, lfr.G / c, lfr.H, lfr.J, lfr.E1 / c, lfr.E2)
    sol = sdp.solve(_analysis_problem(scaled, cone, Kt))
    if not sol.ok:
        raise Infeasible(f"robust analysis {sol.status}: {sol.message}", solution=sol)
    gamma_s = float(np.sqrt(max(sol.value("gamma2")[0, 0], 0.0)))
    if sol.status != "optimal":
        gamma_s, sol = _refine(lambda g: _analysis_problem(scaled, cone, Kt, g), sol, 0.0)
    Pv = t * c * sol.value("P")
    theta = c * c * sol.value("theta").reshape(-1) if cone is not None else np.zeros(0)
    gamma = c * gamma_s
    rho = contraction_rate(lfr.F @ K, Pv) if lfr.is_lti else None
    return AnalysisResult(gamma, Pv, theta, rho, sol.status, sol.min_block_eig)


# ---------------------------------------------------------------------------
# scaled primal and dual forms
# ---------------------------------------------------------------------------

def primal_scaled_lmi(lfr: Lfr, Z, Theta, gamma: float):
    """Scaled primal LMI in ``Z = K Y`` (must be negative definite)."""
    FZ, HZ = lfr.F @ Z, lfr.H @ Z
    p, n_p, n_w = lfr.p, lfr.n_p, lfr.n_w
    Ip = np.eye(p)
    O = np.zeros
    rows = [
        np.hstack([Ip, O((p, n_p)), O((p, n_w))]),
        np.hstack([-FZ, -lfr.G, -lfr.E1]),
        np.hstack([O((n_p, p)), np.eye(n_p), O((n_p, n_w))]),
        np.hstack([HZ, lfr.J, lfr.E2]),
        np.hstack([O((n_w, p)), O((n_w, n_p)), np.eye(n_w)]),
        np.hstack([FZ, lfr.G, lfr.E1]),
    ]
    Theta = sdp.as_affine(Theta) if n_p + lfr.n_q else sdp.Affine(np.zeros((0, 0)))
    mid = _middle_6(Ip, Ip, Theta, n_p, -np.eye(n_w), Ip / gamma ** 2)
    return sdp.quad_form(rows, mid)


def dual_lmi(lfr: Lfr, Z, Theta_t, gamma2):
    """Dualized synthesis LMI, affine in ``Z``, ``Theta~`` and ``gamma^2`` (negative definite)."""
    p, n_p, n_q, n_w = lfr.p, lfr.n_p, lfr.n_q, lfr.n_w
    FZ = lfr.F @ Z
    HZ = lfr.H @ Z
    Ip = np.eye(p)
    O = np.zeros
    r1 = sdp.bmat([[FZ.T, -(HZ.T), -(FZ.T)]])
    rows = [
        r1,
        np.hstack([Ip, O((p, n_q)), O((p, p))]),
        np.hstack([lfr.G.T, -lfr.J.T, -lfr.G.T]),
        np.hstack([O((n_q, p)), np.eye(n_q), O((n_q, p))]),
        np.hstack([lfr.E1.T, -lfr.E2.T, -lfr.E1.T]),
        np.hstack([O((p, p)), O((p, n_q)), Ip]),
    ]
    k = n_p + n_q
    neg_T = -sdp.as_affine(Theta_t) if k else sdp.Affine(np.zeros((0, 0)))
    g2 = sdp.smul(gamma2, -Ip) if isinstance(gamma2, sdp.Affine) else -float(gamma2) * Ip
    mid = _middle_6(-Ip, -Ip, neg_T, n_p, np.eye(n_w), g2)
    return sdp.quad_form(rows, mid)


def _dual_ready(lfr: Lfr, pair: ConePair | None) -> tuple[Lfr, ConeSpec | None]:
    if lfr.is_lti:
        return lfr, None
    if pair is None:
        raise ValueError("a cone pair is required when the LFR has feedback channels")
    if not pair.has_dual:
        raise DualUnavailable("cone pair has no matched dual cone")
    pair.check_signs()
    lfr_s = loop_shift(lfr, pair.shift) if pair.shift is not None else lfr
    return lfr_s, pair.dual


def _robust_problem(lfr_s: Lfr, dual: ConeSpec | None, structure: StructureSpec | None,
                    gamma: float | None = None):
    """Dual synthesis problem; minimizes ``gamma^2`` unless ``gamma`` is fixed."""
    space = sdp.VarSpace()
    Z = _z_variable(space, [lfr_s.F, lfr_s.H], lfr_s.m, lfr_s.p, structure)
    Tt, cone_blocks = _theta_or_empty(dual, space, "theta_tilde")
    g2 = space.scalar("gamma2") if gamma is None else gamma ** 2
    lmi = dual_lmi(lfr_s, Z, Tt, g2)
    blocks = [sdp.psd(-lmi, strict=True, name="dual")] + cone_blocks
    return sdp.LmiProblem.build(space, blocks, minimize=g2 if gamma is None else None)


def _refine(factory: Callable[[float], sdp.LmiProblem], sol: sdp.SdpSolution, lo: float,
            rel_tol: float = 1e-3, hi: float | None = None):
    """Geometric feasibility search below an uncertified optimum.

    Interior-point runs can stall when the infimum is only approached as
    the certificate grows without bound; fixed-level feasibility problems
    (``factory(gamma)``) do not suffer from this.  Very large levels can
    fail numerically (the strict margin grows with ``gamma^2``), so the
    bracket is built from the well-conditioned side first: upward from
    ``lo`` when a positive lower bound is known, downward from the verified
    level otherwise.  ``hi`` defaults to the square root of the solution's
    ``gamma2``.  Returns ``(gamma, solution)`` for the best feasible level
    found.
    """
    if hi is None:
        hi = float(np.sqrt(max(sol.value("gamma2")[0, 0], 0.0)))
    best = sol
    if lo > 0.0:
        g = lo * (1.0 + rel_tol)
        while g < hi:
            trial = sdp.solve(factory(g))
            if trial.ok:
                hi, best = g, trial
                break
            lo, g = g, 2.0 * g
    else:
        lo = hi
        while lo > 1e-12 * hi:
            g = 0.5 * lo
            trial = sdp.solve(factory(g))
            if not trial.ok:
                lo = g
                break
            hi = lo = g
            best = trial
        else:
            return hi, best
    while hi > lo * (1.0 + rel_tol):
        mid = float(np.sqrt(lo * hi))
        trial = sdp.solve(factory(mid))
        if trial.ok:
            hi, best = mid, trial
        else:
            lo = mid
    return hi, best


def _normalize(lfr: Lfr) -> tuple[Lfr, float, float]:
    """Rescale ``u`` and ``w`` so that ``F`` and ``E1`` have unit norm.

    With ``u = a u'`` and ``w = b w'`` the gains map back as ``K = a K'`` and
    ``gamma = gamma' / b``; multiplier cones are unaffected.
    """
    a = 1.0 / (float(np.linalg.norm(lfr.F, 2)) or 1.0)
    b = 1.0 / (float(np.linalg.norm(lfr.E1, 2)) or 1.0)
    scaled = Lfr(F=a * lfr.F, G=lfr.G, H=a * lfr.H, J=lfr.J, E1=b * lfr.E1, E2=b * lfr.E2)
    return scaled, a, b


def robust_synthesis(lfr: Lfr, pair: ConePair | None, structure: StructureSpec | None = None,
                     analyze: bool = True, rel_tol: float = 1e-3) -> SynthesisResult:
    """Synthesize ``K`` through the dualized LMI and re-certify it in primal form.

    Cones with a loop shift (sector ``[mu, L]`` with ``mu > 0``) are handled
    on the shifted LFR.  The returned ``gamma`` is the synthesis level and
    ``gamma_analysis`` the primal re-certification of the same ``K``.
    When the interior-point run stops short of a certified optimum the level
    is refined by feasibility bisection to relative tolerance ``rel_tol``.
    """
    lfr_s, dual = _dual_ready(lfr, pair)
    lfr_n, a, b = _normalize(lfr_s)
    sol = sdp.solve(_robust_problem(lfr_n, dual, structure))
    if not sol.ok:
        if structure is not None:
            free = sdp.solve(_robust_problem(lfr_n, dual, None))
            if free.ok:
                raise StructureTooRestrictive(f"structured robust synthesis {sol.status}",
                                              solution=sol)
        raise Infeasible(f"robust synthesis {sol.status}: {sol.message}", solution=sol)
    gamma_n = float(np.sqrt(max(sol.value("gamma2")[0, 0], 0.0)))
    if sol.status != "optimal":
        lo = 0.0
        if structure is not None:
            free = sdp.solve(_robust_problem(lfr_n, dual, None))
            if free.ok:
                lo = float(np.sqrt(max(free.value("gamma2")[0, 0], 0.0)))
        gamma_n, sol = _refine(lambda g: _robust_problem(lfr_n, dual, structure, g),
                               sol, lo, rel_tol)
    Z = a * sol.value("Z")
    K = Z.copy()
    gamma = gamma_n / b
    multiplier = {}
    if dual is not None:
        multiplier["theta_tilde"] = sol.value("theta_tilde").reshape(-1)
    res = SynthesisResult(K=K, Y=np.eye(lfr.p), Z=Z, gamma=gamma, mode="robust",
                          multiplier=multiplier, status=sol.status, structure=structure)
    if analyze:
        cone = None if lfr.is_lti else pair.analysis_cone
        try:
            ana = robust_analysis(lfr, cone, K)
        except Infeasible:
            log.warning("post-synthesis analysis failed to certify the gain")
            res.status = "analysis-failed"
        else:
            res.gamma_analysis = ana.gamma
            res.certificate = ana.P
            res.multiplier["theta"] = ana.theta
    return res


@dataclass
class CrosscheckResult:
    match: bool
    primal_status: str
    dual_status: str

    def __bool__(self) -> bool:
        return self.match


def primal_scaled_feasible(lfr: Lfr, cone: ConeSpec | None, Z, gamma: float) -> sdp.SdpSolution:
    space = sdp.VarSpace()
    Theta, cone_blocks = _theta_or_empty(cone, space, "theta")
    lmi = primal_scaled_lmi(lfr, Z, Theta, gamma)
    prob = sdp.LmiProblem.build(space, [sdp.psd(-lmi, strict=True, name="primal")] + cone_blocks)
    return sdp.solve(prob)


def dual_feasible(lfr: Lfr, dual: ConeSpec | None, Z, gamma: float) -> sdp.SdpSolution:
    space = sdp.VarSpace()
    Tt, cone_blocks = _theta_or_empty(dual, space, "theta_tilde")
    lmi = dual_lmi(lfr, Z, Tt, gamma ** 2)
    prob = sdp.LmiProblem.build(space, [sdp.psd(-lmi, strict=True, name="dual")] + cone_blocks)
    return sdp.solve(prob)


def dualization_crosscheck(lfr: Lfr, pair: ConePair | None, K, gamma: float,
                           Y=None) -> CrosscheckResult:
    """Compare feasibility of the scaled primal and dual forms at a fixed gain.

    ``Z = K Y`` is held fixed on both sides (``Y = I`` by default).
    """
    K = np.atleast_2d(np.asarray(K, float))
    Y = np.eye(lfr.p) if Y is None else np.asarray(Y, float)
    Z = K @ Y
    lfr_s, dual = _dual_ready(lfr, pair)
    primal = None if dual is None else pair.dual_primal
    ps = primal_scaled_feasible(lfr_s, primal, Z, gamma)
    ds = dual_feasible(lfr_s, dual, Z, gamma)
    return CrosscheckResult(ps.ok == ds.ok, ps.status, ds.status)

"""Matrix measures (logarithmic norms) and contraction certificates."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import sdp
from .errors import Infeasible, InvalidWeight, JacobianEvalFailure


@dataclass(frozen=True)
class NormKind:
    """Vector norm selector.

    ``kind`` is ``"one"``, ``"two"`` or ``"inf"``.  For ``"two"`` the optional
    ``weight`` is a positive-definite ``P`` giving ``|x| = sqrt(x' P x)``;
    for ``"one"``/``"inf"`` it is an invertible ``T`` giving ``|x| = |T x|``.
    """

    kind: str = "two"
    weight: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("one", "two", "inf"):
            raise InvalidWeight(f"unknown norm kind {self.kind!r}")
        if self.weight is None:
            return
        W = np.atleast_2d(np.asarray(self.weight, float))
        if W.shape[0] != W.shape[1]:
            raise InvalidWeight("weight must be square")
        if self.kind == "two":
            if not np.allclose(W, W.T, atol=1e-12 * (1 + np.abs(W).max())):
                raise InvalidWeight("weight P must be symmetric")
            try:
                np.linalg.cholesky(W)
            except np.linalg.LinAlgError:
                raise InvalidWeight("weight P must be positive definite") from None
        elif np.linalg.matrix_rank(W) < W.shape[0]:
            raise InvalidWeight("weight T must be invertible")
        object.__setattr__(self, "weight", W)

    def transform(self) -> np.ndarray | None:
        """Matrix ``T`` with ``|x| = |T x|`` in the unweighted norm."""
        if self.weight is None:
            return None
        if self.kind == "two":
            return np.linalg.cholesky(self.weight).T
        return self.weight


def _similar(A: np.ndarray, norm: NormKind) -> np.ndarray:
    T = norm.transform()
    if T is None:
        return A
    if T.shape != A.shape:
        raise InvalidWeight(f"weight shape {T.shape} does not match matrix {A.shape}")
    return T @ np.linalg.solve(T.T, A.T).T  # T A T^{-1}


def mu(A, norm: NormKind | str = "two") -> float:
    """Matrix measure of ``A`` for the given vector norm (closed forms)."""
    norm = NormKind(norm) if isinstance(norm, str) else norm
    A = np.atleast_2d(np.asarray(A, float))
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    M = _similar(A, norm)
    if norm.kind == "two":
        return float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])
    d = np.diag(M)
    off = np.abs(M) - np.diag(np.abs(d))
    if norm.kind == "inf":
        return float(np.max(d + off.sum(axis=1)))
    return float(np.max(d + off.sum(axis=0)))


def _power_top_eig(S: np.ndarray, iters: int = 20000, tol: float = 1e-15) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    n = S.shape[0]
    v = np.ones(n) / np.sqrt(n) + 1e-3 * np.arange(n)
    v /= np.linalg.norm(v)
    lam = float(v @ S @ v)
    for _ in range(iters):
        y = S @ v
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        v = y / ny
        lam_new = float(v @ S @ v)
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam = lam_new
    return lam


def mu_limit_oracle(A, norm: NormKind | str = "two", h: float = 1e-8) -> float:
    """``(|I + hA| - 1) / h`` with the induced norm evaluated directly."""
    if not 0.0 < h <= 1e-4:
        raise ValueError("h must lie in (0, 1e-4]")
    norm = NormKind(norm) if isinstance(norm, str) else norm
    A = np.atleast_2d(np.asarray(A, float))
    M = _similar(A, norm)
    n = M.shape[0]
    if norm.kind == "one":
        return float((np.max(np.abs(np.eye(n) + h * M).sum(axis=0)) - 1.0) / h)
    if norm.kind == "inf":
        return float((np.max(np.abs(np.eye(n) + h * M).sum(axis=1)) - 1.0) / h)
    # |I+hM|^2 = 1 + h * lambda_max(S) with S = (M + M' + h M'M); shift S to be PSD
    S = M + M.T + h * (M.T @ M)
    shift = np.max(np.abs(S).sum(axis=1))
    lam = _power_top_eig(S + shift * np.eye(n)) - shift
    return float((np.sqrt(1.0 + h * lam) - 1.0) / h)


@dataclass(frozen=True)
class ContractionCertificate:
    P: np.ndarray
    rho: float
    kind: str = "lmi-exact"
    residual: float = 0.0


def _lyap_rate_problem(M: np.ndarray, rho: float) -> sdp.LmiProblem:
    p = M.shape[0]
    space = sdp.VarSpace()
    P = space.symmetric("P", p)
    lyap = M.T @ P + P @ M - 2.0 * rho * P
    return sdp.LmiProblem.build(space, [sdp.psd(lyap, strict=True, name="lyap"),
                                        sdp.psd(P, strict=True, name="P")],
                                equalities=[(sdp.trace(P), float(p))])


def contraction_lmi_linear(M, rel_tol: float = 1e-3) -> ContractionCertificate:
    """Certify ``M'P + PM >= 2 rho P`` with ``P > 0``, ``trace P = p``.

    ``rho`` is maximized by bisection over feasibility problems.  Raises
    :class:`Infeasible` when no certificate exists, which happens exactly
    when ``-M`` fails to be Hurwitz.
    """
    M = np.atleast_2d(np.asarray(M, float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    base = sdp.solve(_lyap_rate_problem(M, 0.0))
    if not base.ok:
        raise Infeasible(f"no contraction certificate ({base.status}): -M is not Hurwitz",
                         solution=base)
    lo, best = 0.0, base
    hi = float(np.linalg.norm(M, "fro")) + 1e-12
    while hi - lo > rel_tol * max(hi, 1e-12):
        mid = 0.5 * (lo + hi)
        sol = sdp.solve(_lyap_rate_problem(M, mid))
        if sol.ok:
            lo, best = mid, sol
        else:
            hi = mid
    P = best.value("P")
    P = 0.5 * (P + P.T)
    res = float(np.linalg.eigvalsh(M.T @ P + P @ M - 2 * lo * P)[0])
    return ContractionCertificate(P, lo, "lmi-exact", residual=min(res, 0.0))


def contraction_rate(M, P) -> float:
    """Largest ``rho`` with ``M'P + PM >= 2 rho P`` for a given ``P > 0``."""
    M = np.atleast_2d(np.asarray(M, float))
    L = np.linalg.cholesky(np.asarray(P, float))
    Li = np.linalg.inv(L)
    S = Li @ (M.T @ P + P @ M) @ Li.T
    return float(0.5 * np.linalg.eigvalsh(0.5 * (S + S.T))[0])


def grid_contraction_check(jacobian: Callable, eta_box: Sequence[tuple[float, float]],
                           w_samples: Sequence, norm: NormKind | str = "two",
                           grid_density: int | Sequence[int] = 11):
    """Worst matrix measure of ``jacobian(eta, w)`` over a Cartesian grid.

    This is a sampled check, not a proof.  Returns ``(worst_mu, (eta, w))``;
    ties keep the first grid point in iteration order.
    """
    norm = NormKind(norm) if isinstance(norm, str) else norm
    box = [(float(a), float(b)) for a, b in eta_box]
    dens = [grid_density] * len(box) if np.isscalar(grid_density) else list(grid_density)
    if any(b <= a for a, b in box):
        raise ValueError("box must be nondegenerate")
    if any(d < 2 for d in dens):
        raise ValueError("grid density must be at least 2")
    axes = [np.linspace(a, b, d) for (a, b), d in zip(box, dens)]
    worst, arg = -np.inf, None
    for w in w_samples:
        w_arr = np.atleast_1d(np.asarray(w, float))
        for pt in itertools.product(*axes):
            eta = np.array(pt)
            try:
                J = np.atleast_2d(np.asarray(jacobian(eta, w_arr), float))
            except Exception as exc:
                raise JacobianEvalFailure((eta, w_arr), exc) from exc
            val = mu(J, norm)
            if val > worst:
                worst, arg = val, (eta, w_arr)
    return worst, arg

"""Plant and controller data, DC gains, and the slow (integrator) dynamics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import scipy.linalg

from .errors import (DimensionMismatch, EigFailure, NotHurwitz, RankDeficiencyAfterRetries,
                     SingularAtFrequency, SingularSolve)

DEFAULT_HURWITZ_MARGIN = 1e-9


def _mat(a, name: str, shape: tuple[int | None, int | None] | None = None) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    if shape is not None:
        for got, want, ax in zip(arr.shape, shape, "rc"):
            if want is not None and got != want:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
    return arr


@dataclass(frozen=True)
class StateSpace:
    """Dense LTI model ``x' = A x + B u + Bw w``, ``e = C x + D u + Dw w``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None
    Bw: np.ndarray | None = None
    Dw: np.ndarray | None = None

    def __post_init__(self):
        A = _mat(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch("A must be square")
        B = _mat(self.B, "B", (n, None)) if np.size(self.B) else np.zeros((n, 0))
        C = _mat(self.C, "C", (None, n)) if np.size(self.C) else np.zeros((0, n))
        m, p = B.shape[1], C.shape[0]
        D = np.zeros((p, m)) if self.D is None else _mat(self.D, "D", (p, m))
        if self.Bw is None:
            nw = 0 if self.Dw is None else np.atleast_2d(self.Dw).shape[1]
            Bw = np.zeros((n, nw))
        else:
            Bw = _mat(self.Bw, "Bw", (n, None))
        nw = Bw.shape[1]
        Dw = np.zeros((p, nw)) if self.Dw is None else _mat(self.Dw, "Dw", (p, nw))
        for name, val in dict(A=A, B=B, C=C, D=D, Bw=Bw, Dw=Dw).items():
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def n_w(self) -> int:
        return self.Bw.shape[1]

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k).tolist() for k in ("A", "B", "Bw", "C", "D", "Dw")}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StateSpace":
        for key in ("A", "B", "C"):
            if key not in d:
                raise KeyError(key)
        A = np.asarray(d["A"], float)
        n = A.shape[0]
        B = np.asarray(d["B"], float).reshape(n, -1)
        C = np.asarray(d["C"], float).reshape(-1, n)
        m, p = B.shape[1], C.shape[0]
        D = np.asarray(d["D"], float).reshape(p, m) if "D" in d else None
        Bw = np.asarray(d["Bw"], float).reshape(n, -1) if "Bw" in d else None
        if "Dw" in d:
            Dw = np.asarray(d["Dw"], float).reshape(p, -1)
            if Bw is None:
                Bw = np.zeros((n, Dw.shape[1]))
        else:
            Dw = None
        return cls(A=A, B=B, C=C, D=D, Bw=Bw, Dw=Dw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "StateSpace":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DcGains:
    G0: np.ndarray
    Gw0: np.ndarray

    @property
    def p(self) -> int:
        return self.G0.shape[0]

    @property
    def m(self) -> int:
        return self.G0.shape[1]

    @property
    def n_w(self) -> int:
        return self.Gw0.shape[1]


@dataclass(frozen=True)
class NonlinearPlant:
    """``x' = f(x, u, w)``, ``e = h(x, u, w)`` with declared dimensions."""

    n: int
    m: int
    n_w: int
    p: int
    f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    h: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    metadata: dict = field(default_factory=dict)

    def rhs(self, x, u, w) -> np.ndarray:
        out = np.asarray(self.f(x, u, w), float).reshape(-1)
        if out.shape != (self.n,):
            raise DimensionMismatch(f"f returned shape {out.shape}, expected ({self.n},)")
        return out

    def output(self, x, u, w) -> np.ndarray:
        out = np.asarray(self.h(x, u, w), float).reshape(-1)
        if out.shape != (self.p,):
            raise DimensionMismatch(f"h returned shape {out.shape}, expected ({self.p},)")
        return out

    @classmethod
    def from_state_space(cls, ss: StateSpace) -> "NonlinearPlant":
        A, B, Bw, C, D, Dw = ss.A, ss.B, ss.Bw, ss.C, ss.D, ss.Dw
        return cls(ss.n, ss.m, ss.n_w, ss.p,
                   f=lambda x, u, w: A @ x + B @ u + Bw @ w,
                   h=lambda x, u, w: C @ x + D @ u + Dw @ w,
                   metadata={"linear": ss})


@dataclass(frozen=True)
class IntegralController:
    """``eta' = -epsilon e``, ``u = K eta`` (or ``u = k(eta)``)."""

    gain: np.ndarray | Callable[[np.ndarray], np.ndarray]
    epsilon: float

    def __post_init__(self):
        if not self.epsilon >= 0.0:
            raise ValueError("epsilon must be nonnegative")
        if not callable(self.gain):
            K = np.atleast_2d(np.asarray(self.gain, float))
            K.setflags(write=False)
            object.__setattr__(self, "gain", K)

    @property
    def is_linear(self) -> bool:
        return not callable(self.gain)

    def control(self, eta: np.ndarray) -> np.ndarray:
        if self.is_linear:
            return self.gain @ eta
        return np.asarray(self.gain(eta), float).reshape(-1)


# ---------------------------------------------------------------------------

def is_hurwitz(A, margin: float = 0.0) -> bool:
    """True iff every eigenvalue of ``A`` has real part below ``-margin``."""
    A = np.atleast_2d(np.asarray(A, float))
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch("A must be square")
    if A.size == 0:
        return True
    try:
        eig = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigFailure(str(exc)) from exc
    return bool(np.max(eig.real) < -margin)


def _require_hurwitz(A: np.ndarray, margin: float | None) -> None:
    if margin is None:
        margin = DEFAULT_HURWITZ_MARGIN * max(1.0, np.linalg.norm(A, 2))
    if not is_hurwitz(A, margin):
        abscissa = np.max(np.linalg.eigvals(A).real)
        raise NotHurwitz(f"A is not Hurwitz (spectral abscissa {abscissa:.3e}, margin {margin:.1e})")


def dc_gains(ss: StateSpace, margin: float | None = None) -> DcGains:
    """``G(0) = -C A^{-1} B + D`` and ``Gw(0) = -C A^{-1} Bw + Dw`` via one LU factorization."""
    _require_hurwitz(ss.A, margin)
    try:
        lu = scipy.linalg.lu_factor(ss.A, check_finite=True)
        X = scipy.linalg.lu_solve(lu, np.hstack([ss.B, ss.Bw]))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSolve(str(exc)) from exc
    rhs = np.hstack([ss.B, ss.Bw])
    if np.linalg.norm(ss.A @ X - rhs) > 1e-8 * (1.0 + np.linalg.norm(rhs)):
        raise SingularSolve("linear solve residual too large")
    X_u, X_w = X[:, :ss.m], X[:, ss.m:]
    G0 = -ss.C @ X_u + ss.D
    Gw0 = -ss.C @ X_w + ss.Dw
    return DcGains(G0, Gw0)


def slow_dynamics_lti(dc: DcGains, K, epsilon: float) -> StateSpace:
    """Integrator dynamics with the plant replaced by its DC gain.

    State ``eta``, input ``w``, output ``e``:
    ``eta' = -eps G0 K eta - eps Gw0 w``, ``e = G0 K eta + Gw0 w``.
    """
    K = np.atleast_2d(np.asarray(K, float))
    if K.shape != (dc.m, dc.p):
        raise DimensionMismatch(f"K has shape {K.shape}, expected {(dc.m, dc.p)}")
    GK = dc.G0 @ K
    return StateSpace(A=-epsilon * GK, B=np.zeros((dc.p, 0)), C=GK,
                      D=np.zeros((dc.p, 0)), Bw=-epsilon * dc.Gw0, Dw=dc.Gw0)


@dataclass(frozen=True)
class FreqResponse:
    omega: np.ndarray
    sigma_max: np.ndarray

    @property
    def hinf_estimate(self) -> float:
        return float(np.max(self.sigma_max))

    def to_csv(self) -> str:
        lines = ["omega,sigma_max"]
        lines += [f"{w:.17g},{s:.17g}" for w, s in zip(self.omega, self.sigma_max)]
        return "\n".join(lines) + "\n"


def default_omega_grid(epsilon: float, n: int = 400, lo: float = 1e-3, hi: float = 1e4) -> np.ndarray:
    return np.logspace(np.log10(lo * epsilon), np.log10(hi * epsilon), n)


def sensitivity_response(dc: DcGains, K, epsilon: float, omega_grid=None) -> FreqResponse:
    """``sigma_max`` of ``S(jw) = jw (jw I + eps G0 K)^{-1} Gw0`` on a grid."""
    K = np.atleast_2d(np.asarray(K, float))
    if K.shape != (dc.m, dc.p):
        raise DimensionMismatch(f"K has shape {K.shape}, expected {(dc.m, dc.p)}")
    omega = default_omega_grid(epsilon) if omega_grid is None else np.asarray(omega_grid, float)
    if np.any(omega <= 0):
        raise ValueError("frequencies must be positive")
    M = epsilon * dc.G0 @ K
    eye = np.eye(dc.p)
    sig = np.empty(len(omega))
    for i, w in enumerate(omega):
        R = 1j * w * eye + M
        try:
            X = scipy.linalg.solve(R, dc.Gw0.astype(complex), check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise SingularAtFrequency(float(w)) from exc
        if not np.all(np.isfinite(X)) or np.linalg.cond(R) > 1e14:
            raise SingularAtFrequency(float(w))
        s = np.linalg.svd(1j * w * X, compute_uv=False)
        sig[i] = s[0] if s.size else 0.0
    return FreqResponse(omega, sig)


def random_stable_system(seed: int, n: int, m: int, p: int, n_w: int,
                         max_tries: int = 50) -> StateSpace:
    """Seeded random stable plant whose DC gain ``G(0)`` has full row rank.

    ``A`` is a Gaussian matrix shifted so its spectral abscissa lies in
    ``[-0.6, -0.1]``; ``D = 0`` and ``Dw = 0``.
    """
    if min(n, m, p, n_w) <= 0:
        raise ValueError("dimensions must be positive")
    if p > m:
        raise RankDeficiencyAfterRetries(f"G(0) is {p}x{m}; full row rank needs p <= m")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        A0 = rng.standard_normal((n, n)) / np.sqrt(n)
        abscissa = np.max(np.linalg.eigvals(A0).real)
        A = A0 - (abscissa + 0.1 + 0.5 * rng.random()) * np.eye(n)
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        Bw = rng.standard_normal((n, n_w))
        ss = StateSpace(A=A, B=B, C=C, Bw=Bw)
        G0 = dc_gains(ss).G0
        if np.linalg.svd(G0, compute_uv=False)[-1] > 1e-8:
            return ss
    raise RankDeficiencyAfterRetries(f"G(0) not full row rank after {max_tries} draws")

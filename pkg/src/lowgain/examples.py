"""Built-in instances: scalar pendulum, AGC power system, saturated/uncertain plant."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import sdp
from .errors import SectorViolation
from .lfr import (ConePair, DeltaMap, Lfr, _with_analysis, daug_cone, daug_pair, make_lfr,
                  parametric_cone, sector_cone, sector_primal)
from .model import NonlinearPlant, dc_gains, random_stable_system

# ---------------------------------------------------------------------------
# pendulum
# ---------------------------------------------------------------------------


def pendulum_plant(beta: float, gamma_dom: float = 1.4) -> NonlinearPlant:
    """``x' = -beta sin x + u - w``, ``e = x`` on ``|x| <= gamma_dom < pi/2``.

    The equilibrium map ``pi_x(u, w) = arcsin((u - w) / beta)`` is stored in
    ``metadata["pi_x"]`` together with the admissible input set.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if not 0 < gamma_dom < np.pi / 2:
        raise ValueError("gamma_dom must lie in (0, pi/2)")

    def f(x, u, w):
        return -beta * np.sin(x) + u - w

    def h(x, u, w):
        return np.asarray(x, float).copy()

    def pi_x(u, w):
        return np.arcsin((np.asarray(u, float) - np.asarray(w, float)) / beta)

    meta = {
        "name": "pendulum", "beta": beta, "gamma_dom": gamma_dom, "pi_x": pi_x,
        "pi": lambda u, w: pi_x(u, w),  # e = x at equilibrium
        "input_bound": beta * np.sin(gamma_dom),
    }
    return NonlinearPlant(1, 1, 1, 1, f, h, meta)


# ---------------------------------------------------------------------------
# AGC / power system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerSystemSpec:
    """Aggregate frequency model with generator responses ``phi_i``.

    ``phis`` default to the mid-sector slopes ``(mu_i + L_i) / 2``.
    """

    beta: float
    mus: tuple
    Ls: tuple
    phis: tuple | None = None
    channels: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        mus = tuple(float(v) for v in self.mus)
        Ls = tuple(float(v) for v in self.Ls)
        object.__setattr__(self, "mus", mus)
        object.__setattr__(self, "Ls", Ls)
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if len(mus) != len(Ls) or not mus:
            raise ValueError("mus and Ls must be nonempty and of equal length")
        if any(mu <= 0 or L < mu for mu, L in zip(mus, Ls)):
            raise ValueError("need 0 < mu_i <= L_i")
        if self.phis is None:
            slopes = [(mu + L) / 2 for mu, L in zip(mus, Ls)]
            object.__setattr__(self, "phis", tuple(_linear(s) for s in slopes))
            object.__setattr__(self, "channels", tuple(("lin", s) for s in slopes))
        elif len(self.phis) != len(mus):
            raise ValueError("one phi per generator is required")
        _check_sectors(self.phis, mus, Ls)

    @property
    def mu(self) -> float:
        return float(sum(self.mus))

    @property
    def L(self) -> float:
        return float(sum(self.Ls))

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    def total(self, eta):
        return sum(phi(eta) for phi in self.phis)

    @classmethod
    def heterogeneous(cls, beta: float = 1.0) -> "PowerSystemSpec":
        """Two generators: ``phi_1(s) = s`` and ``phi_2(s) = 0.5 s + 1.5 tanh(s)``.

        The second response has slope in ``(0.5, 2]``.
        """
        phis = (_linear(1.0), lambda s: 0.5 * s + 1.5 * np.tanh(s))
        return cls(beta, (1.0, 0.5), (1.0, 2.0), phis,
                   channels=(("lin", 1.0), ("tanh", 0.5, 1.5)))


def _linear(slope: float) -> Callable:
    return lambda s, _k=slope: _k * s


def _check_sectors(phis, mus, Ls, n: int = 2000, seed: int = 0, tol: float = 1e-9):
    rng = np.random.default_rng(seed)
    a = 10.0 * rng.standard_normal(n)
    b = a + rng.standard_normal(n) * rng.choice([1e-3, 1.0, 10.0], n)
    for i, (phi, mu, L) in enumerate(zip(phis, mus, Ls)):
        da = np.array([phi(x) for x in a]) - np.array([phi(x) for x in b])
        dq = a - b
        ok = np.abs(dq) > 0
        slope = da[ok] / dq[ok]
        if np.any(slope < mu - tol) or np.any(slope > L + tol):
            raise SectorViolation(f"phi_{i + 1} leaves the sector [{mu}, {L}]")


def power_system_gamma_star(beta: float, mu_total: float, L_total: float) -> float:
    if not (beta > 0 and 0 < mu_total <= L_total):
        raise ValueError("need beta > 0 and 0 < mu <= L")
    kappa = L_total / mu_total
    return float(np.sqrt((kappa + 1) ** 2 / (4 * kappa)) / beta)


def power_system_lmi(beta: float, mu_total: float, L_total: float, gamma: float) -> sdp.LmiProblem:
    """The scalar 3x3 performance LMI in ``(P, theta)``.

    Feasible exactly when ``gamma`` exceeds the closed-form bound.
    """
    space = sdp.VarSpace()
    P = space.scalar("P")
    th = space.scalar("theta")
    bi = 1.0 / beta
    mu, L = mu_total, L_total
    b11 = 2 * mu * L * th
    b21 = bi * P - (mu + L) * th
    b22 = 2 * th - bi ** 2
    b31 = -bi * P
    b32 = np.array([[bi ** 2]])
    b33 = np.array([[gamma ** 2 - bi ** 2]])
    M = sdp.bmat([[b11, b21, b31], [b21, b22, b32], [b31, b32, b33]])
    blocks = [sdp.psd(M, strict=True, name="3x3"), sdp.psd(P, strict=True, name="P"),
              sdp.psd(th, strict=True, name="theta")]
    return sdp.LmiProblem.build(space, blocks)


def power_system_lfr(spec: PowerSystemSpec) -> tuple[Lfr, DeltaMap, ConePair]:
    """LFR with ``K = 1``: ``e = (Delta(q) - w) / beta``, ``q = u``.

    ``Delta(q) = sum_i phi_i(q)`` lies in the sector ``[mu, L]`` with the
    summed constants.  When ``mu == L`` the sector basis is singular and the
    returned pair has no dual.
    """
    bi = 1.0 / spec.beta
    lfr = make_lfr([[0.0]], [[bi]], [[1.0]], [[0.0]], [[-bi]], [[0.0]])
    if spec.channels is not None and all(c[0] == "lin" for c in spec.channels):
        delta = DeltaMap.from_channels([("lin", sum(c[1] for c in spec.channels))])
    else:
        delta = DeltaMap(lambda q, _s=spec: np.array([_s.total(q[0])]), 1, 1,
                         family="lipschitz", lipschitz=spec.L)
    if spec.mu == spec.L:
        pair = ConePair(sector_primal(spec.mu, spec.L),
                        descriptor={"kind": "sector", "mu": spec.mu, "L": spec.L})
    else:
        pair = sector_cone(spec.mu, spec.L)
    return lfr, delta, pair


@dataclass(frozen=True)
class ReducedField:
    """Reduced vector field ``F_s(eta, w) = -pi(k(eta), w)`` with metadata."""

    field: Callable
    jacobian: Callable
    pi: Callable
    p: int
    n_w: int
    rho_s: float | None = None

    def __call__(self, eta, w):
        return self.field(eta, w)


def agc_reduced(spec: PowerSystemSpec) -> ReducedField:
    """``eta' = -(1/beta) sum_i phi_i(eta) + w / beta``; rate ``sum(mu_i) / beta``."""
    b = spec.beta

    def pi(u, w):
        u = np.atleast_1d(np.asarray(u, float))
        w = np.atleast_1d(np.asarray(w, float))
        return np.array([(spec.total(u[0]) - w[0]) / b])

    def field(eta, w):
        return -pi(eta, w)

    def jac(eta, w, h=1e-6):
        e0 = float(np.atleast_1d(eta)[0])
        d = sum((phi(e0 + h) - phi(e0 - h)) / (2 * h) for phi in spec.phis)
        return np.array([[-d / b]])

    return ReducedField(field, jac, pi, 1, 1, rho_s=spec.mu / b)


# ---------------------------------------------------------------------------
# saturated / uncertain plant
# ---------------------------------------------------------------------------

SATURATED_DIMS = (30, 7, 5, 5)
J_NORM_CAP = 0.45


def saturated_uncertain_example(seed: int = 1, delta: float = 0.0
                                ) -> tuple[Lfr, DeltaMap, ConePair]:
    """Random stable plant augmented with three uncertain channels.

    ``Delta(q) = (sat(q1), delta q2, delta q3)``.  The extra LFR blocks are
    uniform on ``[-0.3, 0.3]`` from a generator seeded independently of the
    plant; ``J`` is rescaled to spectral norm at most 0.45.
    """
    if not -1.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [-1, 1]")
    n, m, p, n_w = SATURATED_DIMS
    dc = dc_gains(random_stable_system(seed, n, m, p, n_w))
    rng = np.random.default_rng([seed, 30])
    G = rng.uniform(-0.3, 0.3, (p, 3))
    H = rng.uniform(-0.3, 0.3, (3, m))
    J = rng.uniform(-0.3, 0.3, (3, 3))
    E2 = rng.uniform(-0.3, 0.3, (3, n_w))
    nj = np.linalg.norm(J, 2)
    if nj > J_NORM_CAP:
        J = J * (J_NORM_CAP / nj)
    lfr = make_lfr(dc.G0, G, H, J, dc.Gw0, E2)
    dmap = DeltaMap.from_channels([("sat", 1.0), ("lin", delta), ("lin", delta)],
                                  delta=delta)
    pair = saturated_cone_pair()
    return lfr, dmap, pair


def saturated_cone_pair() -> ConePair:
    """Synthesis pair with ``s = 0`` and a skew-enabled analysis cone."""
    pair = daug_pair(sector_cone(0.0, 1.0), parametric_cone(2, allow_skew=False))
    analysis = daug_cone(sector_primal(0.0, 1.0), parametric_cone(2, allow_skew=True).primal)
    pair = _with_analysis(pair, analysis)
    desc = dict(pair.descriptor)
    desc["analysis"] = {"kind": "daug", "parts": [{"kind": "sector", "mu": 0.0, "L": 1.0},
                                                  {"kind": "parametric", "block_dim": 2,
                                                   "allow_skew": True}]}
    from dataclasses import replace
    return replace(pair, descriptor=desc)


def block_structure():
    """Block-diagonal pattern with ``K11`` 3x3 and ``K22`` 4x2."""
    from .synthesis import StructureSpec
    return StructureSpec.block_diagonal([(3, 3), (4, 2)])

"""Closed-loop and reduced-model simulation, incremental gains, epsilon matching.

All integrators restart at the knots of piecewise-constant disturbance
signals so no step ever straddles a discontinuity.  Each knot interval is
sampled on at least ``points_per_interval`` uniformly spaced points.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
import scipy.integrate
import scipy.optimize

from . import kernels
from .errors import (DimensionMismatch, FixedPointDivergence, NoCrossover, NonFiniteState,
                     StepSizeUnderflow, ZeroDenominator)
from .lfr import DeltaMap, Lfr, eval_pi_delta
from .model import (DcGains, IntegralController, NonlinearPlant, StateSpace,
                    default_omega_grid, sensitivity_response)

log = logging.getLogger(__name__)

RTOL = 1e-8
ATOL = 1e-10
POINTS_PER_INTERVAL = 512


# ---------------------------------------------------------------------------
# disturbance / reference signals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignalSpec:
    """Disturbance ``w(t)``: constant, piecewise-constant steps, or a callable.

    Step sequences are right-continuous: on ``[t_k, t_{k+1})`` the value is
    ``values[k]``.
    """

    kind: str
    value: np.ndarray | None = None
    times: np.ndarray | None = None
    values: np.ndarray | None = None
    fn: Callable[[float], Any] | None = field(default=None, compare=False)
    n_w: int | None = None

    def __post_init__(self):
        if self.kind == "constant":
            v = np.atleast_1d(np.asarray(self.value, float)).reshape(-1)
            object.__setattr__(self, "value", v)
            object.__setattr__(self, "n_w", v.size)
        elif self.kind == "steps":
            t = np.asarray(self.times, float).reshape(-1)
            vals = np.asarray(self.values, float)
            if vals.ndim == 1:
                vals = vals.reshape(-1, 1)
            if t.size == 0 or t.size != vals.shape[0]:
                raise ValueError("one value per knot is required")
            if t[0] != 0.0:
                raise ValueError("the first knot must be at t = 0")
            if np.any(np.diff(t) <= 0):
                raise ValueError("knot times must be strictly increasing")
            object.__setattr__(self, "times", t)
            object.__setattr__(self, "values", vals)
            object.__setattr__(self, "n_w", vals.shape[1])
        elif self.kind == "callable":
            if not callable(self.fn) or self.n_w is None:
                raise ValueError("callable signals need fn and n_w")
        else:
            raise ValueError(f"unknown signal kind {self.kind!r}")

    @classmethod
    def constant(cls, value) -> "SignalSpec":
        return cls("constant", value=value)

    @classmethod
    def steps(cls, knots: Sequence[tuple[float, Any]]) -> "SignalSpec":
        times = [k[0] for k in knots]
        values = [np.atleast_1d(np.asarray(k[1], float)) for k in knots]
        return cls("steps", times=times, values=np.vstack(values))

    @classmethod
    def from_callable(cls, fn: Callable[[float], Any], n_w: int) -> "SignalSpec":
        return cls("callable", fn=fn, n_w=int(n_w))

    @classmethod
    def step_sequence(cls, n_channels: int, period: float, amplitude: float = 1.0) -> "SignalSpec":
        """Channel ``i`` steps to ``amplitude`` at ``i * period`` and stays there."""
        knots = []
        for i in range(n_channels):
            v = np.zeros(n_channels)
            v[: i + 1] = amplitude
            knots.append((i * period, v))
        return cls.steps(knots)

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == "constant":
            return self.value
        if self.kind == "steps":
            k = int(np.searchsorted(self.times, t, side="right")) - 1
            return self.values[max(k, 0)]
        return np.atleast_1d(np.asarray(self.fn(t), float)).reshape(self.n_w)

    @property
    def piecewise_constant(self) -> bool:
        return self.kind != "callable"

    def knots(self, t_final: float) -> list[float]:
        """Discontinuities strictly inside ``(0, t_final)``."""
        if self.kind != "steps":
            return []
        return [float(t) for t in self.times[1:] if 0.0 < t < t_final]

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value.tolist()}
        if self.kind == "steps":
            return {"kind": "steps", "knots": [[float(t), v.tolist()]
                                               for t, v in zip(self.times, self.values)]}
        raise TypeError("callable signals cannot be serialized")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SignalSpec":
        kind = d.get("kind")
        if kind == "constant":
            return cls.constant(d["value"])
        if kind == "steps":
            return cls.steps([(k[0], k[1]) for k in d["knots"]])
        raise ValueError(f"unknown signal kind {kind!r}")


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class Segment:
    """Samples of one knot interval, both endpoints included."""

    t: np.ndarray
    eta: np.ndarray
    e: np.ndarray
    w: np.ndarray


@dataclass
class SimResult:
    """Trajectories stored channel-major: ``eta`` is ``p x T`` and so on.

    At a knot the stored sample is the right limit (post-jump).  The
    per-interval samples including left limits are kept in ``segments``.
    """

    t: np.ndarray
    eta: np.ndarray
    e: np.ndarray
    u: np.ndarray
    x: np.ndarray | None = None
    solver_stats: dict = field(default_factory=dict)
    segments: list = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        cols = [("t", self.t[None, :]), ("eta", self.eta), ("e", self.e), ("u", self.u)]
        if self.x is not None:
            cols.append(("x", self.x))
        header = ["t"]
        for name, arr in cols[1:]:
            header += [f"{name}_{i + 1}" for i in range(arr.shape[0])]
        data = np.vstack([arr for _, arr in cols]).T
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        np.savetxt(buf, data, delimiter=",", fmt="%.17g")
        return buf.getvalue()

    def final_error(self) -> np.ndarray:
        return self.e[:, -1]


def settling_report(result: SimResult, tol: float = 1e-4) -> list[dict]:
    """One record per knot interval: when ``max_i |e_i|`` last entered ``tol``.

    ``settled_at`` is ``None`` when the error is still above ``tol`` at the
    end of the interval.
    """
    events = []
    for seg in result.segments:
        err = np.max(np.abs(seg.e), axis=0)
        bad = np.nonzero(err >= tol)[0]
        if bad.size == 0:
            settled = float(seg.t[0])
        elif bad[-1] == err.size - 1:
            settled = None
        else:
            settled = float(seg.t[bad[-1] + 1])
        events.append({"start": float(seg.t[0]), "end": float(seg.t[-1]),
                       "settled_at": settled, "final_abs_error": float(err[-1])})
    return events


# ---------------------------------------------------------------------------
# integration core
# ---------------------------------------------------------------------------

def _intervals(w: SignalSpec, t_final: float, extra=()) -> list[tuple[float, float]]:
    cuts = sorted(set([0.0, float(t_final)] + w.knots(t_final)
                      + [float(t) for t in extra if 0.0 < t < t_final]))
    return list(zip(cuts[:-1], cuts[1:]))


def _rk4(rhs, a: float, b: float, y0: np.ndarray, max_step: float, n_min: int):
    n = max(int(math.ceil((b - a) / max_step - 1e-12)), n_min - 1, 1)
    h = (b - a) / n
    ts = a + h * np.arange(n + 1)
    ts[-1] = b
    ys = np.empty((n + 1, y0.size))
    ys[0] = y = y0.copy()
    for k in range(n):
        t = ts[k]
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(float(ts[k + 1]))
        ys[k + 1] = y
    return ts, ys, {"nfev": 4 * n, "n_accepted": n, "n_rejected": 0}


def _adaptive(rhs, a: float, b: float, y0: np.ndarray, rtol: float, atol: float, n_out: int):
    sol = scipy.integrate.solve_ivp(rhs, (a, b), y0, method="RK45", rtol=rtol, atol=atol,
                                    dense_output=True)
    if sol.status != 0:
        t_fail = float(sol.t[-1]) if sol.t.size else a
        raise StepSizeUnderflow(t_fail, sol.message)
    ts = np.linspace(a, b, n_out)
    ys = sol.sol(ts).T
    ys[-1] = sol.y[:, -1]
    if not np.all(np.isfinite(ys)):
        raise NonFiniteState(float(ts[np.argmin(np.all(np.isfinite(ys), axis=1))]))
    accepted = sol.t.size - 1
    # RK45 spends two evaluations on start-up and six per attempted step.
    rejected = max((sol.nfev - 2) // 6 - accepted, 0)
    return ts, ys, {"nfev": int(sol.nfev), "n_accepted": int(accepted),
                    "n_rejected": int(rejected)}


def _run(rhs_factory, outputs, w: SignalSpec, t_final: float, y0: np.ndarray, *,
         fixed_step, rtol, atol, points_per_interval, extra_knots=()):
    """Integrate interval by interval; ``outputs(t, Y, w)`` maps states to (eta, e, u, x)."""
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    stats = {"nfev": 0, "n_accepted": 0, "n_rejected": 0, "n_intervals": 0,
             "mode": "fixed" if fixed_step else "adaptive"}
    t_parts, out_parts, segments = [], [], []
    y = np.asarray(y0, float).copy()
    for a, b in _intervals(w, t_final, extra_knots):
        if w.piecewise_constant:
            wk = w(a)
            rhs = rhs_factory(lambda t, _w=wk: _w)
            wfun = lambda t, _w=wk: _w  # noqa: E731
        else:
            rhs = rhs_factory(w)
            wfun = w
        if fixed_step:
            ts, ys, st = _rk4(rhs, a, b, y, fixed_step, points_per_interval)
        else:
            ts, ys, st = _adaptive(rhs, a, b, y, rtol, atol, points_per_interval)
        for key in ("nfev", "n_accepted", "n_rejected"):
            stats[key] += st[key]
        stats["n_intervals"] += 1
        outs = outputs(ts, ys, wfun)
        wv = np.array([wfun(t) for t in ts]).T
        segments.append(Segment(ts, outs[0], outs[1], wv))
        if t_parts:
            # keep the post-jump sample at the shared knot
            t_parts[-1] = t_parts[-1][:-1]
            out_parts[-1] = tuple(None if o is None else o[:, :-1] for o in out_parts[-1])
        t_parts.append(ts)
        out_parts.append(outs)
        y = ys[-1].copy()
    t = np.concatenate(t_parts)
    cat = [None if out_parts[0][k] is None else np.hstack([o[k] for o in out_parts])
           for k in range(4)]
    return SimResult(t=t, eta=cat[0], e=cat[1], u=cat[2], x=cat[3], solver_stats=stats,
                     segments=segments)


# ---------------------------------------------------------------------------
# full closed loop
# ---------------------------------------------------------------------------

def simulate_closed_loop(plant: NonlinearPlant | StateSpace, ctrl: IntegralController,
                         w: SignalSpec, t_final: float, x0=None, eta0=None, *,
                         fixed_step: float | None = None, rtol: float = RTOL,
                         atol: float = ATOL,
                         points_per_interval: int = POINTS_PER_INTERVAL) -> SimResult:
    """``x' = f(x, K eta, w)``, ``eta' = -eps h(x, K eta, w)``."""
    if isinstance(plant, StateSpace):
        plant = NonlinearPlant.from_state_space(plant)
    n, p = plant.n, plant.p
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, float).reshape(-1)
    eta0 = np.zeros(p) if eta0 is None else np.asarray(eta0, float).reshape(-1)
    if x0.shape != (n,) or eta0.shape != (p,):
        raise DimensionMismatch("x0/eta0 do not match the plant dimensions")
    if w.n_w != plant.n_w:
        raise DimensionMismatch(f"signal has {w.n_w} channels, plant expects {plant.n_w}")
    if ctrl.is_linear and ctrl.gain.shape != (plant.m, p):
        raise DimensionMismatch(f"K has shape {ctrl.gain.shape}, expected {(plant.m, p)}")
    eps = float(ctrl.epsilon)

    def rhs_factory(wf):
        def rhs(t, z):
            x, eta = z[:n], z[n:]
            u = ctrl.control(eta)
            wt = wf(t)
            dz = np.concatenate([plant.rhs(x, u, wt), -eps * plant.output(x, u, wt)])
            if not np.all(np.isfinite(dz)):
                raise NonFiniteState(float(t))
            return dz
        return rhs

    def outputs(ts, Y, wf):
        X, H = Y[:, :n].T, Y[:, n:].T
        U = np.column_stack([ctrl.control(H[:, k]) for k in range(ts.size)])
        E = np.column_stack([plant.output(X[:, k], U[:, k], wf(t)) for k, t in enumerate(ts)])
        return H, E, U, X

    return _run(rhs_factory, outputs, w, t_final, np.concatenate([x0, eta0]),
                fixed_step=fixed_step, rtol=rtol, atol=atol,
                points_per_interval=points_per_interval)


# ---------------------------------------------------------------------------
# reduced dynamics
# ---------------------------------------------------------------------------

def _pi_function(system) -> tuple[Callable, Lfr | None, DeltaMap | None]:
    if isinstance(system, tuple):
        lfr, delta = system
        return (lambda u, w: eval_pi_delta(lfr, delta, u, w)), lfr, delta
    if isinstance(system, Lfr):
        return (lambda u, w: eval_pi_delta(system, None, u, w)), system, None
    if callable(system):
        pi = getattr(system, "pi", system)
        return (lambda u, w: np.atleast_1d(np.asarray(pi(u, w), float)).reshape(-1)), None, None
    raise TypeError("system must be (Lfr, DeltaMap), Lfr or a callable pi(u, w)")


def simulate_reduced(system, K, w: SignalSpec, eta0, t_final: float, *,
                     fixed_step: float | None = None, rtol: float = RTOL, atol: float = ATOL,
                     points_per_interval: int = POINTS_PER_INTERVAL,
                     extra_knots: Sequence[float] = ()) -> SimResult:
    """``eta' = -pi(K eta, w)``, ``e = pi(K eta, w)`` in slow time.

    ``system`` is ``(lfr, delta)``, an LTI ``Lfr`` or a callable ``pi(u, w)``
    (objects with a ``pi`` attribute, such as the reduced AGC field, are
    accepted too).  With ``fixed_step`` and an elementwise channel block the
    compiled RK4 kernel is used.
    """
    pi, lfr, delta = _pi_function(system)
    K = np.atleast_2d(np.asarray(K, float))
    eta0 = np.atleast_1d(np.asarray(eta0, float)).reshape(-1)
    if K.shape[1] != eta0.size:
        raise DimensionMismatch(f"K has {K.shape[1]} columns but eta0 has {eta0.size} entries")
    if lfr is not None and K.shape != (lfr.m, lfr.p):
        raise DimensionMismatch(f"K has shape {K.shape}, expected {(lfr.m, lfr.p)}")

    if (fixed_step and lfr is not None and w.piecewise_constant
            and (delta is None or delta.kernel_encoding is not None)):
        return _reduced_kernel(lfr, delta, K, w, eta0, t_final, fixed_step,
                               points_per_interval, extra_knots)

    def rhs_factory(wf):
        def rhs(t, eta):
            try:
                d = -pi(K @ eta, wf(t))
            except FixedPointDivergence:
                raise NonFiniteState(float(t))
            if not np.all(np.isfinite(d)):
                raise NonFiniteState(float(t))
            return d
        return rhs

    def outputs(ts, Y, wf):
        H = Y.T
        U = K @ H
        E = np.column_stack([pi(U[:, k], wf(t)) for k, t in enumerate(ts)])
        return H, E, U, None

    return _run(rhs_factory, outputs, w, t_final, eta0, fixed_step=fixed_step, rtol=rtol,
                atol=atol, points_per_interval=points_per_interval, extra_knots=extra_knots)


def _reduced_kernel(lfr: Lfr, delta: DeltaMap | None, K, w: SignalSpec, eta0, t_final,
                    fixed_step, points_per_interval, extra_knots) -> SimResult:
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    ivs = _intervals(w, t_final, extra_knots)
    n_steps = np.array([max(int(math.ceil((b - a) / fixed_step - 1e-12)),
                            points_per_interval - 1, 1) for a, b in ivs], dtype=np.int_)
    h_steps = np.array([(b - a) / k for (a, b), k in zip(ivs, n_steps)])
    w_values = np.vstack([w(a) for a, _ in ivs])
    if delta is None:
        kinds, params = np.zeros(lfr.n_q, dtype=np.int_), np.zeros((lfr.n_q, 2))
    else:
        kinds, params = delta.kernel_encoding
    FK, HK = lfr.F @ K, lfr.H @ K
    eta, e, status = kernels.rk4_lfr(eta0, w_values, n_steps, h_steps, FK, lfr.G, lfr.E1,
                                     HK, lfr.J, lfr.E2, kinds, params, 0.5, 1e-12, 10000)
    starts = np.concatenate([[0], np.cumsum(n_steps)])
    if status:
        bad = int(np.argmax(np.any(~np.isfinite(eta), axis=1)))
        raise NonFiniteState(float(_row_time(ivs, h_steps, starts, bad)))
    segments, t_parts, eta_parts, e_parts = [], [], [], []
    for i, ((a, b), h, k) in enumerate(zip(ivs, h_steps, n_steps)):
        rows = slice(starts[i], starts[i + 1] + 1)
        t_i = a + h * np.arange(k + 1)
        t_i[-1] = b
        eta_i = eta[rows].T.copy()
        e_i = e[rows].T.copy()
        if i > 0:
            # the shared knot row holds the left limit; the interval starts post-jump
            e_i[:, 0] = eval_pi_delta(lfr, delta, K @ eta_i[:, 0], w_values[i])
        segments.append(Segment(t_i, eta_i, e_i, np.tile(w_values[i][:, None], (1, k + 1))))
        keep = k + 1 if i == len(ivs) - 1 else k
        t_parts.append(t_i[:keep])
        eta_parts.append(eta_i[:, :keep])
        e_parts.append(e_i[:, :keep])
    H = np.hstack(eta_parts)
    stats = {"nfev": int(4 * n_steps.sum()), "n_accepted": int(n_steps.sum()), "n_rejected": 0,
             "n_intervals": len(ivs), "mode": "fixed", "backend": kernels.BACKEND}
    return SimResult(t=np.concatenate(t_parts), eta=H, e=np.hstack(e_parts), u=K @ H,
                     solver_stats=stats, segments=segments)


def _row_time(ivs, h_steps, starts, row: int) -> float:
    i = int(np.searchsorted(starts, row, side="right")) - 1
    i = min(i, len(ivs) - 1)
    return ivs[i][0] + h_steps[i] * (row - starts[i])


# ---------------------------------------------------------------------------
# incremental gain
# ---------------------------------------------------------------------------

def _segment_energy(seg_a: Segment, seg_b: Segment, attr: str) -> float:
    d = getattr(seg_a, attr) - getattr(seg_b, attr)
    return float(scipy.integrate.trapezoid(np.sum(d * d, axis=0), seg_a.t))


def incremental_gain_estimate(system, K, w_a: SignalSpec, w_b: SignalSpec, eta0_a,
                              eta0_b=None, t_final: float = 50.0, **opts) -> float:
    """Empirical ``sqrt(int |e_a - e_b|^2 / int |w_a - w_b|^2)`` over ``[0, t_final]``.

    Both runs share one time grid (the union of the knots of the two
    signals), and the energies are integrated segment by segment so step
    discontinuities never fall inside a trapezoid.
    """
    eta0_b = eta0_a if eta0_b is None else eta0_b
    knots = sorted(set(w_a.knots(t_final)) | set(w_b.knots(t_final)))
    ra = simulate_reduced(system, K, w_a, eta0_a, t_final, extra_knots=knots, **opts)
    rb = simulate_reduced(system, K, w_b, eta0_b, t_final, extra_knots=knots, **opts)
    num = sum(_segment_energy(sa, sb, "e") for sa, sb in zip(ra.segments, rb.segments))
    den = sum(_segment_energy(sa, sb, "w") for sa, sb in zip(ra.segments, rb.segments))
    if not den > 0:
        raise ZeroDenominator("w_a and w_b coincide on the horizon")
    return math.sqrt(num / den)


# ---------------------------------------------------------------------------
# bandwidth matching
# ---------------------------------------------------------------------------

def crossover_frequency(dc: DcGains, K, epsilon: float) -> float:
    """First frequency where ``sigma_max(S)`` reaches ``||Gw0|| / sqrt(2)``."""
    level = np.linalg.norm(dc.Gw0, 2) / math.sqrt(2.0)
    if not level > 0:
        raise NoCrossover("Gw0 is zero")
    omega = default_omega_grid(epsilon, n=600, lo=1e-4, hi=1e4)
    sig = sensitivity_response(dc, K, epsilon, omega).sigma_max
    above = np.nonzero(sig >= level)[0]
    if above.size == 0 or above[0] == 0:
        raise NoCrossover("sigma_max never crosses the 3 dB level on the grid")
    i = int(above[0])

    def g(logw):
        return sensitivity_response(dc, K, epsilon, [math.exp(logw)]).sigma_max[0] - level

    return math.exp(scipy.optimize.brentq(g, math.log(omega[i - 1]), math.log(omega[i]),
                                          xtol=1e-12, rtol=1e-12))


def match_bandwidth_epsilon(dc: DcGains, K_ref, eps_ref: float, K_new,
                            rel_tol: float = 1e-3) -> float:
    """Smallest ``eps`` whose crossover for ``K_new`` matches ``K_ref`` at ``eps_ref``."""
    target = crossover_frequency(dc, K_ref, eps_ref)
    lo = hi = float(eps_ref)
    while crossover_frequency(dc, K_new, hi) < target:
        hi *= 2.0
        if hi > eps_ref * 2.0 ** 40:
            raise NoCrossover("could not bracket the matching epsilon")
    while crossover_frequency(dc, K_new, lo) > target:
        lo /= 2.0
        if lo < eps_ref * 2.0 ** -40:
            raise NoCrossover("could not bracket the matching epsilon")
    while hi > lo * (1.0 + rel_tol):
        mid = math.sqrt(lo * hi)
        if crossover_frequency(dc, K_new, mid) < target:
            lo = mid
        else:
            hi = mid
    return hi

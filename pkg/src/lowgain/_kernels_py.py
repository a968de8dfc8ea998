"""Pure-Python reference implementations of the compiled kernels.

Both backends expose the same two functions with the same argument order.
Channel nonlinearities are elementwise and encoded as integer kinds:

* ``0`` linear, ``phi(q) = a q``
* ``1`` saturation, ``phi(q) = clip(q, -a, a)``
* ``2`` affine plus tanh, ``phi(q) = a q + b tanh(q)``
"""
from __future__ import annotations

import numpy as np

LIN, SAT, TANH = 0, 1, 2


def apply_channels(kinds, params, q):
    out = np.empty_like(q)
    for i, k in enumerate(kinds):
        a, b = params[i, 0], params[i, 1]
        if k == LIN:
            out[i] = a * q[i]
        elif k == SAT:
            out[i] = min(max(q[i], -a), a)
        else:
            out[i] = a * q[i] + b * np.tanh(q[i])
    return out


def fixed_point(c, J, kinds, params, damping, tol, max_iter):
    """Solve ``q = c + J phi(q)`` by damped iteration.

    Returns ``(q, p, iterations, converged)`` where ``p = phi(q)``.
    """
    c = np.asarray(c, float)
    kinds = np.asarray(kinds)
    params = np.asarray(params, float)
    q = c.copy()
    p = apply_channels(kinds, params, q)
    if not np.any(J):
        return q, p, 0, True
    for it in range(1, max_iter + 1):
        target = c + J @ p
        if np.max(np.abs(target - q)) < tol:
            return q, p, it, True
        q = (1.0 - damping) * q + damping * target
        if not np.all(np.isfinite(q)):
            return q, p, it, False
        p = apply_channels(kinds, params, q)
    return q, p, max_iter, False


def _error(eta, w, FK, G, E1, HK, J, E2, kinds, params, damping, tol, max_iter):
    c = HK @ eta + E2 @ w
    _, p, _, ok = fixed_point(c, J, kinds, params, damping, tol, max_iter)
    if not ok:
        return None
    return FK @ eta + G @ p + E1 @ w


def rk4_lfr(eta0, w_values, n_steps, h_steps, FK, G, E1, HK, J, E2, kinds, params,
            damping, tol, max_iter):
    """Fixed-step RK4 for ``eta' = -e(eta, w)`` with piecewise-constant ``w``.

    Interval ``i`` uses ``w_values[i]`` for ``n_steps[i]`` steps of size
    ``h_steps[i]``.  Returns ``(eta, e, status)``: ``eta`` and ``e`` hold one
    row per grid point (initial point plus every step); ``status`` is 0 on
    success, 1 if the inner fixed point failed, 2 on a non-finite state.  On
    failure the rows after the failing step are left as NaN.
    """
    total = int(np.sum(n_steps))
    p = eta0.shape[0]
    eta_out = np.full((total + 1, p), np.nan)
    e_out = np.full((total + 1, p), np.nan)
    eta = np.array(eta0, float)
    args = (FK, G, E1, HK, J, E2, kinds, params, damping, tol, max_iter)
    eta_out[0] = eta
    e0 = _error(eta, w_values[0], *args)
    if e0 is None:
        return eta_out, e_out, 1
    e_out[0] = e0
    row = 0
    for i in range(len(n_steps)):
        w = w_values[i]
        h = h_steps[i]
        for _ in range(n_steps[i]):
            k1 = _error(eta, w, *args)
            k2 = None if k1 is None else _error(eta - 0.5 * h * k1, w, *args)
            k3 = None if k2 is None else _error(eta - 0.5 * h * k2, w, *args)
            k4 = None if k3 is None else _error(eta - h * k3, w, *args)
            if k4 is None:
                return eta_out, e_out, 1
            eta = eta - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(eta)):
                return eta_out, e_out, 2
            row += 1
            eta_out[row] = eta
            e_row = _error(eta, w, *args)
            if e_row is None:
                return eta_out, e_out, 1
            e_out[row] = e_row
    return eta_out, e_out, 0

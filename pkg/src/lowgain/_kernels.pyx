# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: damped LFR fixed point and fixed-step RK4 on reduced LFR dynamics.

Signatures and semantics mirror ``_kernels_py`` exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, fabs, isfinite

cnp.import_array()


cdef inline double _phi(long kind, double a, double b, double q) noexcept nogil:
    if kind == 0:
        return a * q
    elif kind == 1:
        if q > a:
            return a
        if q < -a:
            return -a
        return q
    return a * q + b * tanh(q)


cdef inline void _channels(const long[::1] kinds, const double[:, ::1] params,
                           const double[::1] q, double[::1] p) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(q.shape[0]):
        p[i] = _phi(kinds[i], params[i, 0], params[i, 1], q[i])


cdef inline bint _any_nonzero(const double[:, ::1] J) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(J.shape[0]):
        for j in range(J.shape[1]):
            if J[i, j] != 0.0:
                return True
    return False


cdef int _solve(const double[::1] c, const double[:, ::1] J, const long[::1] kinds,
                const double[:, ::1] params, double damping, double tol, long max_iter,
                double[::1] q, double[::1] p, double[::1] tmp, long* iters) noexcept nogil:
    """Return 1 on convergence, 0 otherwise."""
    cdef Py_ssize_t n = c.shape[0], np_ = J.shape[1], i, j
    cdef long it
    cdef double s, res
    for i in range(n):
        q[i] = c[i]
    _channels(kinds, params, q, p)
    iters[0] = 0
    if not _any_nonzero(J):
        return 1
    for it in range(1, max_iter + 1):
        res = 0.0
        for i in range(n):
            s = c[i]
            for j in range(np_):
                s = s + J[i, j] * p[j]
            tmp[i] = s
            if fabs(s - q[i]) > res:
                res = fabs(s - q[i])
        iters[0] = it
        if res < tol:
            return 1
        for i in range(n):
            q[i] = (1.0 - damping) * q[i] + damping * tmp[i]
            if not isfinite(q[i]):
                return 0
        _channels(kinds, params, q, p)
    iters[0] = max_iter
    return 0


def fixed_point(c, J, kinds, params, double damping, double tol, long max_iter):
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[:, ::1] Jv = np.ascontiguousarray(J, dtype=np.float64)
    cdef long[::1] kv = np.ascontiguousarray(kinds, dtype=np.int_)
    cdef double[:, ::1] pv = np.ascontiguousarray(params, dtype=np.float64).reshape(-1, 2)
    n = cv.shape[0]
    q = np.empty(n)
    p = np.empty(n)
    tmp = np.empty(n)
    cdef long iters = 0
    cdef int ok
    cdef double[::1] qv = q, pp = p, tv = tmp
    with nogil:
        ok = _solve(cv, Jv, kv, pv, damping, tol, max_iter, qv, pp, tv, &iters)
    return q, p, int(iters), bool(ok)


cdef int _error(const double[::1] eta, const double[::1] w,
                const double[:, ::1] FK, const double[:, ::1] G, const double[:, ::1] E1,
                const double[:, ::1] HK, const double[:, ::1] J, const double[:, ::1] E2,
                const long[::1] kinds, const double[:, ::1] params,
                double damping, double tol, long max_iter,
                double[::1] c, double[::1] q, double[::1] p, double[::1] tmp,
                double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef Py_ssize_t nq = HK.shape[0], ne = FK.shape[0]
    cdef double s
    cdef long iters = 0
    for i in range(nq):
        s = 0.0
        for j in range(eta.shape[0]):
            s = s + HK[i, j] * eta[j]
        for j in range(w.shape[0]):
            s = s + E2[i, j] * w[j]
        c[i] = s
    if nq > 0:
        if not _solve(c, J, kinds, params, damping, tol, max_iter, q, p, tmp, &iters):
            return 0
    for i in range(ne):
        s = 0.0
        for j in range(eta.shape[0]):
            s = s + FK[i, j] * eta[j]
        for j in range(p.shape[0]):
            s = s + G[i, j] * p[j]
        for j in range(w.shape[0]):
            s = s + E1[i, j] * w[j]
        out[i] = s
    return 1


def rk4_lfr(eta0, w_values, n_steps, h_steps, FK, G, E1, HK, J, E2, kinds, params,
            double damping, double tol, long max_iter):
    cdef double[:, ::1] W = np.ascontiguousarray(w_values, dtype=np.float64)
    cdef long[::1] NS = np.ascontiguousarray(n_steps, dtype=np.int_)
    cdef double[::1] HS = np.ascontiguousarray(h_steps, dtype=np.float64)
    cdef double[:, ::1] FKv = np.ascontiguousarray(FK, dtype=np.float64)
    cdef double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef double[:, ::1] E1v = np.ascontiguousarray(E1, dtype=np.float64)
    cdef double[:, ::1] HKv = np.ascontiguousarray(HK, dtype=np.float64)
    cdef double[:, ::1] Jv = np.ascontiguousarray(J, dtype=np.float64)
    cdef double[:, ::1] E2v = np.ascontiguousarray(E2, dtype=np.float64)
    cdef long[::1] kv = np.ascontiguousarray(kinds, dtype=np.int_)
    cdef double[:, ::1] pv = np.ascontiguousarray(params, dtype=np.float64).reshape(-1, 2)

    cdef Py_ssize_t n = FKv.shape[0], nq = HKv.shape[0], npp = Gv.shape[1]
    cdef long total = 0
    cdef Py_ssize_t i, k, r
    for i in range(NS.shape[0]):
        total += NS[i]
    eta_arr = np.full((total + 1, n), np.nan)
    e_arr = np.full((total + 1, n), np.nan)
    cdef double[:, ::1] ETA = eta_arr
    cdef double[:, ::1] E = e_arr
    eta_np = np.array(eta0, dtype=np.float64)
    cdef double[::1] eta = eta_np
    cdef double[::1] stage = np.empty(n)
    cdef double[::1] k1 = np.empty(n), k2 = np.empty(n), k3 = np.empty(n), k4 = np.empty(n)
    cdef double[::1] c = np.empty(nq), q = np.empty(nq), tmp = np.empty(nq)
    cdef double[::1] p = np.zeros(npp)
    cdef double h
    cdef long row = 0, s
    cdef int status = 0

    with nogil:
        for r in range(n):
            ETA[0, r] = eta[r]
        if not _error(eta, W[0], FKv, Gv, E1v, HKv, Jv, E2v, kv, pv, damping, tol, max_iter,
                      c, q, p, tmp, k1):
            status = 1
        else:
            for r in range(n):
                E[0, r] = k1[r]
        i = 0
        while status == 0 and i < NS.shape[0]:
            h = HS[i]
            s = 0
            while status == 0 and s < NS[i]:
                if not _error(eta, W[i], FKv, Gv, E1v, HKv, Jv, E2v, kv, pv, damping, tol,
                              max_iter, c, q, p, tmp, k1):
                    status = 1
                    break
                for r in range(n):
                    stage[r] = eta[r] - 0.5 * h * k1[r]
                if not _error(stage, W[i], FKv, Gv, E1v, HKv, Jv, E2v, kv, pv, damping, tol,
                              max_iter, c, q, p, tmp, k2):
                    status = 1
                    break
                for r in range(n):
                    stage[r] = eta[r] - 0.5 * h * k2[r]
                if not _error(stage, W[i], FKv, Gv, E1v, HKv, Jv, E2v, kv, pv, damping, tol,
                              max_iter, c, q, p, tmp, k3):
                    status = 1
                    break
                for r in range(n):
                    stage[r] = eta[r] - h * k3[r]
                if not _error(stage, W[i], FKv, Gv, E1v, HKv, Jv, E2v, kv, pv, damping, tol,
                              max_iter, c, q, p, tmp, k4):
                    status = 1
                    break
                for r in range(n):
                    eta[r] = eta[r] - (h / 6.0) * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
                    if not isfinite(eta[r]):
                        status = 2
                if status:
                    break
                row += 1
                for r in range(n):
                    ETA[row, r] = eta[r]
                if not _error(eta, W[i], FKv, Gv, E1v, HKv, Jv, E2v, kv, pv, damping, tol,
                              max_iter, c, q, p, tmp, k1):
                    status = 1
                    break
                for r in range(n):
                    E[row, r] = k1[r]
                s += 1
            i += 1
    return eta_arr, e_arr, status

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the two hot loops. Semantics match ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, fabs, sqrt, M_PI

cnp.import_array()

cdef double K1 = 79.047
cdef double K2 = 7.4129
cdef double GAMMA = 0.37457
cdef double LOG2 = 0.6931471805599453
cdef double RHO_EPS = 1e-12


cdef inline double _logcosh(double x) noexcept nogil:
    cdef double a = fabs(x)
    return a + log(1.0 + exp(-2.0 * a)) - LOG2


cdef inline double _entropy_from_moments(double m_logcosh, double m_gauss) noexcept nogil:
    cdef double h_gauss = 0.5 * (1.0 + log(2.0 * M_PI))
    return h_gauss - K1 * (m_logcosh - GAMMA) ** 2 - K2 * m_gauss ** 2


cdef inline double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t r
    cdef double s = 0.0
    for r in range(n):
        s += a[r] * b[r]
    return s


cdef inline void _moments(const double* a, Py_ssize_t n, double* acc) noexcept nogil:
    cdef Py_ssize_t r
    cdef double lc = 0.0, g = 0.0, u
    for r in range(n):
        u = a[r]
        lc += _logcosh(u)
        g += u * exp(-0.5 * u * u)
    acc[0] = lc
    acc[1] = g


cdef inline void _pair_moments(const double* a, const double* b, Py_ssize_t n,
                               double rho, double scale, double* acc) noexcept nogil:
    cdef Py_ssize_t r
    cdef double lc_u = 0.0, g_u = 0.0, lc_v = 0.0, g_v = 0.0, u, v
    for r in range(n):
        u = (a[r] - rho * b[r]) * scale
        v = (b[r] - rho * a[r]) * scale
        lc_u += _logcosh(u)
        g_u += u * exp(-0.5 * u * u)
        lc_v += _logcosh(v)
        g_v += v * exp(-0.5 * v * v)
    acc[0] = lc_u
    acc[1] = g_u
    acc[2] = lc_v
    acc[3] = g_v


def pairwise_entropy_diff(x_in):
    """Antisymmetric matrix ``D[i, j] = H(x_j) + H(r_i|j) - H(x_i) - H(r_j|i)``.

    Columns of ``x_in`` must be standardized (zero mean, unit variance, ddof=0).
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xt_arr = np.ascontiguousarray(np.asarray(x_in, dtype=np.float64).T)
    cdef double[:, ::1] xt = xt_arr
    cdef Py_ssize_t q = xt.shape[0], nrow = xt.shape[1]
    cdef Py_ssize_t i, j
    cdef double rho, scale, h_ri, h_rj
    cdef double acc[4]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((q, q), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] marg = np.empty(q, dtype=np.float64)
    cdef double[:, ::1] d = out
    cdef double[::1] h = marg
    cdef double inv_n = 1.0 / nrow

    with nogil:
        for i in range(q):
            _moments(&xt[i, 0], nrow, acc)
            h[i] = _entropy_from_moments(acc[0] * inv_n, acc[1] * inv_n)
        for i in range(q):
            for j in range(i + 1, q):
                rho = _dot(&xt[i, 0], &xt[j, 0], nrow) * inv_n
                acc[0] = 0.0
                acc[1] = 0.0
                acc[2] = 0.0
                acc[3] = 0.0
                if 1.0 - rho * rho > RHO_EPS:
                    scale = 1.0 / sqrt(1.0 - rho * rho)
                    _pair_moments(&xt[i, 0], &xt[j, 0], nrow, rho, scale, acc)
                h_ri = _entropy_from_moments(acc[0] * inv_n, acc[1] * inv_n)
                h_rj = _entropy_from_moments(acc[2] * inv_n, acc[3] * inv_n)
                d[i, j] = (h[j] + h_ri) - (h[i] + h_rj)
                d[j, i] = -d[i, j]
    return out


def var_recursion(double[:, :, ::1] coefs, double[:, ::1] drive, double[:, ::1] history):
    """``s[t] = drive[t] + sum_tau s[t - tau] @ coefs[tau - 1]``.

    ``history`` holds the ``lag`` rows preceding ``t = 0`` (oldest first).
    """
    cdef Py_ssize_t lag = coefs.shape[0], n = coefs.shape[1], T = drive.shape[0]
    cdef Py_ssize_t t, tau, i, j
    cdef double acc, prev
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((T, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if history.shape[0] != lag or history.shape[1] != n or drive.shape[1] != n:
        raise ValueError("shape mismatch between coefs, drive and history")
    with nogil:
        for t in range(T):
            for j in range(n):
                out[t, j] = drive[t, j]
            for tau in range(1, lag + 1):
                for i in range(n):
                    if t - tau >= 0:
                        prev = out[t - tau, i]
                    else:
                        prev = history[lag + t - tau, i]
                    if prev == 0.0:
                        continue
                    for j in range(n):
                        out[t, j] += prev * coefs[tau - 1, i, j]
    return out_arr

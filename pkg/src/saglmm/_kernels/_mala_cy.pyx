# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MALA transition kernel (hot inner loop of every SA run)."""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, isfinite, log1p

cnp.import_array()

BACKEND_NAME = "cython"


cdef inline double _log1pexp(double x) noexcept nogil:
    if x > 30.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _expit(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef int _potential_and_grad(double[::1] u, double[::1] y, double[::1] eta_fixed,
                             double[:, ::1] Z, double[::1] inv_var,
                             double[::1] grad, double* pot_out) noexcept nogil:
    """potential(u) and its gradient; returns 0 on success, 1 on non-finite."""
    cdef Py_ssize_t n = y.shape[0], q = u.shape[0]
    cdef Py_ssize_t i, j
    cdef double pot = 0.0, eta_z, eta, resid
    for j in range(q):
        pot += 0.5 * inv_var[j] * u[j] * u[j]
        grad[j] = inv_var[j] * u[j]
    for i in range(n):
        eta_z = 0.0
        for j in range(q):
            eta_z += Z[i, j] * u[j]
        eta = eta_fixed[i] + eta_z
        pot -= y[i] * eta_z - _log1pexp(eta)
        resid = y[i] - _expit(eta)
        for j in range(q):
            grad[j] -= Z[i, j] * resid
    if not isfinite(pot):
        return 1
    for j in range(q):
        if not isfinite(grad[j]):
            return 1
    pot_out[0] = pot
    return 0


def mala_chain(double[::1] u0, double eps, double[::1] y, double[::1] eta_fixed,
               double[:, ::1] Z, double[::1] inv_var, bint preconditioned,
               sigma, chol, precision, double[:, ::1] normals, double[::1] uniforms):
    """Compiled twin of the numpy backend's ``mala_chain``; same contract."""
    cdef Py_ssize_t q = u0.shape[0]
    cdef Py_ssize_t steps = uniforms.shape[0]
    cdef double half_step = 0.5 * eps * eps

    cdef double[:, ::1] sig_mv
    cdef double[:, ::1] chol_mv
    cdef double[:, ::1] prec_mv
    if preconditioned:
        sig_mv = sigma
        chol_mv = chol
        prec_mv = precision
    else:
        # unused; point at trivial buffers to satisfy typing
        sig_mv = np.zeros((1, 1))
        chol_mv = sig_mv
        prec_mv = sig_mv

    u_arr = np.array(u0, dtype=float)
    cdef double[::1] u = u_arr
    cdef double[::1] xi = np.empty(q)
    cdef double[::1] grad = np.empty(q)
    cdef double[::1] u_star = np.empty(q)
    cdef double[::1] xi_star = np.empty(q)
    cdef double[::1] grad_star = np.empty(q)

    cdef double pot = 0.0, pot_star = 0.0
    cdef double acc, noise_j, quad_fwd, quad_back, log_rho, d
    cdef Py_ssize_t i, j, k
    cdef int accepts = 0
    cdef bint accept

    if _potential_and_grad(u, y, eta_fixed, Z, inv_var, grad, &pot):
        return u_arr, 0, False

    for j in range(q):
        if preconditioned:
            acc = 0.0
            for k in range(q):
                acc += sig_mv[j, k] * grad[k]
            xi[j] = u[j] - half_step * acc
        else:
            xi[j] = u[j] - half_step * grad[j]

    for i in range(steps):
        for j in range(q):
            if preconditioned:
                noise_j = 0.0
                for k in range(j + 1):  # chol is lower triangular
                    noise_j += chol_mv[j, k] * normals[i, k]
            else:
                noise_j = normals[i, j]
            u_star[j] = xi[j] + eps * noise_j

        if _potential_and_grad(u_star, y, eta_fixed, Z, inv_var, grad_star, &pot_star):
            return u_arr, accepts, False

        for j in range(q):
            if preconditioned:
                acc = 0.0
                for k in range(q):
                    acc += sig_mv[j, k] * grad_star[k]
                xi_star[j] = u_star[j] - half_step * acc
            else:
                xi_star[j] = u_star[j] - half_step * grad_star[j]

        if preconditioned:
            quad_fwd = 0.0
            quad_back = 0.0
            for j in range(q):
                acc = 0.0
                for k in range(q):
                    acc += prec_mv[j, k] * (u_star[k] - xi[k])
                quad_fwd += (u_star[j] - xi[j]) * acc
            for j in range(q):
                acc = 0.0
                for k in range(q):
                    acc += prec_mv[j, k] * (u[k] - xi_star[k])
                quad_back += (u[j] - xi_star[j]) * acc
        else:
            quad_fwd = 0.0
            quad_back = 0.0
            for j in range(q):
                d = u_star[j] - xi[j]
                quad_fwd += d * d
                d = u[j] - xi_star[j]
                quad_back += d * d

        log_rho = pot - pot_star + (quad_fwd - quad_back) / (2.0 * eps * eps)
        accept = log_rho >= 0.0 or uniforms[i] < exp(log_rho)
        if accept:
            for j in range(q):
                u[j] = u_star[j]
                xi[j] = xi_star[j]
            pot = pot_star
            accepts += 1

    return u_arr, accepts, True

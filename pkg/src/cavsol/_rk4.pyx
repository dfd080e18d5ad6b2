# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 propagator for the per-momentum mean-field spinor equations."""

import numpy as np
cimport numpy as cnp
from libc.math cimport isnan

ctypedef double complex cplx

cnp.import_array()


cdef void _deriv(const cplx[:, ::1] psi, const double[:, ::1] hvals,
                 const int[::1] rows, const int[::1] cols,
                 const double[::1] w, double chiN, double omega,
                 int a, int b, cplx[:, ::1] out) noexcept nogil:
    # out = -i * (H psi + exchange), written in real arithmetic
    cdef Py_ssize_t n = psi.shape[0]
    cdef Py_ssize_t m = psi.shape[1]
    cdef Py_ssize_t npair = rows.shape[0]
    cdef Py_ssize_t i, k, q
    cdef double cr = 0.0, ci = 0.0
    cdef double xr, xi, yr, yi, hv, gar, gai, gbr, gbi
    cdef double acc_r[16]
    cdef double acc_i[16]

    for i in range(n):
        # conj(psi_b) * psi_a
        xr = psi[i, a].real
        xi = psi[i, a].imag
        yr = psi[i, b].real
        yi = psi[i, b].imag
        cr += w[i] * (yr * xr + yi * xi)
        ci += w[i] * (yr * xi - yi * xr)
    gar = chiN * cr + 0.5 * omega
    gai = chiN * ci
    gbr = gar
    gbi = -gai

    for i in range(n):
        for k in range(m):
            acc_r[k] = 0.0
            acc_i[k] = 0.0
        for q in range(npair):
            hv = hvals[i, q]
            k = rows[q]
            acc_r[k] = acc_r[k] + hv * psi[i, cols[q]].real
            acc_i[k] = acc_i[k] + hv * psi[i, cols[q]].imag
        yr = psi[i, b].real
        yi = psi[i, b].imag
        xr = psi[i, a].real
        xi = psi[i, a].imag
        acc_r[a] = acc_r[a] + gar * yr - gai * yi
        acc_i[a] = acc_i[a] + gar * yi + gai * yr
        acc_r[b] = acc_r[b] + gbr * xr - gbi * xi
        acc_i[b] = acc_i[b] + gbr * xi + gbi * xr
        for k in range(m):
            out[i, k].real = acc_i[k]
            out[i, k].imag = -acc_r[k]


def rk4_propagate(cplx[:, ::1] psi0, double[:, ::1] hvals, int[::1] rows,
                  int[::1] cols, double[::1] w, double chiN, double omega,
                  int a, int b, double dt, long n_steps, long sample_every):
    """Fixed-step RK4; returns samples of shape (n_steps // sample_every + 1, n, m)."""
    cdef Py_ssize_t n = psi0.shape[0]
    cdef Py_ssize_t m = psi0.shape[1]
    if m > 16:
        raise ValueError("at most 16 components per point are supported")
    cdef long n_samples = n_steps // sample_every + 1
    out_arr = np.empty((n_samples, n, m), dtype=np.complex128)
    cdef cplx[:, :, ::1] out = out_arr

    psi_arr = np.array(psi0, dtype=np.complex128, copy=True)
    cdef cplx[:, ::1] psi = psi_arr
    cdef cplx[:, ::1] k1 = np.empty((n, m), dtype=np.complex128)
    cdef cplx[:, ::1] k2 = np.empty((n, m), dtype=np.complex128)
    cdef cplx[:, ::1] k3 = np.empty((n, m), dtype=np.complex128)
    cdef cplx[:, ::1] k4 = np.empty((n, m), dtype=np.complex128)
    cdef cplx[:, ::1] tmp = np.empty((n, m), dtype=np.complex128)
    cdef long step, s = 0
    cdef Py_ssize_t i, k
    cdef double h2 = 0.5 * dt
    cdef double h6 = dt / 6.0
    cdef bint bad = False

    out[0, :, :] = psi
    s = 1
    with nogil:
        for step in range(1, n_steps + 1):
            _deriv(psi, hvals, rows, cols, w, chiN, omega, a, b, k1)
            for i in range(n):
                for k in range(m):
                    tmp[i, k] = psi[i, k] + h2 * k1[i, k]
            _deriv(tmp, hvals, rows, cols, w, chiN, omega, a, b, k2)
            for i in range(n):
                for k in range(m):
                    tmp[i, k] = psi[i, k] + h2 * k2[i, k]
            _deriv(tmp, hvals, rows, cols, w, chiN, omega, a, b, k3)
            for i in range(n):
                for k in range(m):
                    tmp[i, k] = psi[i, k] + dt * k3[i, k]
            _deriv(tmp, hvals, rows, cols, w, chiN, omega, a, b, k4)
            for i in range(n):
                for k in range(m):
                    psi[i, k] = psi[i, k] + h6 * (k1[i, k] + 2.0 * k2[i, k]
                                                  + 2.0 * k3[i, k] + k4[i, k])
            if step % sample_every == 0:
                for i in range(n):
                    for k in range(m):
                        if isnan(psi[i, k].real) or isnan(psi[i, k].imag):
                            bad = True
                        out[s, i, k] = psi[i, k]
                s += 1
                if bad:
                    break
    if bad:
        raise FloatingPointError(f"non-finite amplitude at step {step}")
    return out_arr

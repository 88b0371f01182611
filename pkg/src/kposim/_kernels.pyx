# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pure-state propagation and the banded master-equation generator.

Same algorithm as ``integrators.dopri5``/``integrators.rk4`` with
``integrators.pure_rhs`` and ``drives.evaluate_table``, with the whole step
loop in C and the small factor products done by BLAS ``zgemm``.

A state ``Y`` of shape ``(D1, D2)`` in C order is, to column-major BLAS, the
matrix ``Y^T`` of shape ``(D2, D1)``; likewise each C-ordered factor ``F`` is
``F^T``. ``A Y B^T`` therefore becomes ``B^T(col) . Y^T(col) . A^T(col)``,
i.e. ``zgemm('T', 'N', B_c, tmp)`` after ``tmp = Y_c . A_c``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, tanh, sqrt, fabs, pow, log, exp, isfinite, INFINITY
from scipy.linalg.cython_blas cimport zgemm

cnp.import_array()

ctypedef double complex cplx

DEF ROW = 16

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200
cdef double E6 = 22.0 / 525, E7 = -1.0 / 40
cdef double SAFETY = 0.9, MIN_FACTOR = 0.2, MAX_FACTOR = 10.0


class KernelError(RuntimeError):
    pass


cdef inline double envelope(int kind, double t, double T, double beta) noexcept nogil:
    cdef double s
    if kind == 0:
        return 1.0
    if kind == 1:
        s = t / T
        if s < 0.0:
            return 0.0
        if s > 1.0:
            return 1.0
        return s
    if t < 0.0 or t > T:
        return 0.0
    s = t / T
    return tanh(beta * s) * tanh(beta * (1.0 - s)) / (tanh(0.5 * beta) * tanh(0.5 * beta))


cdef inline double tone(const double* row, int base, double t) noexcept nogil:
    cdef double amp = row[base + 3]
    if amp == 0.0:
        return 0.0
    return amp * envelope(<int>row[base], t, row[base + 1], row[base + 2]) * cos(row[base + 4] * t + row[base + 5])


cdef inline cplx eval_row(const double* row, double t) noexcept nogil:
    cdef int kind = <int>row[0]
    cdef cplx scale = row[1] + 1j * row[2]
    cdef double env, arg
    if kind == 0:
        return scale
    if kind == 1:
        env = row[7] * envelope(<int>row[4], t, row[5], row[6])
        arg = row[8] * t + row[9]
        return scale * env * (cos(arg) + 1j * sin(arg))
    if kind == 2:
        return scale * tone(row, 4, t)
    return scale * cos(row[3] - tone(row, 4, t) - tone(row, 10, t))


def evaluate_table(double[:, ::1] table, double t):
    """Compiled counterpart of ``drives.evaluate_table``."""
    cdef Py_ssize_t k, n = table.shape[0]
    out = np.empty(n, dtype=complex)
    cdef cplx[::1] o = out
    for k in range(n):
        o[k] = eval_row(&table[k, 0], t)
    return out


cdef class _System:
    """Product-term Hamiltonian ready for repeated right-hand-side evaluation."""
    cdef double[:, ::1] table
    cdef cplx[:, :, ::1] fac1
    cdef cplx[:, :, ::1] fac2
    cdef int[::1] id1
    cdef int[::1] id2
    cdef int d1, d2, n, nterm
    cdef cplx[::1] coeffs
    cdef cplx[::1] tmp

    def __init__(self, table, fac1, id1, fac2, id2):
        self.table = np.ascontiguousarray(table, dtype=np.float64)
        self.fac1 = np.ascontiguousarray(fac1, dtype=complex)
        self.fac2 = np.ascontiguousarray(fac2, dtype=complex)
        self.id1 = np.ascontiguousarray(id1, dtype=np.int32)
        self.id2 = np.ascontiguousarray(id2, dtype=np.int32)
        self.nterm = self.table.shape[0]
        self.d1 = self.fac1.shape[1]
        self.d2 = self.fac2.shape[1]
        self.n = self.d1 * self.d2
        self.coeffs = np.empty(self.nterm, dtype=complex)
        self.tmp = np.empty(self.n, dtype=complex)

    cdef void rhs(self, double t, cplx* y, cplx* out) noexcept nogil:
        cdef int k, i
        cdef int d1 = self.d1, d2 = self.d2, n = self.n
        cdef cplx c
        cdef cplx one = 1.0, zero = 0.0
        cdef char tr_n = b'N', tr_t = b'T'
        cdef cplx* tmp = &self.tmp[0]
        for i in range(n):
            out[i] = 0.0
        for k in range(self.nterm):
            c = eval_row(&self.table[k, 0], t)
            if c == 0:
                continue
            c = -1j * c
            if self.id1[k] and self.id2[k]:
                for i in range(n):
                    out[i] = out[i] + c * y[i]
            elif self.id2[k]:
                # out_c += c * Y_c . A_c
                zgemm(&tr_n, &tr_n, &d2, &d1, &d1, &c, y, &d2,
                      &self.fac1[k, 0, 0], &d1, &one, out, &d2)
            elif self.id1[k]:
                # out_c += c * B_c^T . Y_c
                zgemm(&tr_t, &tr_n, &d2, &d1, &d2, &c, &self.fac2[k, 0, 0], &d2,
                      y, &d2, &one, out, &d2)
            else:
                zgemm(&tr_n, &tr_n, &d2, &d1, &d1, &one, y, &d2,
                      &self.fac1[k, 0, 0], &d1, &zero, tmp, &d2)
                zgemm(&tr_t, &tr_n, &d2, &d1, &d2, &c, &self.fac2[k, 0, 0], &d2,
                      tmp, &d2, &one, out, &d2)


cdef double rms_scaled(cplx* v, cplx* y, cplx* y_new, int n, double rtol, double atol) noexcept nogil:
    cdef double acc = 0.0, a, b, s, e
    cdef int i
    for i in range(n):
        a = abs(y[i])
        b = abs(y_new[i])
        s = atol + rtol * (a if a > b else b)
        e = abs(v[i]) / s
        acc += e * e
    return sqrt(acc / n)


cdef double rms_plain(cplx* v, cplx* y, int n, double rtol, double atol) noexcept nogil:
    cdef double acc = 0.0, e
    cdef int i
    for i in range(n):
        e = abs(v[i]) / (atol + rtol * abs(y[i]))
        acc += e * e
    return sqrt(acc / n)


cdef double renorm(cplx* y, int n) noexcept nogil:
    # returns log of the norm removed
    cdef double acc = 0.0
    cdef int i
    for i in range(n):
        acc += y[i].real * y[i].real + y[i].imag * y[i].imag
    cdef double norm = sqrt(acc)
    for i in range(n):
        y[i] = y[i] / norm
    return log(norm)


def propagate_pure(table, fac1, id1, fac2, id2, y0, sample_times, double t0, str method,
                   double rtol, double atol, double max_step, first_step, bint renormalize):
    """Integrate ``dy/dt = -i H(t) y``; returns ``(states, stats)``.

    ``states`` has one row per entry of ``sample_times``.
    """
    cdef _System sys = _System(table, fac1, id1, fac2, id2)
    cdef int n = sys.n
    cdef double[::1] samples = np.ascontiguousarray(sample_times, dtype=np.float64)
    cdef Py_ssize_t ns = samples.shape[0]
    out_arr = np.empty((ns, n), dtype=complex)
    cdef cplx[:, ::1] out = out_arr
    work_arr = np.zeros((11, n), dtype=complex)
    cdef cplx[:, ::1] w = work_arr
    cdef cplx* y = &w[0, 0]
    cdef cplx* k1 = &w[1, 0]
    cdef cplx* k2 = &w[2, 0]
    cdef cplx* k3 = &w[3, 0]
    cdef cplx* k4 = &w[4, 0]
    cdef cplx* k5 = &w[5, 0]
    cdef cplx* k6 = &w[6, 0]
    cdef cplx* k7 = &w[7, 0]
    cdef cplx* ys = &w[8, 0]
    cdef cplx* ynew = &w[9, 0]
    cdef cplx* err = &w[10, 0]
    cdef const cplx[::1] y0v = np.ascontiguousarray(y0, dtype=complex)
    cdef int i, s
    cdef double t = t0, h, h_try, t_target, t_new, err_norm, factor, d0, d1, d2, dmax, h0
    cdef long steps = 0, rejected = 0, nfev = 0
    cdef double min_h = INFINITY, max_h = 0.0
    cdef double log_norm = 0.0
    cdef bint land
    cdef bint adaptive = method == "dopri5"
    cdef int status = 0
    cdef int nsub, j

    if method not in ("dopri5", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    if y0v.shape[0] != n:
        raise ValueError("initial state has the wrong dimension")
    for i in range(n):
        y[i] = y0v[i]

    if adaptive:
        sys.rhs(t, y, k1)
        nfev += 1
        if first_step is None:
            d0 = rms_plain(y, y, n, rtol, atol)
            d1 = rms_plain(k1, y, n, rtol, atol)
            h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
            if h0 > max_step:
                h0 = max_step
            for i in range(n):
                ys[i] = y[i] + h0 * k1[i]
            sys.rhs(t + h0, ys, k2)
            nfev += 1
            for i in range(n):
                err[i] = k2[i] - k1[i]
            d2 = rms_plain(err, y, n, rtol, atol) / h0
            dmax = d1 if d1 > d2 else d2
            if dmax <= 1e-15:
                h = 1e-6 if 1e-6 > h0 * 1e-3 else h0 * 1e-3
            else:
                h = pow(0.01 / dmax, 0.2)
            if h > 100 * h0:
                h = 100 * h0
            if h > max_step:
                h = max_step
        else:
            h = first_step
            if h > max_step:
                h = max_step
    else:
        if first_step is None or first_step <= 0:
            raise ValueError("rk4 needs a positive step (initial_step or max_step)")
        h = first_step

    with nogil:
        for s in range(ns):
            t_target = samples[s]
            if adaptive:
                while t < t_target:
                    if h > max_step:
                        h = max_step
                    land = h >= t_target - t
                    h_try = (t_target - t) if land else h
                    if h_try <= 1e-14 * (fabs(t) if fabs(t) > 1.0 else 1.0):
                        status = 1
                        break
                    for i in range(n):
                        ys[i] = y[i] + h_try * (A21 * k1[i])
                    sys.rhs(t + C2 * h_try, ys, k2)
                    for i in range(n):
                        ys[i] = y[i] + h_try * (A31 * k1[i] + A32 * k2[i])
                    sys.rhs(t + C3 * h_try, ys, k3)
                    for i in range(n):
                        ys[i] = y[i] + h_try * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
                    sys.rhs(t + C4 * h_try, ys, k4)
                    for i in range(n):
                        ys[i] = y[i] + h_try * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
                    sys.rhs(t + C5 * h_try, ys, k5)
                    for i in range(n):
                        ys[i] = y[i] + h_try * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                                + A64 * k4[i] + A65 * k5[i])
                    sys.rhs(t + h_try, ys, k6)
                    for i in range(n):
                        ynew[i] = y[i] + h_try * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i]
                                                  + B5 * k5[i] + B6 * k6[i])
                    t_new = t_target if land else t + h_try
                    sys.rhs(t_new, ynew, k7)
                    nfev += 6
                    for i in range(n):
                        err[i] = h_try * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                                          + E6 * k6[i] + E7 * k7[i])
                    err_norm = rms_scaled(err, y, ynew, n, rtol, atol)
                    if not isfinite(err_norm):
                        status = 2
                        break
                    if err_norm <= 1.0:
                        if err_norm == 0:
                            factor = MAX_FACTOR
                        else:
                            factor = SAFETY * pow(err_norm, -0.2)
                            if factor > MAX_FACTOR:
                                factor = MAX_FACTOR
                        steps += 1
                        if h_try < min_h:
                            min_h = h_try
                        if h_try > max_h:
                            max_h = h_try
                        if renormalize:
                            log_norm += renorm(ynew, n)
                            sys.rhs(t_new, ynew, k7)
                            nfev += 1
                        for i in range(n):
                            y[i] = ynew[i]
                            k1[i] = k7[i]
                        t = t_new
                        if land:
                            if h_try * factor > h:
                                h = h_try * factor
                        else:
                            h = h_try * factor
                    else:
                        rejected += 1
                        factor = SAFETY * pow(err_norm, -0.2)
                        if factor < MIN_FACTOR:
                            factor = MIN_FACTOR
                        h = h_try * factor
            else:
                if t_target - t > 0:
                    nsub = <int>((t_target - t) / h - 1e-12)
                    if nsub * h < (t_target - t) * (1 - 1e-12):
                        nsub += 1
                    if nsub < 1:
                        nsub = 1
                    h_try = (t_target - t) / nsub
                    for j in range(nsub):
                        sys.rhs(t, y, k1)
                        for i in range(n):
                            ys[i] = y[i] + 0.5 * h_try * k1[i]
                        sys.rhs(t + 0.5 * h_try, ys, k2)
                        for i in range(n):
                            ys[i] = y[i] + 0.5 * h_try * k2[i]
                        sys.rhs(t + 0.5 * h_try, ys, k3)
                        for i in range(n):
                            ys[i] = y[i] + h_try * k3[i]
                        sys.rhs(t + h_try, ys, k4)
                        for i in range(n):
                            y[i] = y[i] + (h_try / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
                        d0 = 0.0
                        for i in range(n):
                            d0 += fabs(y[i].real) + fabs(y[i].imag)
                        if not isfinite(d0):
                            status = 2
                            break
                        if renormalize:
                            log_norm += renorm(y, n)
                        t = t_target if j == nsub - 1 else t + h_try
                        steps += 1
                        nfev += 4
                        if h_try < min_h:
                            min_h = h_try
                        if h_try > max_h:
                            max_h = h_try
            if status:
                break
            for i in range(n):
                out[s, i] = y[i]

    if status == 1:
        raise KernelError(f"step size underflow at t={t}")
    if status == 2:
        raise KernelError(f"non-finite state at t={t}")
    stats = {"steps": steps, "rejected": rejected, "rhs_evals": nfev,
             "min_step": min_h if steps else 0.0, "max_step": max_h,
             "renorm_drift": abs(exp(log_norm) - 1.0)}
    return out_arr, stats


def lindblad_rhs(const cplx[:, :, :, ::1] rho, const int[::1] off1, const int[::1] off2,
                 const cplx[:, ::1] u, const cplx[:, ::1] v, const int[::1] jump_mode,
                 const int[::1] jump_off, const cplx[:, ::1] jump_diag, double gamma,
                 cplx[:, :, :, ::1] work, cplx[:, :, :, ::1] out):
    """Master-equation generator for banded two-mode operators.

    ``rho`` and the outputs have shape ``(D1, D2, D1, D2)``. Band pair ``p``
    contributes ``u[p, i1] v[p, i2] rho[i1 + off1[p], i2 + off2[p], :, :]`` to
    ``X`` (the caller folds ``-i`` and the coefficients into ``u``). Writes
    ``out = X + X† + gamma sum_j L_j rho L_j†`` for single-band jumps ``L_j``
    acting on mode ``jump_mode[j]``.
    """
    cdef int d1 = rho.shape[0], d2 = rho.shape[1]
    cdef int i1, i2, j1, j2, p, k1, k2, lo1, hi1, lo2, hi2, jj, o
    cdef int npair = off1.shape[0], njump = jump_off.shape[0]
    cdef cplx w, z
    cdef const cplx* src
    cdef cplx* dst
    cdef int m = d1 * d2
    with nogil:
        for i1 in range(d1):
            for i2 in range(d2):
                dst = &work[i1, i2, 0, 0]
                for k1 in range(m):
                    dst[k1] = 0
        for p in range(npair):
            lo1 = 0 if off1[p] >= 0 else -off1[p]
            hi1 = d1 - off1[p] if off1[p] >= 0 else d1
            lo2 = 0 if off2[p] >= 0 else -off2[p]
            hi2 = d2 - off2[p] if off2[p] >= 0 else d2
            for i1 in range(lo1, hi1):
                if u[p, i1] == 0:
                    continue
                for i2 in range(lo2, hi2):
                    w = u[p, i1] * v[p, i2]
                    if w == 0:
                        continue
                    src = &rho[i1 + off1[p], i2 + off2[p], 0, 0]
                    dst = &work[i1, i2, 0, 0]
                    for k1 in range(m):
                        dst[k1] = dst[k1] + w * src[k1]
        # out = X + X^dagger
        for i1 in range(d1):
            for i2 in range(d2):
                for j1 in range(d1):
                    for j2 in range(d2):
                        z = work[j1, j2, i1, i2]
                        out[i1, i2, j1, j2] = work[i1, i2, j1, j2] + z.real - 1j * z.imag
        for jj in range(njump):
            o = jump_off[jj]
            if jump_mode[jj] == 0:
                for i1 in range(d1):
                    if i1 + o < 0 or i1 + o >= d1:
                        continue
                    for j1 in range(d1):
                        if j1 + o < 0 or j1 + o >= d1:
                            continue
                        z = jump_diag[jj, j1]
                        w = gamma * jump_diag[jj, i1] * (z.real - 1j * z.imag)
                        for i2 in range(d2):
                            for j2 in range(d2):
                                out[i1, i2, j1, j2] = out[i1, i2, j1, j2] + w * rho[i1 + o, i2, j1 + o, j2]
            else:
                for i2 in range(d2):
                    if i2 + o < 0 or i2 + o >= d2:
                        continue
                    for j2 in range(d2):
                        if j2 + o < 0 or j2 + o >= d2:
                            continue
                        z = jump_diag[jj, j2]
                        w = gamma * jump_diag[jj, i2] * (z.real - 1j * z.imag)
                        for i1 in range(d1):
                            for j1 in range(d1):
                                out[i1, i2, j1, j2] = out[i1, i2, j1, j2] + w * rho[i1, i2 + o, j1, j2 + o]

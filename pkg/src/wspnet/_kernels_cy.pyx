# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Drop-in replacements for wspnet._kernels_py (same signatures, same gate
layouts, same status-flag convention); see that module for the contract.
"""

from libc.math cimport exp, tanh, fabs, pow, isfinite

import numpy as np


cdef inline double _sig(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


def lstm_forward(double[:, :, ::1] x, double[:, ::1] wx, double[:, ::1] wh, double[::1] b):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], Din = x.shape[2], H = wh.shape[0]
    cdef Py_ssize_t bi, t, j, k
    ig = np.empty((B, T, H))
    fg = np.empty((B, T, H))
    gg = np.empty((B, T, H))
    og = np.empty((B, T, H))
    c = np.empty((B, T, H))
    tc = np.empty((B, T, H))
    h = np.empty((B, T, H))
    z = np.empty(4 * H)
    cdef double[:, :, ::1] ig_v = ig, fg_v = fg, gg_v = gg, og_v = og
    cdef double[:, :, ::1] c_v = c, tc_v = tc, h_v = h
    cdef double[::1] z_v = z
    cdef double acc, i_t, f_t, g_t, o_t, c_prev, c_t, tc_t
    with nogil:
        for bi in range(B):
            for t in range(T):
                for j in range(4 * H):
                    acc = b[j]
                    for k in range(Din):
                        acc += x[bi, t, k] * wx[k, j]
                    if t > 0:
                        for k in range(H):
                            acc += h_v[bi, t - 1, k] * wh[k, j]
                    z_v[j] = acc
                for j in range(H):
                    i_t = _sig(z_v[j])
                    f_t = _sig(z_v[H + j])
                    g_t = tanh(z_v[2 * H + j])
                    o_t = _sig(z_v[3 * H + j])
                    c_prev = c_v[bi, t - 1, j] if t > 0 else 0.0
                    c_t = f_t * c_prev + i_t * g_t
                    tc_t = tanh(c_t)
                    ig_v[bi, t, j] = i_t
                    fg_v[bi, t, j] = f_t
                    gg_v[bi, t, j] = g_t
                    og_v[bi, t, j] = o_t
                    c_v[bi, t, j] = c_t
                    tc_v[bi, t, j] = tc_t
                    h_v[bi, t, j] = o_t * tc_t
    return h, (ig, fg, gg, og, c, tc)


def lstm_backward(double[:, :, ::1] x, double[:, :, ::1] h,
                  double[:, ::1] wx, double[:, ::1] wh,
                  cache, double[:, :, ::1] dh):
    ig_a, fg_a, gg_a, og_a, c_a, tc_a = cache
    cdef double[:, :, ::1] ig = ig_a, fg = fg_a, gg = gg_a, og = og_a, c = c_a, tc = tc_a
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], Din = x.shape[2], H = wh.shape[0]
    cdef Py_ssize_t bi, t, j, k
    dx = np.empty((B, T, Din))
    dwx = np.zeros((Din, 4 * H))
    dwh = np.zeros((H, 4 * H))
    db = np.zeros(4 * H)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    dz = np.empty((B, 4 * H))
    cdef double[:, :, ::1] dx_v = dx
    cdef double[:, ::1] dwx_v = dwx, dwh_v = dwh, dz_v = dz
    cdef double[::1] db_v = db
    cdef double[:, ::1] dhn = dh_next, dcn = dc_next
    cdef double dh_t, tc_t, do, dc, c_prev, h_prev, i_t, f_t, g_t, o_t, acc
    with nogil:
        for t in range(T - 1, -1, -1):
            for bi in range(B):
                for j in range(H):
                    dh_t = dh[bi, t, j] + dhn[bi, j]
                    tc_t = tc[bi, t, j]
                    o_t = og[bi, t, j]
                    do = dh_t * tc_t
                    dc = dcn[bi, j] + dh_t * o_t * (1.0 - tc_t * tc_t)
                    c_prev = c[bi, t - 1, j] if t > 0 else 0.0
                    i_t = ig[bi, t, j]
                    f_t = fg[bi, t, j]
                    g_t = gg[bi, t, j]
                    dz_v[bi, j] = dc * g_t * i_t * (1.0 - i_t)
                    dz_v[bi, H + j] = dc * c_prev * f_t * (1.0 - f_t)
                    dz_v[bi, 2 * H + j] = dc * i_t * (1.0 - g_t * g_t)
                    dz_v[bi, 3 * H + j] = do * o_t * (1.0 - o_t)
                    dcn[bi, j] = dc * f_t
            for bi in range(B):
                for j in range(4 * H):
                    db_v[j] += dz_v[bi, j]
                    for k in range(Din):
                        dwx_v[k, j] += x[bi, t, k] * dz_v[bi, j]
                    if t > 0:
                        for k in range(H):
                            dwh_v[k, j] += h[bi, t - 1, k] * dz_v[bi, j]
                for k in range(Din):
                    acc = 0.0
                    for j in range(4 * H):
                        acc += dz_v[bi, j] * wx[k, j]
                    dx_v[bi, t, k] = acc
                for k in range(H):
                    acc = 0.0
                    for j in range(4 * H):
                        acc += dz_v[bi, j] * wh[k, j]
                    dhn[bi, k] = acc
    return dx, dwx, dwh, db


def gru_forward(double[:, :, ::1] x, double[:, ::1] wx, double[:, ::1] wh, double[::1] b):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], Din = x.shape[2], H = wh.shape[0]
    cdef Py_ssize_t bi, t, j, k
    rg = np.empty((B, T, H))
    zg = np.empty((B, T, H))
    ng = np.empty((B, T, H))
    h = np.empty((B, T, H))
    a = np.empty(3 * H)
    cdef double[:, :, ::1] rg_v = rg, zg_v = zg, ng_v = ng, h_v = h
    cdef double[::1] a_v = a
    cdef double acc, r_t, z_t, n_t, h_prev
    with nogil:
        for bi in range(B):
            for t in range(T):
                for j in range(2 * H):
                    acc = b[j]
                    for k in range(Din):
                        acc += x[bi, t, k] * wx[k, j]
                    if t > 0:
                        for k in range(H):
                            acc += h_v[bi, t - 1, k] * wh[k, j]
                    a_v[j] = acc
                for j in range(H):
                    rg_v[bi, t, j] = _sig(a_v[j])
                    zg_v[bi, t, j] = _sig(a_v[H + j])
                for j in range(H):
                    acc = b[2 * H + j]
                    for k in range(Din):
                        acc += x[bi, t, k] * wx[k, 2 * H + j]
                    if t > 0:
                        for k in range(H):
                            acc += rg_v[bi, t, k] * h_v[bi, t - 1, k] * wh[k, 2 * H + j]
                    n_t = tanh(acc)
                    z_t = zg_v[bi, t, j]
                    h_prev = h_v[bi, t - 1, j] if t > 0 else 0.0
                    ng_v[bi, t, j] = n_t
                    h_v[bi, t, j] = z_t * h_prev + (1.0 - z_t) * n_t
    return h, (rg, zg, ng)


def gru_backward(double[:, :, ::1] x, double[:, :, ::1] h,
                 double[:, ::1] wx, double[:, ::1] wh,
                 cache, double[:, :, ::1] dh):
    rg_a, zg_a, ng_a = cache
    cdef double[:, :, ::1] rg = rg_a, zg = zg_a, ng = ng_a
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], Din = x.shape[2], H = wh.shape[0]
    cdef Py_ssize_t bi, t, j, k
    dx = np.empty((B, T, Din))
    dwx = np.zeros((Din, 3 * H))
    dwh = np.zeros((H, 3 * H))
    db = np.zeros(3 * H)
    dh_next = np.zeros((B, H))
    da = np.empty((B, 3 * H))
    dan_wh = np.empty((B, H))
    cdef double[:, :, ::1] dx_v = dx
    cdef double[:, ::1] dwx_v = dwx, dwh_v = dwh, da_v = da, dwn = dan_wh
    cdef double[::1] db_v = db
    cdef double[:, ::1] dhn = dh_next
    cdef double dh_t, h_prev, r_t, z_t, n_t, dz_gate, dn, dan, acc
    with nogil:
        for t in range(T - 1, -1, -1):
            for bi in range(B):
                for j in range(H):
                    dh_t = dh[bi, t, j] + dhn[bi, j]
                    h_prev = h[bi, t - 1, j] if t > 0 else 0.0
                    z_t = zg[bi, t, j]
                    n_t = ng[bi, t, j]
                    dz_gate = dh_t * (h_prev - n_t)
                    dn = dh_t * (1.0 - z_t)
                    dan = dn * (1.0 - n_t * n_t)
                    da_v[bi, 2 * H + j] = dan
                    da_v[bi, H + j] = dz_gate * z_t * (1.0 - z_t)
                    # reset-gate grad needs dan @ wh_n.T first; fill later
                    dhn[bi, j] = dh_t * z_t
                for k in range(H):
                    acc = 0.0
                    for j in range(H):
                        acc += da_v[bi, 2 * H + j] * wh[k, 2 * H + j]
                    dwn[bi, k] = acc
                for j in range(H):
                    h_prev = h[bi, t - 1, j] if t > 0 else 0.0
                    r_t = rg[bi, t, j]
                    da_v[bi, j] = dwn[bi, j] * h_prev * r_t * (1.0 - r_t)
                    dhn[bi, j] += dwn[bi, j] * r_t
                for j in range(2 * H):
                    for k in range(H):
                        dhn[bi, k] += da_v[bi, j] * wh[k, j]
                    db_v[j] += da_v[bi, j]
                    for k in range(Din):
                        dwx_v[k, j] += x[bi, t, k] * da_v[bi, j]
                    if t > 0:
                        for k in range(H):
                            dwh_v[k, j] += h[bi, t - 1, k] * da_v[bi, j]
                for j in range(H):
                    db_v[2 * H + j] += da_v[bi, 2 * H + j]
                    for k in range(Din):
                        dwx_v[k, 2 * H + j] += x[bi, t, k] * da_v[bi, 2 * H + j]
                    if t > 0:
                        for k in range(H):
                            dwh_v[k, 2 * H + j] += rg[bi, t, k] * h[bi, t - 1, k] * da_v[bi, 2 * H + j]
                for k in range(Din):
                    acc = 0.0
                    for j in range(3 * H):
                        acc += da_v[bi, j] * wx[k, j]
                    dx_v[bi, t, k] = acc
    return dx, dwx, dwh, db


cdef inline double _bw_rate(double v, double z, double A, double beta,
                            double gamma, double n_exp) noexcept nogil:
    cdef double az = fabs(z)
    return A * v - beta * fabs(v) * pow(az, n_exp - 1.0) * z - gamma * v * pow(az, n_exp)


def boucwen_z_path(double[::1] x, double A, double beta, double gamma,
                   double n_exp, double dt, Py_ssize_t substeps):
    cdef Py_ssize_t T = x.shape[0], k, s
    z = np.empty(T)
    cdef double[::1] z_v = z
    cdef double zc = 0.0, v, h = dt / substeps, k1, k2, k3, k4
    cdef int status = 0
    z_v[0] = 0.0
    with nogil:
        for k in range(T - 1):
            v = (x[k + 1] - x[k]) / dt
            for s in range(substeps):
                k1 = _bw_rate(v, zc, A, beta, gamma, n_exp)
                k2 = _bw_rate(v, zc + 0.5 * h * k1, A, beta, gamma, n_exp)
                k3 = _bw_rate(v, zc + 0.5 * h * k2, A, beta, gamma, n_exp)
                k4 = _bw_rate(v, zc + h * k3, A, beta, gamma, n_exp)
                zc = zc + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not isfinite(zc) or fabs(zc) > 1e9:
                status = 1
                break
            z_v[k + 1] = zc
    return z, status


cdef void _mdof_rates(double* state, double ag_t, double[::1] masses, double[::1] ks,
                      double[::1] alphas, double A, double beta, double gamma,
                      double n_exp, double a0, double a1, Py_ssize_t n,
                      double* out) noexcept nogil:
    cdef Py_ssize_t i
    cdef double drift, dvel, drift_up, dvel_up, shear, shear_up, elastic, elastic_up, damp
    for i in range(n):
        drift = state[i] - (state[i - 1] if i > 0 else 0.0)
        dvel = state[n + i] - (state[n + i - 1] if i > 0 else 0.0)
        shear = alphas[i] * ks[i] * drift + (1.0 - alphas[i]) * ks[i] * state[2 * n + i]
        elastic = ks[i] * dvel
        if i < n - 1:
            drift_up = state[i + 1] - state[i]
            dvel_up = state[n + i + 1] - state[n + i]
            shear_up = alphas[i + 1] * ks[i + 1] * drift_up \
                + (1.0 - alphas[i + 1]) * ks[i + 1] * state[2 * n + i + 1]
            elastic_up = ks[i + 1] * dvel_up
        else:
            shear_up = 0.0
            elastic_up = 0.0
        damp = a0 * masses[i] * state[n + i] + a1 * (elastic - elastic_up)
        out[i] = state[n + i]
        out[n + i] = -((shear - shear_up) + damp) / masses[i] - ag_t
        out[2 * n + i] = _bw_rate(dvel, state[2 * n + i], A, beta, gamma, n_exp)


def boucwen_mdof(double[::1] ag, double[::1] masses, double[::1] ks, double[::1] alphas,
                 double A, double beta, double gamma, double n_exp,
                 double a0, double a1, double dt, Py_ssize_t substeps):
    cdef Py_ssize_t T = ag.shape[0], n = masses.shape[0]
    cdef Py_ssize_t k, s, i, j
    out = np.zeros((T, n))
    cdef double[:, ::1] out_v = out
    state_a = np.zeros(3 * n)
    work = np.zeros((5, 3 * n))  # k1..k4 + staging buffer
    cdef double[::1] st = state_a
    cdef double[:, ::1] w = work
    cdef double h = dt / substeps, ag0, slope, t0, a_beg, a_mid, a_end, m
    cdef int status = 0
    with nogil:
        for k in range(T - 1):
            ag0 = ag[k]
            slope = (ag[k + 1] - ag[k]) / dt
            for s in range(substeps):
                t0 = s * h
                a_beg = ag0 + slope * t0
                a_mid = ag0 + slope * (t0 + 0.5 * h)
                a_end = ag0 + slope * (t0 + h)
                _mdof_rates(&st[0], a_beg, masses, ks, alphas, A, beta, gamma, n_exp, a0, a1, n, &w[0, 0])
                for i in range(3 * n):
                    w[4, i] = st[i] + 0.5 * h * w[0, i]
                _mdof_rates(&w[4, 0], a_mid, masses, ks, alphas, A, beta, gamma, n_exp, a0, a1, n, &w[1, 0])
                for i in range(3 * n):
                    w[4, i] = st[i] + 0.5 * h * w[1, i]
                _mdof_rates(&w[4, 0], a_mid, masses, ks, alphas, A, beta, gamma, n_exp, a0, a1, n, &w[2, 0])
                for i in range(3 * n):
                    w[4, i] = st[i] + h * w[2, i]
                _mdof_rates(&w[4, 0], a_end, masses, ks, alphas, A, beta, gamma, n_exp, a0, a1, n, &w[3, 0])
                for i in range(3 * n):
                    st[i] = st[i] + (h / 6.0) * (w[0, i] + 2.0 * w[1, i] + 2.0 * w[2, i] + w[3, i])
            m = 0.0
            for i in range(3 * n):
                if not isfinite(st[i]):
                    status = 1
                if fabs(st[i]) > m:
                    m = fabs(st[i])
            if status == 1 or m > 1e9:
                status = 1
                break
            out_v[k + 1, 0] = st[0]
            for i in range(1, n):
                out_v[k + 1, i] = st[i] - st[i - 1]
    return out, status


def gmp_stress(double[::1] strain, double E0, double fy, double b,
               double R0, double cR1, double cR2):
    cdef Py_ssize_t T = strain.shape[0], t
    stress = np.empty(T)
    cdef double[::1] out = stress
    cdef double eps_y, esh, eps_prev, sig_prev, epsmax, epsmin, epspl, epss0, sigs0, epsr, sigr
    cdef double eps, deps, xi, R, est, dum, sst, sig
    cdef int kon = 0
    if fabs(1.0 - b) < 1e-12:
        for t in range(T):
            out[t] = E0 * strain[t]
        return stress
    eps_y = fy / E0
    esh = b * E0
    eps_prev = 0.0
    sig_prev = 0.0
    epsmax = eps_y
    epsmin = -eps_y
    epspl = eps_y
    epss0 = eps_y
    sigs0 = fy
    epsr = 0.0
    sigr = 0.0
    with nogil:
        for t in range(T):
            eps = strain[t]
            deps = eps - eps_prev
            if kon == 0:
                if deps == 0.0:
                    out[t] = 0.0
                    continue
                epsmax = eps_y
                epsmin = -eps_y
                epsr = 0.0
                sigr = 0.0
                if deps < 0.0:
                    kon = 2
                    epss0 = -eps_y
                    sigs0 = -fy
                    epspl = epsmin
                else:
                    kon = 1
                    epss0 = eps_y
                    sigs0 = fy
                    epspl = epsmax
            elif kon == 2 and deps > 0.0:
                kon = 1
                epsr = eps_prev
                sigr = sig_prev
                if eps_prev < epsmin:
                    epsmin = eps_prev
                epss0 = (fy - esh * eps_y - sigr + E0 * epsr) / (E0 - esh)
                sigs0 = fy + esh * (epss0 - eps_y)
                epspl = epsmax
            elif kon == 1 and deps < 0.0:
                kon = 2
                epsr = eps_prev
                sigr = sig_prev
                if eps_prev > epsmax:
                    epsmax = eps_prev
                epss0 = (-fy + esh * eps_y - sigr + E0 * epsr) / (E0 - esh)
                sigs0 = -fy + esh * (epss0 + eps_y)
                epspl = epsmin
            xi = fabs((epspl - epss0) / eps_y)
            R = R0 * (1.0 - cR1 * xi / (cR2 + xi))
            est = (eps - epsr) / (epss0 - epsr)
            dum = pow(1.0 + pow(fabs(est), R), 1.0 / R)
            sst = b * est + (1.0 - b) * est / dum
            sig = sst * (sigs0 - sigr) + sigr
            out[t] = sig
            eps_prev = eps
            sig_prev = sig
    return stress

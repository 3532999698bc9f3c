"""Pure numpy implementations of the hot kernels.

These are the reference implementations; ``wspnet._kernels_cy`` provides
compiled equivalents with the same signatures and the backend module picks
one at import time.  All arrays are float64 and C-contiguous.

Gate blocks are laid out along the last weight axis: LSTM order is
(input, forget, candidate, output); GRU order is (reset, update, candidate).
Bouc-Wen kernels return a status flag (0 ok, 1 diverged) instead of raising
so that both backends stay exception-free.
"""

import numpy as np


def _sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def lstm_forward(x, wx, wh, b):
    """x [B,T,Din], wx [Din,4H], wh [H,4H], b [4H] -> (h [B,T,H], cache)."""
    B, T, _ = x.shape
    H = wh.shape[0]
    ig = np.empty((B, T, H))
    fg = np.empty((B, T, H))
    gg = np.empty((B, T, H))
    og = np.empty((B, T, H))
    c = np.empty((B, T, H))
    tc = np.empty((B, T, H))
    h = np.empty((B, T, H))
    xz = x @ wx + b
    h_prev = np.zeros((B, H))
    c_prev = np.zeros((B, H))
    for t in range(T):
        z = xz[:, t] + h_prev @ wh
        i_t = _sigmoid(z[:, :H])
        f_t = _sigmoid(z[:, H : 2 * H])
        g_t = np.tanh(z[:, 2 * H : 3 * H])
        o_t = _sigmoid(z[:, 3 * H :])
        c_t = f_t * c_prev + i_t * g_t
        tc_t = np.tanh(c_t)
        ig[:, t] = i_t
        fg[:, t] = f_t
        gg[:, t] = g_t
        og[:, t] = o_t
        c[:, t] = c_t
        tc[:, t] = tc_t
        h[:, t] = o_t * tc_t
        h_prev = h[:, t]
        c_prev = c_t
    return h, (ig, fg, gg, og, c, tc)


def lstm_backward(x, h, wx, wh, cache, dh):
    """Reverse the LSTM recurrence; returns (dx, dwx, dwh, db)."""
    ig, fg, gg, og, c, tc = cache
    B, T, Din = x.shape
    H = wh.shape[0]
    dx = np.empty((B, T, Din))
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * H)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    dz = np.empty((B, 4 * H))
    for t in range(T - 1, -1, -1):
        dh_t = dh[:, t] + dh_next
        tc_t = tc[:, t]
        do = dh_t * tc_t
        dc = dc_next + dh_t * og[:, t] * (1.0 - tc_t * tc_t)
        c_prev = c[:, t - 1] if t > 0 else np.zeros((B, H))
        h_prev = h[:, t - 1] if t > 0 else np.zeros((B, H))
        i_t, f_t, g_t, o_t = ig[:, t], fg[:, t], gg[:, t], og[:, t]
        dz[:, :H] = dc * g_t * i_t * (1.0 - i_t)
        dz[:, H : 2 * H] = dc * c_prev * f_t * (1.0 - f_t)
        dz[:, 2 * H : 3 * H] = dc * i_t * (1.0 - g_t * g_t)
        dz[:, 3 * H :] = do * o_t * (1.0 - o_t)
        dwx += x[:, t].T @ dz
        dwh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dx[:, t] = dz @ wx.T
        dh_next = dz @ wh.T
        dc_next = dc * f_t
    return dx, dwx, dwh, db


def gru_forward(x, wx, wh, b):
    """x [B,T,Din], wx [Din,3H], wh [H,3H], b [3H] -> (h [B,T,H], cache)."""
    B, T, _ = x.shape
    H = wh.shape[0]
    rg = np.empty((B, T, H))
    zg = np.empty((B, T, H))
    ng = np.empty((B, T, H))
    h = np.empty((B, T, H))
    xz = x @ wx + b
    h_prev = np.zeros((B, H))
    for t in range(T):
        r_t = _sigmoid(xz[:, t, :H] + h_prev @ wh[:, :H])
        z_t = _sigmoid(xz[:, t, H : 2 * H] + h_prev @ wh[:, H : 2 * H])
        n_t = np.tanh(xz[:, t, 2 * H :] + (r_t * h_prev) @ wh[:, 2 * H :])
        h_t = z_t * h_prev + (1.0 - z_t) * n_t
        rg[:, t] = r_t
        zg[:, t] = z_t
        ng[:, t] = n_t
        h[:, t] = h_t
        h_prev = h_t
    return h, (rg, zg, ng)


def gru_backward(x, h, wx, wh, cache, dh):
    """Reverse the GRU recurrence; returns (dx, dwx, dwh, db)."""
    rg, zg, ng = cache
    B, T, Din = x.shape
    H = wh.shape[0]
    dx = np.empty((B, T, Din))
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(3 * H)
    dh_next = np.zeros((B, H))
    da = np.empty((B, 3 * H))
    wh_r = wh[:, :H]
    wh_z = wh[:, H : 2 * H]
    wh_n = wh[:, 2 * H :]
    for t in range(T - 1, -1, -1):
        dh_t = dh[:, t] + dh_next
        h_prev = h[:, t - 1] if t > 0 else np.zeros((B, H))
        r_t, z_t, n_t = rg[:, t], zg[:, t], ng[:, t]
        dz_gate = dh_t * (h_prev - n_t)
        dn = dh_t * (1.0 - z_t)
        dan = dn * (1.0 - n_t * n_t)
        dan_wh = dan @ wh_n.T
        dr = dan_wh * h_prev
        dar = dr * r_t * (1.0 - r_t)
        daz = dz_gate * z_t * (1.0 - z_t)
        da[:, :H] = dar
        da[:, H : 2 * H] = daz
        da[:, 2 * H :] = dan
        dwx += x[:, t].T @ da
        dwh[:, :H] += h_prev.T @ dar
        dwh[:, H : 2 * H] += h_prev.T @ daz
        dwh[:, 2 * H :] += (r_t * h_prev).T @ dan
        db += da.sum(axis=0)
        dx[:, t] = da @ wx.T
        dh_next = dh_t * z_t + dar @ wh_r.T + daz @ wh_z.T + dan_wh * r_t
    return dx, dwx, dwh, db


def _bw_rate(v, z, A, beta, gamma, n_exp):
    az = np.abs(z)
    return A * v - beta * np.abs(v) * az ** (n_exp - 1.0) * z - gamma * v * az**n_exp


def boucwen_z_path(x, A, beta, gamma, n_exp, dt, substeps):
    """Hysteretic variable driven by a sampled displacement path.

    The velocity is held piecewise constant on each sample interval and the
    z-equation is advanced with RK4 in ``substeps`` sub-intervals.  Returns
    (z [T], status) with z[0] = 0.
    """
    T = x.shape[0]
    z = np.empty(T)
    z[0] = 0.0
    zc = 0.0
    h = dt / substeps
    for k in range(T - 1):
        v = (x[k + 1] - x[k]) / dt
        for _ in range(substeps):
            k1 = _bw_rate(v, zc, A, beta, gamma, n_exp)
            k2 = _bw_rate(v, zc + 0.5 * h * k1, A, beta, gamma, n_exp)
            k3 = _bw_rate(v, zc + 0.5 * h * k2, A, beta, gamma, n_exp)
            k4 = _bw_rate(v, zc + h * k3, A, beta, gamma, n_exp)
            zc = zc + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(zc) or abs(zc) > 1e9:
            return z, 1
        z[k + 1] = zc
    return z, 0


def _mdof_rates(state, ag_t, masses, ks, alphas, A, beta, gamma, n_exp, a0, a1):
    n = masses.shape[0]
    u = state[:n]
    v = state[n : 2 * n]
    z = state[2 * n :]
    drift = np.empty(n)
    dvel = np.empty(n)
    drift[0] = u[0]
    dvel[0] = v[0]
    drift[1:] = u[1:] - u[:-1]
    dvel[1:] = v[1:] - v[:-1]
    shear = alphas * ks * drift + (1.0 - alphas) * ks * z
    elastic = ks * dvel  # K @ v expressed through story velocity differences
    force = np.empty(n)
    force[:-1] = shear[:-1] - shear[1:]
    force[-1] = shear[-1]
    damp = np.empty(n)
    damp[:-1] = elastic[:-1] - elastic[1:]
    damp[-1] = elastic[-1]
    damp = a0 * masses * v + a1 * damp
    acc = -(force + damp) / masses - ag_t
    dz = _bw_rate(dvel, z, A, beta, gamma, n_exp)
    return np.concatenate([v, acc, dz])


def boucwen_mdof(ag, masses, ks, alphas, A, beta, gamma, n_exp, a0, a1, dt, substeps):
    """Shear-building response to ground acceleration via RK4.

    Per-story Bouc-Wen restoring forces plus Rayleigh damping
    (a0 * M + a1 * K_elastic).  Returns (drift [T, n], status); drifts are
    inter-story, sampled at the excitation sample times, starting from rest.
    """
    T = ag.shape[0]
    n = masses.shape[0]
    out = np.zeros((T, n))
    state = np.zeros(3 * n)
    h = dt / substeps
    args = (masses, ks, alphas, A, beta, gamma, n_exp, a0, a1)
    for k in range(T - 1):
        ag0 = ag[k]
        slope = (ag[k + 1] - ag[k]) / dt
        for j in range(substeps):
            t0 = j * h
            a_beg = ag0 + slope * t0
            a_mid = ag0 + slope * (t0 + 0.5 * h)
            a_end = ag0 + slope * (t0 + h)
            k1 = _mdof_rates(state, a_beg, *args)
            k2 = _mdof_rates(state + 0.5 * h * k1, a_mid, *args)
            k3 = _mdof_rates(state + 0.5 * h * k2, a_mid, *args)
            k4 = _mdof_rates(state + h * k3, a_end, *args)
            state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(state).all() or np.abs(state).max() > 1e9:
            return out, 1
        u = state[:n]
        out[k + 1, 0] = u[0]
        out[k + 1, 1:] = u[1:] - u[:-1]
    return out, 0


def gmp_stress(strain, E0, fy, b, R0, cR1, cR2):
    """Cyclic steel stress along a strain path (smooth bilinear transitions).

    Tracks reversal points and the asymptote intersection of the current
    branch; the transition sharpness R degrades with the plastic excursion
    of the previous branch through the cR1/cR2 rule.
    """
    T = strain.shape[0]
    stress = np.empty(T)
    if abs(1.0 - b) < 1e-12:
        np.multiply(strain, E0, out=stress)
        return stress
    eps_y = fy / E0
    esh = b * E0
    kon = 0
    eps_prev = 0.0
    sig_prev = 0.0
    epsmax = eps_y
    epsmin = -eps_y
    epspl = eps_y
    epss0 = eps_y
    sigs0 = fy
    epsr = 0.0
    sigr = 0.0
    for t in range(T):
        eps = strain[t]
        deps = eps - eps_prev
        if kon == 0:
            if deps == 0.0:
                stress[t] = 0.0
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
        xi = abs((epspl - epss0) / eps_y)
        R = R0 * (1.0 - cR1 * xi / (cR2 + xi))
        est = (eps - epsr) / (epss0 - epsr)
        dum = (1.0 + abs(est) ** R) ** (1.0 / R)
        sst = b * est + (1.0 - b) * est / dum
        sig = sst * (sigs0 - sigr) + sigr
        stress[t] = sig
        eps_prev = eps
        sig_prev = sig
    return stress

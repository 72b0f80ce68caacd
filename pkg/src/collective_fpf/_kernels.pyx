# cython: language_level=3
"""Compiled chain kernels.

Same contracts as ``_kernels_py`` (see that module for shape
conventions); the per-entity and per-dimension loops run as C code.
All randomness is pre-drawn by the caller, so results agree with the
pure-numpy backend to floating-point roundoff.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt as c_sqrt

from .errors import FilterDivergenceError, StepSizeError

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double _PSD_BLOWUP_TOL = 1e-6


cdef int _psd_suspicious(double[:, ::1] cov, Py_ssize_t dim):
    """1 when the Gershgorin lower bound cannot certify min eig >= -tol."""
    cdef Py_ssize_t k, l
    cdef double radius, bound
    cdef double worst = 1e300
    for k in range(dim):
        radius = 0.0
        for l in range(dim):
            if l != k:
                radius += cov[k, l] if cov[k, l] >= 0 else -cov[k, l]
        bound = cov[k, k] - radius
        if bound < worst:
            worst = bound
    return 1 if worst < -_PSD_BLOWUP_TOL else 0


cdef _check_psd(double[:, ::1] cov, Py_ssize_t dim, Py_ssize_t step):
    cdef double a, b, c, min_eig
    if not _psd_suspicious(cov, dim):
        return
    if dim == 1:
        min_eig = cov[0, 0]
    elif dim == 2:
        a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
        min_eig = 0.5 * (a + c) - c_sqrt(0.25 * (a - c) * (a - c) + b * b)
    else:
        min_eig = float(np.linalg.eigvalsh(np.asarray(cov)).min())
    if min_eig < -_PSD_BLOWUP_TOL:
        raise FilterDivergenceError(
            f"covariance lost positive semidefiniteness at step {step}; "
            "dt is too large for these dynamics", step=step)


def lg_paths(A, Q_sqrt, h_row, double sigma_w, double dt, x0, proc_noise,
             obs_noise):
    cdef double[:, ::1] A_v = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] Qs = np.ascontiguousarray(Q_sqrt, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(h_row, dtype=np.float64)
    cdef double[:, :, ::1] noise = np.ascontiguousarray(proc_noise, dtype=np.float64)
    cdef double[:, ::1] obs = np.ascontiguousarray(obs_noise, dtype=np.float64)
    cdef Py_ssize_t num_steps = noise.shape[0]
    cdef Py_ssize_t num_agents = noise.shape[1]
    cdef Py_ssize_t dim = noise.shape[2]
    states_arr = np.empty((num_steps + 1, num_agents, dim))
    dz_arr = np.empty((num_steps, num_agents))
    cdef double[:, :, ::1] states = states_arr
    cdef double[:, ::1] dz = dz_arr
    cdef double[:, ::1] start = np.ascontiguousarray(x0, dtype=np.float64)
    cdef Py_ssize_t t, j, k, l
    cdef double sq = c_sqrt(dt)
    cdef double acc, drift, dnoise
    for j in range(num_agents):
        for k in range(dim):
            states[0, j, k] = start[j, k]
    for t in range(num_steps):
        for j in range(num_agents):
            acc = 0.0
            for k in range(dim):
                acc += h[k] * states[t, j, k]
            dz[t, j] = acc * dt + sigma_w * sq * obs[t, j]
            for k in range(dim):
                drift = 0.0
                dnoise = 0.0
                for l in range(dim):
                    drift += A_v[k, l] * states[t, j, l]
                    dnoise += Qs[k, l] * noise[t, j, l]
                states[t + 1, j, k] = states[t, j, k] + drift * dt + sq * dnoise
    return states_arr, dz_arr


def ctmc_paths(jump_rates, obs_values, double sigma_w, double dt, states0,
               jump_uniforms, obs_noise):
    cdef double[:, ::1] rates = np.ascontiguousarray(jump_rates, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(obs_values, dtype=np.float64)
    cdef cnp.int64_t[::1] start = np.ascontiguousarray(states0, dtype=np.int64)
    cdef double[:, ::1] uni = np.ascontiguousarray(jump_uniforms, dtype=np.float64)
    cdef double[:, ::1] obs = np.ascontiguousarray(obs_noise, dtype=np.float64)
    cdef Py_ssize_t num_steps = uni.shape[0]
    cdef Py_ssize_t num_agents = uni.shape[1]
    cdef Py_ssize_t dim = rates.shape[0]
    states_arr = np.empty((num_steps + 1, num_agents), dtype=np.int64)
    dz_arr = np.empty((num_steps, num_agents))
    cdef cnp.int64_t[:, ::1] states = states_arr
    cdef double[:, ::1] dz = dz_arr
    prob_arr = np.ascontiguousarray(np.asarray(jump_rates).T * dt)
    np.fill_diagonal(prob_arr, 0.0)
    cdef double[:, ::1] prob = prob_arr
    cdef Py_ssize_t t, j, x
    cdef cnp.int64_t cur, target
    cdef double sq = c_sqrt(dt)
    cdef double u, cum
    for j in range(num_agents):
        states[0, j] = start[j]
    for t in range(num_steps):
        for j in range(num_agents):
            cur = states[t, j]
            dz[t, j] = h[cur] * dt + sigma_w * sq * obs[t, j]
            u = uni[t, j]
            cum = 0.0
            target = cur
            for x in range(dim):
                cum += prob[cur, x]
                if u < cum:
                    target = x
                    break
            states[t + 1, j] = target
    return states_arr, dz_arr


def ckf_chain(A, h_row, Q, double sigma_w, double dt, m0, Sigma0, mean_inc,
              inc_var):
    cdef double[:, ::1] A_v = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(h_row, dtype=np.float64)
    cdef double[:, ::1] Q_v = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[::1] mi = np.ascontiguousarray(mean_inc, dtype=np.float64)
    cdef double[::1] iv = np.ascontiguousarray(inc_var, dtype=np.float64)
    cdef Py_ssize_t num_steps = mi.shape[0]
    cdef Py_ssize_t dim = A_v.shape[0]
    means_arr = np.empty((num_steps + 1, dim))
    covs_arr = np.empty((num_steps + 1, dim, dim))
    cdef double[:, ::1] means = means_arr
    cdef double[:, :, ::1] covs = covs_arr
    means_arr[0] = np.asarray(m0, dtype=np.float64)
    covs_arr[0] = np.asarray(Sigma0, dtype=np.float64)
    scratch = np.empty((dim, dim))
    cov_h_arr = np.empty(dim)
    cdef double[:, ::1] a_cov = scratch
    cdef double[::1] cov_h = cov_h_arr
    cdef double sw2 = sigma_w * sigma_w
    cdef Py_ssize_t t, k, l, j
    cdef double hm, innov, gain_scale, acc
    cdef double[:, ::1] nxt_view
    for t in range(num_steps):
        hm = 0.0
        for k in range(dim):
            acc = 0.0
            for l in range(dim):
                acc += covs[t, k, l] * h[l]
            cov_h[k] = acc
            hm += h[k] * means[t, k]
        innov = (mi[t] - hm * dt) / sw2
        for k in range(dim):
            acc = 0.0
            for l in range(dim):
                acc += A_v[k, l] * means[t, l]
            means[t + 1, k] = means[t, k] + acc * dt + cov_h[k] * innov
        gain_scale = (1.0 - iv[t] / sw2) / sw2
        for k in range(dim):
            for l in range(dim):
                acc = 0.0
                for j in range(dim):
                    acc += A_v[k, j] * covs[t, j, l]
                a_cov[k, l] = acc
        for k in range(dim):
            for l in range(dim):
                covs[t + 1, k, l] = covs[t, k, l] + (
                    a_cov[k, l] + a_cov[l, k] + Q_v[k, l]
                    - gain_scale * cov_h[k] * cov_h[l]) * dt
        nxt_view = covs_arr[t + 1]
        _check_psd(nxt_view, dim, t)
    return means_arr, covs_arr


def kalman_bucy_bank(A, h_row, Q, double sigma_w, double dt, m0, Sigma0, dz):
    cdef double[:, ::1] A_v = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(h_row, dtype=np.float64)
    cdef double[:, ::1] Q_v = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[:, ::1] dz_v = np.ascontiguousarray(dz, dtype=np.float64)
    cdef Py_ssize_t num_steps = dz_v.shape[0]
    cdef Py_ssize_t num_agents = dz_v.shape[1]
    cdef Py_ssize_t dim = A_v.shape[0]
    means_arr = np.tile(np.asarray(m0, dtype=np.float64), (num_agents, 1))
    cov_arr = np.array(Sigma0, dtype=np.float64, copy=True)
    nxt_means_arr = np.empty_like(means_arr)
    nxt_cov_arr = np.empty_like(cov_arr)
    a_cov_arr = np.empty_like(cov_arr)
    cov_h_arr = np.empty(dim)
    cdef double[:, ::1] means = means_arr
    cdef double[:, ::1] cov = cov_arr
    cdef double[:, ::1] nxt_means = nxt_means_arr
    cdef double[:, ::1] nxt_cov = nxt_cov_arr
    cdef double[:, ::1] a_cov = a_cov_arr
    cdef double[::1] cov_h = cov_h_arr
    cdef double sw2 = sigma_w * sigma_w
    cdef Py_ssize_t t, j, k, l, i
    cdef double acc, hm, innov
    for t in range(num_steps):
        for k in range(dim):
            acc = 0.0
            for l in range(dim):
                acc += cov[k, l] * h[l]
            cov_h[k] = acc / sw2
        for j in range(num_agents):
            hm = 0.0
            for k in range(dim):
                hm += h[k] * means[j, k]
            innov = dz_v[t, j] - hm * dt
            for k in range(dim):
                acc = 0.0
                for l in range(dim):
                    acc += A_v[k, l] * means[j, l]
                nxt_means[j, k] = means[j, k] + acc * dt + innov * cov_h[k]
        for k in range(dim):
            for l in range(dim):
                acc = 0.0
                for i in range(dim):
                    acc += A_v[k, i] * cov[i, l]
                a_cov[k, l] = acc
        for k in range(dim):
            for l in range(dim):
                nxt_cov[k, l] = cov[k, l] + (
                    a_cov[k, l] + a_cov[l, k] + Q_v[k, l]
                    - cov_h[k] * cov_h[l] * sw2) * dt
        _check_psd(nxt_cov, dim, t)
        means_arr, nxt_means_arr = nxt_means_arr, means_arr
        means = means_arr
        nxt_means = nxt_means_arr
        cov_arr, nxt_cov_arr = nxt_cov_arr, cov_arr
        cov = cov_arr
        nxt_cov = nxt_cov_arr
    return means_arr, cov_arr


def lg_fpf_chain(A, Q_sqrt, h_row, double sigma_w, double dt, particles0,
                 proc_noise, mean_inc, inc_var):
    cdef double[:, ::1] A_v = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] Qs = np.ascontiguousarray(Q_sqrt, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(h_row, dtype=np.float64)
    cdef double[:, :, ::1] noise = np.ascontiguousarray(proc_noise, dtype=np.float64)
    cdef double[::1] mi = np.ascontiguousarray(mean_inc, dtype=np.float64)
    cdef double[::1] iv = np.ascontiguousarray(inc_var, dtype=np.float64)
    cdef Py_ssize_t num_steps = noise.shape[0]
    cdef Py_ssize_t num_particles = noise.shape[1]
    cdef Py_ssize_t dim = noise.shape[2]
    parts_arr = np.array(particles0, dtype=np.float64, copy=True)
    nxt_arr = np.empty_like(parts_arr)
    means_arr = np.empty((num_steps + 1, dim))
    covs_arr = np.empty((num_steps + 1, dim, dim))
    gain_arr = np.empty(dim)
    mbar_arr = np.empty(dim)
    cdef double[:, ::1] parts = parts_arr
    cdef double[:, ::1] nxt = nxt_arr
    cdef double[:, ::1] means = means_arr
    cdef double[:, :, ::1] covs = covs_arr
    cdef double[::1] gain = gain_arr
    cdef double[::1] mbar = mbar_arr
    cdef double sw2 = sigma_w * sigma_w
    cdef double sq = c_sqrt(dt)
    cdef Py_ssize_t t, i, k, l
    cdef double acc, alpha, hm, hx, pred, w, drift, dnoise
    for t in range(num_steps + 1):
        for k in range(dim):
            acc = 0.0
            for i in range(num_particles):
                acc += parts[i, k]
            mbar[k] = acc / num_particles
        for k in range(dim):
            for l in range(k, dim):
                acc = 0.0
                for i in range(num_particles):
                    acc += (parts[i, k] - mbar[k]) * (parts[i, l] - mbar[l])
                covs[t, k, l] = acc / (num_particles - 1)
                covs[t, l, k] = covs[t, k, l]
            means[t, k] = mbar[k]
        if t == num_steps:
            break
        hm = 0.0
        for k in range(dim):
            acc = 0.0
            for l in range(dim):
                acc += covs[t, k, l] * h[l]
            gain[k] = acc / sw2
            hm += h[k] * mbar[k]
        alpha = 0.5 * (1.0 - iv[t] / sw2)
        for i in range(num_particles):
            hx = 0.0
            for k in range(dim):
                hx += h[k] * parts[i, k]
            pred = alpha * hx + (1.0 - alpha) * hm
            w = mi[t] - pred * dt
            for k in range(dim):
                drift = 0.0
                dnoise = 0.0
                for l in range(dim):
                    drift += A_v[k, l] * parts[i, l]
                    dnoise += Qs[k, l] * noise[t, i, l]
                nxt[i, k] = parts[i, k] + drift * dt + sq * dnoise + w * gain[k]
        parts_arr, nxt_arr = nxt_arr, parts_arr
        parts = parts_arr
        nxt = nxt_arr
    return parts_arr, means_arr, covs_arr


def wonham_chain(adjoint, obs_values, double sigma_w, double dt, p0, mean_inc,
                 inc_var, quad_var):
    cdef double[:, ::1] adj = np.ascontiguousarray(adjoint, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(obs_values, dtype=np.float64)
    cdef double[::1] mi = np.ascontiguousarray(mean_inc, dtype=np.float64)
    cdef double[::1] iv = np.ascontiguousarray(inc_var, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(quad_var, dtype=np.float64)
    cdef Py_ssize_t num_steps = mi.shape[0]
    cdef Py_ssize_t dim = h.shape[0]
    probs_arr = np.empty((num_steps + 1, dim))
    cdef double[:, ::1] probs = probs_arr
    p_arr = np.array(p0, dtype=np.float64, copy=True)
    cdef double[::1] p = p_arr
    cdef double sw2 = sigma_w * sigma_w
    cdef Py_ssize_t t, k, l
    cdef double h_mean, g_mean, innov, mismatch, acc, spread, g_k, val, mass
    for k in range(dim):
        probs[0, k] = p[k]
    for t in range(num_steps):
        h_mean = 0.0
        for k in range(dim):
            h_mean += p[k] * h[k]
        g_mean = 0.0
        for k in range(dim):
            spread = h[k] - h_mean
            g_mean += p[k] * 0.5 * spread * spread
        innov = mi[t] - h_mean * dt
        mismatch = (iv[t] + qv[t]) / sw2 - 1.0
        mass = 0.0
        for k in range(dim):
            acc = 0.0
            for l in range(dim):
                acc += adj[k, l] * p[l]
            spread = h[k] - h_mean
            g_k = 0.5 * spread * spread
            val = (p[k] + acc * dt + p[k] * spread * (innov / sw2)
                   + p[k] * (g_k - g_mean) * (mismatch * dt / sw2))
            if val < 0.0:
                val = 0.0
            probs[t + 1, k] = val
            mass += val
        if not (mass == mass) or mass == float("inf") or mass < 0.5:
            raise FilterDivergenceError(
                f"belief mass is {mass:.3g} after clipping at step {t}; "
                "filter diverged", step=t)
        for k in range(dim):
            probs[t + 1, k] /= mass
            p[k] = probs[t + 1, k]
    return probs_arr


def finite_fpf_chain(jump_rates, obs_values, double sigma_w, double dt,
                     states0, uniforms, mean_inc, inc_var, quad_var):
    cdef double[::1] h = np.ascontiguousarray(obs_values, dtype=np.float64)
    cdef cnp.int64_t[::1] start = np.ascontiguousarray(states0, dtype=np.int64)
    cdef double[:, ::1] uni = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef double[::1] mi = np.ascontiguousarray(mean_inc, dtype=np.float64)
    cdef double[::1] iv = np.ascontiguousarray(inc_var, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(quad_var, dtype=np.float64)
    cdef Py_ssize_t num_steps = uni.shape[0]
    cdef Py_ssize_t num_particles = uni.shape[1]
    cdef Py_ssize_t dim = h.shape[0]
    base_arr = np.ascontiguousarray(np.asarray(jump_rates).T * dt)
    np.fill_diagonal(base_arr, 0.0)
    cdef double[:, ::1] base = base_arr
    states_arr = np.array(states0, dtype=np.int64, copy=True)
    cdef cnp.int64_t[::1] states = states_arr
    hist_arr = np.empty((num_steps + 1, dim))
    cdef double[:, ::1] hist = hist_arr
    counts_arr = np.zeros(dim, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    add_arr = np.empty(dim)
    g_arr = np.empty(dim)
    prob_arr = np.empty((dim, dim))
    cdef double[::1] add = add_arr
    cdef double[::1] g = g_arr
    cdef double[:, ::1] prob = prob_arr
    cdef double sw2 = sigma_w * sigma_w
    cdef Py_ssize_t t, i, k, x
    cdef cnp.int64_t cur, target
    cdef double h_mean, innov, mismatch, anchor, anchor_var, spread
    cdef double du, du_var, total, worst, u, cum, g_min, g_max, h_min, h_max
    for i in range(num_particles):
        counts[states[i]] += 1
    for k in range(dim):
        hist[0, k] = counts[k] / <double>num_particles
    for t in range(num_steps):
        h_mean = 0.0
        for k in range(dim):
            h_mean += hist[t, k] * h[k]
        h_min = h[0]
        h_max = h[0]
        for k in range(dim):
            if h[k] < h_min:
                h_min = h[k]
            if h[k] > h_max:
                h_max = h[k]
        g_min = 1e300
        g_max = -1e300
        for k in range(dim):
            spread = h[k] - h_mean
            g[k] = 0.5 * spread * spread
            if g[k] < g_min:
                g_min = g[k]
            if g[k] > g_max:
                g_max = g[k]
        innov = mi[t] - h_mean * dt
        mismatch = ((iv[t] + qv[t]) / sw2 - 1.0) * dt
        anchor = h_min if innov >= 0 else h_max
        anchor_var = g_min if mismatch >= 0 else g_max
        for k in range(dim):
            du = hist[t, k] * (h[k] - anchor) * (innov / sw2)
            du_var = hist[t, k] * (g[k] - anchor_var) * (mismatch / sw2)
            if du < 0.0 or du_var < 0.0:
                raise FilterDivergenceError(
                    f"modulated jump increment went negative at step {t}",
                    step=t)
            add[k] = du + du_var
        worst = 0.0
        for k in range(dim):
            total = 0.0
            for x in range(dim):
                prob[k, x] = 0.0 if x == k else base[k, x] + add[x]
                total += prob[k, x]
            if total > worst:
                worst = total
        if worst >= 1.0:
            raise StepSizeError(
                f"total per-particle jump probability {worst:.3g} >= 1 "
                f"at step {t}; decrease dt")
        for i in range(num_particles):
            cur = states[i]
            u = uni[t, i]
            cum = 0.0
            target = cur
            for x in range(dim):
                cum += prob[cur, x]
                if u < cum:
                    target = x
                    break
            if target != cur:
                counts[cur] -= 1
                counts[target] += 1
                states[i] = target
        for k in range(dim):
            hist[t + 1, k] = counts[k] / <double>num_particles
    return states_arr, hist_arr

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Euler stepper for delayed vehicle chains.

Semantics are specified in cavchain.kernel (the numpy fallback is the
readable reference); this file is its straight C translation.
"""


cdef inline double _clip(double x, double lo, double hi) noexcept nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef inline double _policy(int kind, double h_st, double h_go, double vmax,
                           double h) noexcept nogil:
    cdef double span = h_go - h_st
    cdef double f
    if kind == 1:
        # concave branch only: saturate past the parabola vertex at h_go
        if h > h_go:
            h = h_go
        f = vmax * (1.0 - ((h_go - h) / span) ** 2)
    else:
        f = vmax * (h - h_st) / span
    return _clip(f, 0.0, vmax)


def euler_drive(double[:, ::1] s, double[:, ::1] v, double[:, ::1] u,
                double[:, ::1] a, int n_steps, double dt,
                double[::1] alpha, double[::1] beta_ref, double[::1] v_ref,
                signed char[::1] pol_kind, double[::1] h_st, double[::1] h_go,
                double[::1] v_max, double[::1] a_min, double[::1] a_max,
                double[::1] length, long long[::1] delay_steps,
                int[::1] front, double[::1] front_offset,
                int[::1] link_ptr, int[::1] link_idx, double[::1] link_gain,
                unsigned char[::1] link_clamp, double[::1] link_vmax,
                int lead_mode, int lead_pos,
                double[::1] a_lead, double[::1] v_lead,
                unsigned char[::1] floored):
    """Fill rows 1..n_steps of s, v and rows 0..n_steps of u, a in place.

    Returns (status, step, rear): status 1 means a collision was detected in
    the state at `step` with `rear` the array position of the rear vehicle.
    """
    cdef int V = alpha.shape[0]
    cdef int k, i, j, f_i, p
    cdef long long jd
    cdef double h, cmd, tv, vnext, acc_k
    cdef int bad_i

    for k in range(n_steps + 1):
        for i in range(V):
            if lead_mode != 0 and i == lead_pos:
                u[k, i] = a_lead[k]
                continue
            cmd = beta_ref[i] * (v_ref[i] - v[k, i])
            f_i = front[i]
            if f_i >= 0:
                h = s[k, f_i] + front_offset[i] - s[k, i] - length[i]
                cmd += alpha[i] * (_policy(pol_kind[i], h_st[i], h_go[i],
                                           v_max[i], h) - v[k, i])
            for p in range(link_ptr[i], link_ptr[i + 1]):
                j = link_idx[p]
                tv = v[k, j]
                if link_clamp[p] == 1 and tv > link_vmax[p]:
                    tv = link_vmax[p]
                cmd += link_gain[p] * (tv - v[k, i])
            u[k, i] = cmd

        for i in range(V):
            if lead_mode != 0 and i == lead_pos:
                a[k, i] = a_lead[k]
                continue
            jd = k - delay_steps[i]
            if jd >= 0:
                a[k, i] = _clip(u[jd, i], -a_min[i], a_max[i])
            else:
                a[k, i] = 0.0

        if k == n_steps:
            break

        for i in range(V):
            vnext = v[k, i] + dt * a[k, i]
            if vnext < 0.0:
                vnext = 0.0
                floored[i] = 1
            v[k + 1, i] = vnext
            s[k + 1, i] = s[k, i] + dt * v[k, i]
        if lead_mode == 2:
            v[k + 1, lead_pos] = v_lead[k + 1]

        bad_i = -1
        for i in range(V):
            f_i = front[i]
            if f_i >= 0:
                h = s[k + 1, f_i] + front_offset[i] - s[k + 1, i] - length[i]
                if h <= 0.0:
                    bad_i = i
                    break
        if bad_i >= 0:
            return 1, k + 1, bad_i

    return 0, n_steps, -1

"""Compiled integration kernel for the nonlinear ambient simulator.

The per-step work (converter-bus Newton solve inside a stochastic
predictor-corrector) is far too fine-grained for vectorized numpy, so the
whole integration loop runs under numba.  Status codes instead of
exceptions: 0 ok, 1 Newton failure, 2 divergence, 3 singular Jacobian.
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_NEWTON = 1
STATUS_DIVERGED = 2
STATUS_SINGULAR = 3


@njit(cache=True)
def _newton_vsc(y, emf, delta, theta, v, p_t, q_t, p_e_out, tol, maxiter):
    """Newton on converter buses; fills p_e_out, mutates theta/v in place."""
    ng = emf.shape[0]
    nv = p_t.shape[0]
    n = ng + nv
    u = np.empty(n, np.complex128)
    for i in range(ng):
        u[i] = emf[i] * np.exp(1j * delta[i])

    if nv == 0:
        for r in range(ng):
            acc = 0.0 + 0.0j
            for c in range(ng):
                acc += y[r, c] * u[c]
            p_e_out[r] = (u[r] * np.conj(acc)).real
        return STATUS_OK

    jac = np.empty((2 * nv, 2 * nv))
    resid = np.empty(2 * nv)
    s_v = np.empty(nv, np.complex128)
    for _ in range(maxiter):
        for k in range(nv):
            u[ng + k] = v[k] * np.exp(1j * theta[k])
        mism = 0.0
        for r in range(nv):
            acc = 0.0 + 0.0j
            for c in range(n):
                acc += y[ng + r, c] * u[c]
            s_v[r] = u[ng + r] * np.conj(acc)
            resid[r] = s_v[r].real - p_t[r]
            resid[nv + r] = s_v[r].imag - q_t[r]
            if abs(resid[r]) > mism:
                mism = abs(resid[r])
            if abs(resid[nv + r]) > mism:
                mism = abs(resid[nv + r])
        if mism < tol:
            for r in range(ng):
                acc = 0.0 + 0.0j
                for c in range(n):
                    acc += y[r, c] * u[c]
                p_e_out[r] = (u[r] * np.conj(acc)).real
            return STATUS_OK

        for r in range(nv):
            w_rr = u[ng + r] * np.conj(y[ng + r, ng + r] * u[ng + r])
            for c in range(nv):
                if c == r:
                    dang = 1j * (s_v[r] - w_rr)
                    dmag = (s_v[r] + w_rr) / v[r]
                else:
                    w_rc = u[ng + r] * np.conj(y[ng + r, ng + c] * u[ng + c])
                    dang = -1j * w_rc
                    dmag = w_rc / v[c]
                jac[r, c] = dang.real
                jac[r, nv + c] = dmag.real
                jac[nv + r, c] = dang.imag
                jac[nv + r, nv + c] = dmag.imag

        sol = np.linalg.solve(jac, resid.reshape(2 * nv, 1))
        for k in range(nv):
            theta[k] -= sol[k, 0]
            v[k] -= sol[nv + k, 0]
    return STATUS_NEWTON


@njit(cache=True)
def integrate_swing(y, emf, inertia, damping, p_m, noise_gain, sigma,
                    k1, k2, p_ref, q_ref, omega0, h, sub_steps,
                    n_burn, n_rec, noise, delta_init, theta_init, v_init,
                    heun, multiplicative, tol, maxiter):
    """Stochastic integration of the swing dynamics with algebraic buses.

    noise has one row of standard normals per sub-step.  Returns
    (deltas, omegas, status, failed_step).
    """
    ng = emf.shape[0]
    nv = p_ref.shape[0]
    sqrt_h = np.sqrt(h)

    delta = delta_init.copy()
    omega = np.ones(ng)
    theta = theta_init.copy()
    v = v_init.copy()

    deltas = np.empty((n_rec, ng))
    omegas = np.empty((n_rec, ng))
    p_e = np.empty(ng)
    p_t = np.empty(nv)
    q_t = np.empty(nv)
    shock = np.empty(ng)
    d1 = np.empty(ng)
    w1 = np.empty(ng)
    d_pred = np.empty(ng)
    w_pred = np.empty(ng)

    y_eff = y.copy()
    out = 0
    total = (n_burn + n_rec) * sub_steps
    for step in range(total):
        z = noise[step]
        if multiplicative:
            for i in range(ng):
                y_eff[i, i] = y[i, i] * (1.0 + sigma[i] * z[i] / sqrt_h)
            for i in range(ng):
                shock[i] = 0.0
        else:
            for i in range(ng):
                shock[i] = noise_gain[i] * z[i] * sqrt_h

        # drift at the current state
        for k in range(nv):
            acc_p = p_ref[k]
            acc_q = q_ref[k]
            for i in range(ng):
                acc_p += k1[k, i] * (omega[i] - 1.0)
                acc_q += k2[k, i] * (omega[i] - 1.0)
            p_t[k] = acc_p
            q_t[k] = acc_q
        status = _newton_vsc(y_eff, emf, delta, theta, v, p_t, q_t, p_e, tol, maxiter)
        if status != STATUS_OK:
            return deltas, omegas, status, step
        for i in range(ng):
            d1[i] = omega0 * (omega[i] - 1.0)
            w1[i] = (p_m[i] - p_e[i] - damping[i] * (omega[i] - 1.0)) / inertia[i]

        if heun:
            for i in range(ng):
                d_pred[i] = delta[i] + h * d1[i]
                w_pred[i] = omega[i] + h * w1[i] + shock[i]
            for k in range(nv):
                acc_p = p_ref[k]
                acc_q = q_ref[k]
                for i in range(ng):
                    acc_p += k1[k, i] * (w_pred[i] - 1.0)
                    acc_q += k2[k, i] * (w_pred[i] - 1.0)
                p_t[k] = acc_p
                q_t[k] = acc_q
            status = _newton_vsc(y_eff, emf, d_pred, theta, v, p_t, q_t, p_e, tol, maxiter)
            if status != STATUS_OK:
                return deltas, omegas, status, step
            for i in range(ng):
                d2 = omega0 * (w_pred[i] - 1.0)
                w2 = (p_m[i] - p_e[i] - damping[i] * (w_pred[i] - 1.0)) / inertia[i]
                delta[i] += 0.5 * h * (d1[i] + d2)
                omega[i] += 0.5 * h * (w1[i] + w2) + shock[i]
        else:
            for i in range(ng):
                delta[i] += h * d1[i]
                omega[i] += h * w1[i] + shock[i]

        for i in range(ng):
            if not (np.isfinite(delta[i]) and np.isfinite(omega[i])):
                return deltas, omegas, STATUS_DIVERGED, step

        if (step + 1) % sub_steps == 0:
            sample = (step + 1) // sub_steps
            if sample > n_burn:
                for i in range(ng):
                    deltas[out, i] = delta[i]
                    omegas[out, i] = omega[i]
                out += 1

    return deltas, omegas, STATUS_OK, total

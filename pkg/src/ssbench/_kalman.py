"""Compiled univariate Kalman filter/smoother kernels with exact diffuse initialization.

Observations are processed one element at a time (``H_t`` must already be
diagonal). Per element the filter records the innovation, its variance split
into a diffuse part ``F_inf`` and a finite part ``F_star``, and the gain
numerators ``P_star z`` and ``P_inf z``; the smoother consumes these.

Element kinds: 0 = not processed, 1 = diffuse update, 2 = regular update.
"""
from __future__ import annotations

import numpy as np
from numba import njit

LOG2PI = np.log(2.0 * np.pi)

OK = 0
SINGULAR = 1
NONFINITE = 2


@njit(cache=True)
def _maxabs(A):
    out = 0.0
    for x in A.ravel():
        if abs(x) > out:
            out = abs(x)
    return out


@njit(cache=True)
def _sym(A):
    return 0.5 * (A + A.T)


@njit(cache=True)
def filter_kernel(ys, Zs, hs, ps, T, RQR, a1, Ps1, Pi1, skip_ll, diffuse_tol, cond_max, store):
    n, pmax, m = Zs.shape
    nn = n if store else 1
    a_pred = np.zeros((nn, m))
    Ps_pred = np.zeros((nn, m, m))
    Pi_pred = np.zeros((nn, m, m))
    a_filt = np.zeros((nn, m))
    Ps_filt = np.zeros((nn, m, m))
    Pi_filt = np.zeros((nn, m, m))
    v_out = np.full((nn, pmax), np.nan)
    fs_out = np.full((nn, pmax), np.nan)
    fi_out = np.zeros((nn, pmax))
    ms_out = np.zeros((nn, pmax, m))
    mi_out = np.zeros((nn, pmax, m))
    kind = np.zeros((nn, pmax), dtype=np.int8)

    a = a1.copy()
    Ps = Ps1.copy()
    Pi = Pi1.copy()
    diffuse = _maxabs(Pi) > diffuse_tol
    ll = 0.0
    n_diffuse = 0
    n_skipped = 0
    for t in range(n):
        if store:
            a_pred[t] = a
            Ps_pred[t] = Ps
            Pi_pred[t] = Pi
        if diffuse or n_skipped < skip_ll:
            n_diffuse = t + 1
        p = ps[t]
        if p >= 2 and not diffuse and n_skipped >= skip_ll:
            Zt = Zs[t, :p, :]
            F = Zt @ Ps @ Zt.T
            for i in range(p):
                F[i, i] += hs[t, i]
            ev = np.linalg.eigvalsh(_sym(F))
            if ev[0] <= 0.0 or ev[-1] > cond_max * ev[0]:
                return SINGULAR, t, ll, n_diffuse, a_pred, Ps_pred, Pi_pred, a_filt, Ps_filt, Pi_filt, v_out, fs_out, fi_out, ms_out, mi_out, kind
        for i in range(p):
            z = Zs[t, i]
            y = ys[t, i]
            if not np.isfinite(y):
                return NONFINITE, t, ll, n_diffuse, a_pred, Ps_pred, Pi_pred, a_filt, Ps_filt, Pi_filt, v_out, fs_out, fi_out, ms_out, mi_out, kind
            v = y - z @ a
            Ms = Ps @ z
            fs = z @ Ms + hs[t, i]
            fi = 0.0
            if diffuse:
                Mi = Pi @ z
                fi = z @ Mi
            if diffuse and fi > diffuse_tol:
                k0 = Mi / fi
                a = a + k0 * v
                Ps = Ps + np.outer(Mi, Mi) * (fs / (fi * fi)) - (np.outer(Ms, Mi) + np.outer(Mi, Ms)) / fi
                Pi = Pi - np.outer(Mi, Mi) / fi
                Ps = _sym(Ps)
                Pi = _sym(Pi)
                k = 1
                if store:
                    mi_out[t, i] = Mi
            else:
                if not fs > 0.0:
                    return SINGULAR, t, ll, n_diffuse, a_pred, Ps_pred, Pi_pred, a_filt, Ps_filt, Pi_filt, v_out, fs_out, fi_out, ms_out, mi_out, kind
                fi = 0.0
                a = a + Ms * (v / fs)
                Ps = _sym(Ps - np.outer(Ms, Ms) / fs)
                if n_skipped >= skip_ll:
                    ll += -0.5 * (LOG2PI + np.log(fs) + v * v / fs)
                else:
                    n_skipped += 1
                k = 2
            if store:
                v_out[t, i] = v
                fs_out[t, i] = fs
                fi_out[t, i] = fi
                ms_out[t, i] = Ms
                kind[t, i] = k
        if diffuse and _maxabs(Pi) <= diffuse_tol:
            Pi = np.zeros((m, m))
            diffuse = False
        if store:
            a_filt[t] = a
            Ps_filt[t] = Ps
            Pi_filt[t] = Pi
        a = T @ a
        Ps = _sym(T @ Ps @ T.T + RQR)
        if diffuse:
            Pi = _sym(T @ Pi @ T.T)
    return OK, -1, ll, n_diffuse, a_pred, Ps_pred, Pi_pred, a_filt, Ps_filt, Pi_filt, v_out, fs_out, fi_out, ms_out, mi_out, kind


@njit(cache=True)
def smoother_kernel(Zs, ps, T, a_pred, Ps_pred, Pi_pred, v, fs, fi, ms, mi, kind):
    n, pmax, m = Zs.shape
    a_sm = np.zeros((n, m))
    V_sm = np.zeros((n, m, m))
    I = np.eye(m)
    r0 = np.zeros(m)
    r1 = np.zeros(m)
    N0 = np.zeros((m, m))
    N1 = np.zeros((m, m))
    N2 = np.zeros((m, m))
    for t in range(n - 1, -1, -1):
        for i in range(ps[t] - 1, -1, -1):
            z = Zs[t, i]
            zz = np.outer(z, z)
            if kind[t, i] == 1:
                f_i = fi[t, i]
                f_s = fs[t, i]
                k0 = mi[t, i] / f_i
                k1 = ms[t, i] / f_i - mi[t, i] * (f_s / (f_i * f_i))
                L0 = I - np.outer(k0, z)
                L1 = -np.outer(k1, z)
                r1 = z * (v[t, i] / f_i) + L0.T @ r1 + L1.T @ r0
                r0 = L0.T @ r0
                N2 = (
                    zz * (-f_s / (f_i * f_i))
                    + L0.T @ N2 @ L0
                    + L0.T @ N1 @ L1
                    + L1.T @ N1.T @ L0
                    + L1.T @ N0 @ L1
                )
                N1 = zz / f_i + L0.T @ N1 @ L0 + L1.T @ N0 @ L0
                N0 = L0.T @ N0 @ L0
            elif kind[t, i] == 2:
                f_s = fs[t, i]
                L = I - np.outer(ms[t, i] / f_s, z)
                r0 = z * (v[t, i] / f_s) + L.T @ r0
                N0 = zz / f_s + L.T @ N0 @ L
                N1 = N1 @ L
        Ps = Ps_pred[t]
        Pi = Pi_pred[t]
        a_sm[t] = a_pred[t] + Ps @ r0 + Pi @ r1
        PiN1Ps = Pi @ N1 @ Ps
        V = Ps - Ps @ N0 @ Ps - PiN1Ps - PiN1Ps.T - Pi @ N2 @ Pi
        V_sm[t] = 0.5 * (V + V.T)
        r0 = T.T @ r0
        r1 = T.T @ r1
        N0 = T.T @ N0 @ T
        N1 = T.T @ N1 @ T
        N2 = T.T @ N2 @ T
    return a_sm, V_sm

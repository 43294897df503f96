"""Numba-compiled versions of the kernels in ``_numpy``; same arithmetic, explicit loops."""

import numpy as np
from numba import njit


@njit(cache=True)
def project_l1_ball(v, radius):
    n = v.shape[0]
    total = 0.0
    for i in range(n):
        total += abs(v[i])
    out = v.copy()
    if total <= radius:
        return out
    theta = l1_threshold(v, radius)
    for i in range(n):
        a = abs(v[i]) - theta
        if a <= 0.0:
            out[i] = 0.0
        elif v[i] > 0:
            out[i] = a
        else:
            out[i] = -a
    return out


@njit(cache=True)
def l1_threshold(v, radius):
    n = v.shape[0]
    a = np.abs(v)
    if a.sum() <= radius:
        return 0.0
    u = np.sort(a)[::-1]
    css = 0.0
    theta = 0.0
    for k in range(n):
        css += u[k]
        t = (css - radius) / (k + 1.0)
        if u[k] > t:
            theta = t
    return theta


@njit(cache=True)
def _project_cone(v, d, nX, iu0, iu1, sc, out):
    X = np.zeros((d, d))
    for k in range(nX):
        val = v[k] / sc[k]
        X[iu0[k], iu1[k]] = val
        X[iu1[k], iu0[k]] = val
    lam, V = np.linalg.eigh(X)
    for j in range(d):
        if lam[j] < 0.0:
            lam[j] = 0.0
    Xp = (V * lam) @ V.T
    for k in range(nX):
        out[k] = Xp[iu0[k], iu1[k]] * sc[k]
    for k in range(nX, v.shape[0]):
        out[k] = v[k]


@njit(cache=True)
def _dr_loop(v, z, w, Vr, z0, qr, alpha, d, nX, n_free, iu0, iu1, sc, n_iter):
    n = v.shape[0]
    lo = nX + n_free
    p = np.empty(n)
    for _ in range(n_iter):
        _project_cone(v, d, nX, iu0, iu1, sc, z)
        for k in range(lo, n):
            if z[k] < 0.0:
                z[k] = 0.0
        for k in range(n):
            p[k] = 2.0 * z[k] - v[k] - qr[k]
        t = Vr.T @ p
        wp = Vr @ t
        for k in range(n):
            w[k] = p[k] - wp[k] + z0[k]
            v[k] += alpha * (w[k] - z[k])
    _project_cone(v, d, nX, iu0, iu1, sc, z)
    for k in range(lo, n):
        if z[k] < 0.0:
            z[k] = 0.0


def project_cone(v, d, nX, iu0, iu1, sc, out):
    _project_cone(v, d, nX, iu0, iu1, sc, out)
    return out


def dr_chunk(v, z, w, Vr, z0, qr, alpha, d, nX, n_free, iu0, iu1, sc, n_iter):
    _dr_loop(v, z, w, Vr, z0, qr, float(alpha), int(d), int(nX), int(n_free),
             iu0, iu1, sc, int(n_iter))

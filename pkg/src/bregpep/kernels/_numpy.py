"""Pure-numpy implementations of the hot loops."""

import numpy as np


def project_l1_ball(v, radius):
    """Euclidean projection of ``v`` onto ``{u : |u|_1 <= radius}`` (sort and threshold)."""
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u * k > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def l1_threshold(v, radius):
    """Soft-threshold level of the l1-ball projection (0 when ``v`` is inside)."""
    a = np.abs(v)
    if a.sum() <= radius:
        return 0.0
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u * k > css - radius)[0][-1]
    return (css[rho] - radius) / (rho + 1.0)


def project_cone(v, d, nX, iu0, iu1, sc, out):
    """Project ``v`` onto PSD(svec) x free x nonnegative, writing into ``out``."""
    X = np.zeros((d, d))
    X[iu0, iu1] = v[:nX] / sc
    X[iu1, iu0] = v[:nX] / sc
    lam, V = np.linalg.eigh(X)
    lam = np.maximum(lam, 0.0)
    Xp = (V * lam) @ V.T
    out[:nX] = Xp[iu0, iu1] * sc
    out[nX:] = v[nX:]
    return out


def dr_chunk(v, z, w, Vr, z0, qr, alpha, d, nX, n_free, iu0, iu1, sc, n_iter):
    """``n_iter`` Douglas-Rachford steps; ``z`` in the cone, ``w`` on the affine set."""
    lo = nX + n_free
    for _ in range(n_iter):
        project_cone(v, d, nX, iu0, iu1, sc, z)
        np.maximum(z[lo:], 0.0, out=z[lo:])
        p = 2.0 * z - v - qr
        w[:] = p - Vr @ (Vr.T @ p) + z0
        v += alpha * (w - z)
    project_cone(v, d, nX, iu0, iu1, sc, z)
    np.maximum(z[lo:], 0.0, out=z[lo:])

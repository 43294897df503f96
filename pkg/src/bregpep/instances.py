"""Closed-form worst-case function families.

* :class:`SmoothedInstance`: the zero-preserving pair ``(f_mu, h_mu)`` on
  ``R^n``.  ``f_mu`` is the Moreau envelope of ``|x - x_*|_inf`` and
  ``h_mu = (f_mu + d_mu) / L``.
* :class:`WorstCase1D`: smoothed one-dimensional worst case of NoLips.
* :func:`eval_pathological_nd`: nonsmooth ``N``-dimensional pair with
  orthogonal subgradients.

All inverse gradient maps (mirror steps) are solved exactly because the
gradients involved are piecewise linear once the l1-projection threshold is
fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

# ---------------------------------------------------------------------------
# projections and proximal maps


def project_l1_ball(v, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{u : |u|_1 <= radius}``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    return kernels.project_l1_ball(np.asarray(v, dtype=float).ravel(), float(radius))


def prox_linf(x, mu: float, center=None) -> np.ndarray:
    """``argmin_u |u - center|_inf + |x - u|^2 / (2 mu)`` by Moreau decomposition."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    x = np.asarray(x, dtype=float).ravel()
    c = np.zeros_like(x) if center is None else np.asarray(center, dtype=float).ravel()
    w = x - c
    return c + w - mu * project_l1_ball(w / mu, 1.0)


def _soft(u, theta):
    return np.sign(u) * np.maximum(np.abs(u) - theta, 0.0)


def _pwl_inverse(F, bps, target):
    """Solve ``F_i(z_i) = target_i`` for increasing piecewise-linear ``F_i``.

    ``bps`` has shape ``(n, m)`` (sorted per row) and ``F`` maps an ``(n, k)``
    array of abscissae, row ``i`` belonging to coordinate ``i``.
    """
    bps = np.sort(bps, axis=1)
    n, m = bps.shape
    ext = np.hstack([bps[:, :1] - 1.0, bps, bps[:, -1:] + 1.0])
    vals = F(ext)
    t = target[:, None]
    # segment s spans ext[s] .. ext[s+1]; pick the first one whose right end reaches t
    reach = vals[:, 1:] >= t
    seg = np.where(reach.any(axis=1), reach.argmax(axis=1), m)
    seg = np.minimum(seg, m)
    idx = np.arange(n)
    z0, z1 = ext[idx, seg], ext[idx, seg + 1]
    v0, v1 = vals[idx, seg], vals[idx, seg + 1]
    dz = z1 - z0
    # zero-length segments (coincident breakpoints) are skipped by the ordering above
    slope = np.where(dz > 0, (v1 - v0) / np.where(dz > 0, dz, 1.0), np.inf)
    return np.where(np.isfinite(slope), z0 + (target - v0) / slope, z0)


# ---------------------------------------------------------------------------
# the lower-bound family


@dataclass(frozen=True)
class SmoothedInstance:
    """``f_mu``, ``d_mu`` and ``h_mu = (f_mu + d_mu) / L`` on ``R^n``."""

    n: int
    mu: float
    eta: float
    L: float = 1.0
    x_star: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0 < self.mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        if not self.eta > 4 * self.mu * self.n ** 2:
            raise ValueError("need eta > 4 mu n^2")
        if not self.L > 0:
            raise ValueError("L must be positive")
        xs = 1.0 + self.eta / np.arange(1, self.n + 1)
        xs.setflags(write=False)
        object.__setattr__(self, "x_star", xs)

    @classmethod
    def for_lower_bound(cls, N: int, eps: float, L: float = 1.0) -> "SmoothedInstance":
        """``n = 2N + 1``, ``eta = eps / 4``, ``mu = eps / (20 n^2)``."""
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        n = 2 * N + 1
        return cls(n=n, mu=eps / (20 * n ** 2), eta=eps / 4, L=L)

    def f_hat(self, x) -> float:
        return float(np.abs(np.asarray(x, float) - self.x_star).max())

    def prox(self, x) -> np.ndarray:
        return prox_linf(x, self.mu, self.x_star)

    def check_dim(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.n:
            raise ValueError(f"expected a vector of dimension {self.n}, got {x.shape[0]}")
        return x


def eval_fmu(inst: SmoothedInstance, x, order: str = "value"):
    x = inst.check_dim(x)
    w = x - inst.x_star
    p = project_l1_ball(w / inst.mu, 1.0)
    if order == "gradient":
        return p
    y = w - inst.mu * p  # prox minus the centre
    return float(np.abs(y).max() + 0.5 * inst.mu * p @ p)


def _phi(t, mu):
    return np.where(t >= mu, t - 0.5 * mu, t * t / (2.0 * mu))


def _dphi(t, mu):
    return np.minimum(1.0, t / mu)


def eval_dmu(inst: SmoothedInstance, x, order: str = "value"):
    x = inst.check_dim(x)
    mu = inst.mu
    if order == "gradient":
        return mu * x + _dphi(x, mu)
    return float(0.5 * mu * x @ x + _phi(x, mu).sum())


def eval_hmu(inst: SmoothedInstance, x, order: str = "value"):
    if order == "gradient":
        return (eval_fmu(inst, x, "gradient") + eval_dmu(inst, x, "gradient")) / inst.L
    return (eval_fmu(inst, x) + eval_dmu(inst, x)) / inst.L


def _hmu_grad_fixed_theta(inst, theta):
    c, mu, L = inst.x_star, inst.mu, inst.L

    def F(Z):
        return (_soft((Z - c[:, None]) / mu, theta) + mu * Z + _dphi(Z, mu)) / L

    def bps():
        return np.column_stack([c - mu * theta, c + mu * theta, np.full_like(c, mu)])

    return F, bps()


def mirror_hmu(inst: SmoothedInstance, y, tol: float = 1e-10, method: str = "exact",
               max_iter: int = 1_000_000) -> np.ndarray:
    """``z`` with ``grad h_mu(z) = y``.

    ``method="exact"`` bisects on the l1-projection threshold ``theta``; for a
    fixed ``theta`` each coordinate is a strictly increasing piecewise-linear
    equation.  ``method="gd"`` runs gradient descent on ``h_mu(u) - <y, u>``
    with step ``L / (2/mu + mu)``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    y = inst.check_dim(y)
    if method == "gd":
        return _mirror_gd(inst, y, tol, max_iter)
    if method != "exact":
        raise ValueError(method)
    mu = inst.mu

    def solve_theta(theta):
        F, B = _hmu_grad_fixed_theta(inst, theta)
        return _pwl_inverse(F, B, y)

    def l1_of(theta, z):
        return np.abs(_soft((z - inst.x_star) / mu, theta)).sum()

    z = solve_theta(0.0)
    if l1_of(0.0, z) > 1.0:
        lo, hi = 0.0, 1.0
        while l1_of(hi, solve_theta(hi)) > 1.0:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if l1_of(mid, solve_theta(mid)) > 1.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-16 * max(1.0, hi):
                break
        z = solve_theta(hi)
    res = np.abs(eval_hmu(inst, z, "gradient") - y).max()
    if res > max(tol, 1e-9):
        raise RuntimeError(f"mirror map residual {res:.3e} above tolerance")
    return z


def _mirror_gd(inst, y, tol, max_iter):
    step = inst.L / (2.0 / inst.mu + inst.mu)
    z = np.zeros(inst.n)
    for it in range(max_iter):
        r = eval_hmu(inst, z, "gradient") - y
        if np.linalg.norm(r) <= tol:
            return z
        z = z - step * r
    raise RuntimeError(f"gradient descent did not converge: residual {np.linalg.norm(r):.3e}")


def support_size(v, tol: float = 1e-8) -> int:
    """Number of leading coordinates needed so that the rest is below ``tol``."""
    v = np.abs(np.asarray(v, dtype=float))
    big = np.nonzero(v > tol)[0]
    return int(big[-1] + 1) if big.size else 0


# ---------------------------------------------------------------------------
# one-dimensional worst case of NoLips


@dataclass(frozen=True)
class WorstCase1D:
    """Huber of ``|x - 1|`` and ``h = f + smoothed max(-N x, 0) + q x^2 / 2``.

    The hinge is replaced by ``N x^2 / (2 mu)`` on ``[-mu, 0]`` and by
    ``-N x - N mu / 2`` left of ``-mu``.  With ``L = 1``, ``L h - f`` is
    convex and ``h`` is ``q``-strongly convex.
    """

    N: int
    mu: float
    q: float | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.q is None:
            object.__setattr__(self, "q", 0.1 * self.mu)
        if not self.q > 0:
            raise ValueError("q must be positive")

    L = 1.0
    x_star = 1.0
    f_star = 0.0

    @property
    def x0(self) -> float:
        """Start of the near-worst-case run: on the linear part of the hinge."""
        return -self.mu

    def _huber(self, x):
        t = x - 1.0
        a = np.abs(t)
        return np.where(a <= self.mu, t * t / (2 * self.mu), a - 0.5 * self.mu)

    def _dhuber(self, x):
        return np.clip((x - 1.0) / self.mu, -1.0, 1.0)

    def _hinge(self, x):
        N, mu = self.N, self.mu
        return np.where(x >= 0, 0.0, np.where(x >= -mu, N * x * x / (2 * mu), -N * x - 0.5 * N * mu))

    def _dhinge(self, x):
        N, mu = self.N, self.mu
        return np.where(x >= 0, 0.0, np.where(x >= -mu, N * x / mu, -float(N)))

    def breakpoints(self):
        return np.array([-self.mu, 0.0, 1.0 - self.mu, 1.0 + self.mu])

    def mirror(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        F = lambda Z: self._dhuber(Z) + self._dhinge(Z) + self.q * Z  # noqa: E731
        B = np.tile(self.breakpoints(), (y.size, 1))
        return _pwl_inverse(F, B, y)


def eval_worst1d(wc: WorstCase1D, x, which: str = "f", order: str = "value"):
    x = np.asarray(x, dtype=float)
    if which == "f":
        out = wc._dhuber(x) if order == "gradient" else wc._huber(x)
    elif which == "h":
        if order == "gradient":
            out = wc._dhuber(x) + wc._dhinge(x) + wc.q * x
        else:
            out = wc._huber(x) + wc._hinge(x) + 0.5 * wc.q * x * x
    else:
        raise ValueError(f"which must be 'f' or 'h', got {which!r}")
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# nonsmooth N-dimensional pair


def eval_pathological_nd(N: int, x, which: str = "f"):
    """``(value, subgradient)`` of ``|x - 1|_inf`` or of it plus ``sum_{i>=2} max(-x_i, 0)``.

    Ties in the max pick the lowest index; hinge kinks get subgradient 0.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != N:
        raise ValueError(f"expected dimension {N}, got {x.shape[0]}")
    w = x - 1.0
    a = np.abs(w)
    val = float(a.max())
    g = np.zeros(N)
    if val > 0:
        i = int(np.argmax(a))
        g[i] = math.copysign(1.0, w[i])
    if which == "f":
        return val, g
    if which != "h":
        raise ValueError(f"which must be 'f' or 'h', got {which!r}")
    tail = x[1:]
    val += float(np.maximum(-tail, 0.0).sum())
    g[1:] += np.where(tail < 0, -1.0, 0.0)
    return val, g


# ---------------------------------------------------------------------------
# sampling for plots


def sample_instance(kind: str, grid, **params):
    """Rows of sampled values; columns depend on ``kind``.

    ``grid`` is a 1-D array of abscissae (1-D instances) or a pair of arrays
    for a 2-D mesh.  Higher dimensions are sampled along the ray
    ``t * x_star``.
    """
    if kind == "worst1d":
        wc = WorstCase1D(int(params.get("N", 3)), float(params.get("mu", 0.1)), params.get("q"))
        xs = np.asarray(grid, dtype=float)
        cols = ["x", "f", "df", "h", "dh"]
        rows = [[x, eval_worst1d(wc, x), eval_worst1d(wc, x, "f", "gradient"),
                 eval_worst1d(wc, x, "h"), eval_worst1d(wc, x, "h", "gradient")] for x in xs]
        return cols, rows
    if kind == "lower-bound":
        n = int(params.get("n", 2))
        mu = float(params.get("mu", 0.01))
        eta = float(params.get("eta", max(0.25, 5 * mu * n * n)))
        inst = SmoothedInstance(n, mu, eta, float(params.get("L", 1.0)))
        if n == 1:
            pts = [np.array([t]) for t in np.asarray(grid, float)]
        elif n == 2:
            gx, gy = grid
            pts = [np.array([a, b]) for a in gx for b in gy]
        else:
            pts = [t * inst.x_star for t in np.asarray(grid, float)]
        cols = [f"x{i + 1}" for i in range(min(n, 2))] + ["f_hat", "f_mu", "h_mu"]
        rows = []
        for p in pts:
            lead = list(p[:2]) if n <= 2 else [float(p[0] / inst.x_star[0])]
            rows.append(lead + [inst.f_hat(p), eval_fmu(inst, p), eval_hmu(inst, p)])
        if n > 2:
            cols = ["t", "f_hat", "f_mu", "h_mu"]
        return cols, rows
    if kind == "pathological-nd":
        N = int(params.get("N", 2))
        if N == 1:
            pts = [np.array([t]) for t in np.asarray(grid, float)]
            cols = ["x1"]
        elif N == 2:
            gx, gy = grid
            pts = [np.array([a, b]) for a in gx for b in gy]
            cols = ["x1", "x2"]
        else:
            pts = [np.full(N, t) for t in np.asarray(grid, float)]
            cols = ["t"]
        rows = []
        for p in pts:
            lead = list(p) if N <= 2 else [float(p[0])]
            rows.append(lead + [eval_pathological_nd(N, p, "f")[0], eval_pathological_nd(N, p, "h")[0]])
        return cols + ["f", "h"], rows
    raise ValueError(f"unknown instance {kind!r}")

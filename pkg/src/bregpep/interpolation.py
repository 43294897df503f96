"""Interpolation conditions as linear constraints over ``(F, H, G)``.

Vectors are handled as coefficient vectors over the tracked rows of the Gram
matrix, so ``<u, v>`` is the Frobenius product of ``G`` with the symmetrised
outer product of the two coefficient vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .model import (
    G_BLOCK,
    S_BLOCK,
    X_BLOCK,
    DiscreteRepresentation,
    IndexSet,
)

INF = math.inf


@dataclass(frozen=True)
class LinearConstraint:
    """``<coeffs_F, F> + <coeffs_H, H> + <coeffs_G, G> + <coeffs_aux, aux>  sense  rhs``."""

    coeffs_F: np.ndarray
    coeffs_H: np.ndarray
    coeffs_G: np.ndarray
    rhs: float = 0.0
    sense: str = ">="
    tag: str = ""
    coeffs_aux: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.sense not in (">=", "="):
            raise ValueError(f"sense must be '>=' or '=', got {self.sense!r}")
        if not np.allclose(self.coeffs_G, self.coeffs_G.T, atol=1e-14):
            raise ValueError(f"coeffs_G of {self.tag} is not symmetric")

    def lhs(self, F, H, G, aux=None) -> float:
        val = self.coeffs_F @ F + self.coeffs_H @ H + np.sum(self.coeffs_G * G)
        if self.coeffs_aux.size:
            val += self.coeffs_aux @ np.asarray(aux)
        return float(val)

    def residual(self, F, H, G, aux=None) -> float:
        """``lhs - rhs``; feasible means ``>= 0`` (or ``== 0`` for equalities)."""
        return self.lhs(F, H, G, aux) - self.rhs

    def violation(self, F, H, G, aux=None) -> float:
        r = self.residual(F, H, G, aux)
        return abs(r) if self.sense == "=" else max(-r, 0.0)

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "sense": self.sense,
            "rhs": self.rhs,
            "coeffs_F": self.coeffs_F.tolist(),
            "coeffs_H": self.coeffs_H.tolist(),
            "coeffs_G": self.coeffs_G.tolist(),
            "coeffs_aux": self.coeffs_aux.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearConstraint":
        return cls(
            np.array(d["coeffs_F"], dtype=float),
            np.array(d["coeffs_H"], dtype=float),
            np.array(d["coeffs_G"], dtype=float),
            float(d["rhs"]),
            d["sense"],
            d["tag"],
            np.array(d.get("coeffs_aux", []), dtype=float),
        )


def sym_outer(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Coefficient matrix of ``<u, v>``."""
    return 0.5 * (np.outer(u, v) + np.outer(v, u))


@dataclass(frozen=True)
class FunctionPoint:
    """A sampled point of some function in a PEP layout.

    ``x`` and ``grad`` are coefficient vectors over the Gram rows; ``cF`` and
    ``cH`` give the function value as a combination of the ``F`` and ``H``
    entries (the ``Lh - f`` family mixes both).
    """

    label: object
    x: np.ndarray
    grad: np.ndarray
    cF: np.ndarray
    cH: np.ndarray


def pair_constraint(pi: FunctionPoint, pj: FunctionPoint, mu: float, Lsm: float,
                    tag: str) -> LinearConstraint:
    """``f_i - f_j - <g_j, x_i - x_j> >= (1/2L)|g_i - g_j|^2
    + mu/(2(1 - mu/L)) |x_i - x_j - (g_i - g_j)/L|^2`` expanded over ``G``."""
    dx = pi.x - pj.x
    A = -sym_outer(pj.grad, dx)
    if Lsm != INF:
        dg = pi.grad - pj.grad
        A -= sym_outer(dg, dg) / (2.0 * Lsm)
        if mu > 0:
            w = dx - dg / Lsm
            A -= mu / (2.0 * (1.0 - mu / Lsm)) * sym_outer(w, w)
    elif mu > 0:
        A -= 0.5 * mu * sym_outer(dx, dx)
    return LinearConstraint(pi.cF - pj.cF, pi.cH - pj.cH, A, 0.0, ">=", tag)


def class_constraints(points, mu: float = 0.0, Lsm: float = INF,
                      family: str = "f") -> list:
    """Interpolation inequalities for every ordered pair of ``points``."""
    _check_class(mu, Lsm)
    out = []
    for pi in points:
        for pj in points:
            if pi.label == pj.label:
                continue
            out.append(pair_constraint(pi, pj, mu, Lsm,
                                       f"{family}[{pi.label},{pj.label}]"))
    return out


def _check_class(mu, Lsm):
    if mu < 0:
        raise ValueError(f"strong convexity modulus must be >= 0, got {mu}")
    if not mu < Lsm:
        raise ValueError(f"need mu < Lsm, got mu={mu}, Lsm={Lsm}")


def standard_points(I: IndexSet, L: float | None = None, family: str = "f") -> list:
    """Function points of ``f`` (or of ``d = L h - f``) in the ``[x; g; s]`` layout."""
    n = I.size
    eye = np.eye(n)
    dim = 3 * n
    pts = []
    for lab in I.labels:
        k = I.position(lab)
        x = np.zeros(dim)
        x[I.row(X_BLOCK, lab)] = 1.0
        g = np.zeros(dim)
        g[I.row(G_BLOCK, lab)] = 1.0
        if family == "f":
            pts.append(FunctionPoint(lab, x, g, eye[k], np.zeros(n)))
        else:
            s = np.zeros(dim)
            s[I.row(S_BLOCK, lab)] = 1.0
            pts.append(FunctionPoint(lab, x, L * s - g, -eye[k], L * eye[k]))
    return pts


def convex_constraints(I: IndexSet) -> list:
    """``f_i - f_j - <g_j, x_i - x_j> >= 0`` for all ordered pairs ``i != j``."""
    return class_constraints(standard_points(I), 0.0, INF, "cvx-f")


def smooth_strongly_convex_constraints(I: IndexSet, mu: float, Lsm: float) -> list:
    _check_class(mu, Lsm)
    family = "cvx-f" if (mu == 0 and Lsm == INF) else "ssc-f"
    return class_constraints(standard_points(I), mu, Lsm, family)


def bregman_pair_constraints(I: IndexSet, L: float) -> list:
    """Convexity of ``f`` and of ``L h - f`` over all ordered pairs."""
    if not L > 0:
        raise ValueError("L must be positive")
    return (class_constraints(standard_points(I), 0.0, INF, "cvx-f")
            + class_constraints(standard_points(I, L, "d"), 0.0, INF, "cvx-d"))


def _pair_residuals(X, F, Gr):
    """``R[i, j] = F_i - F_j - <Gr_j, X_i - X_j>``."""
    inner = Gr @ X.T  # inner[j, i] = <g_j, x_i>
    return F[:, None] - F[None, :] - inner.T + np.diag(inner)[None, :]


def strict_feasibility_check(rep: DiscreteRepresentation, L: float) -> dict:
    X, G, S = rep.stacked("x"), rep.stacked("g"), rep.stacked("s")
    F, H = rep.stacked("f"), rep.stacked("h")
    n = F.shape[0]
    off = ~np.eye(n, dtype=bool)
    rf = _pair_residuals(X, F, G)
    rd = _pair_residuals(X, L * H - F, L * S - G)
    min_slack = float(min(rf[off].min(), rd[off].min()))
    dist = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=-1)
    distinct = bool(np.all(dist[off] > 0))
    return {"feasible": distinct and min_slack > 0, "min_slack": min_slack,
            "distinct": distinct}


class InterpolationError(ValueError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


@dataclass
class FunctionModel:
    """An interpolating convex function built from ``(x_i, f_i, g_i)`` samples."""

    kind: str
    xs: np.ndarray
    fs: np.ndarray
    gs: np.ndarray
    mu_sc: float | None = None
    L_sm: float | None = None

    def __call__(self, u) -> float:
        return self.value(u)

    def value(self, u) -> float:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.kind == "max-of-tangents":
            return float(np.max(self.fs + self.gs @ u - np.sum(self.gs * self.xs, axis=1)))
        return self._smooth(u)[0]

    def gradient(self, u) -> np.ndarray:
        """A gradient (for the max-of-tangents kind, the lowest active index)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.kind == "max-of-tangents":
            vals = self.fs + self.gs @ u - np.sum(self.gs * self.xs, axis=1)
            return self.gs[int(np.argmax(vals))].copy()
        return self._smooth(u)[1]

    def is_subgradient(self, g, at, n_probe: int = 64, seed: int = 0,
                       tol: float = 1e-9) -> bool:
        """Probe the subgradient inequality on random points and the basis points."""
        rng = np.random.default_rng(seed)
        at = np.atleast_1d(np.asarray(at, dtype=float))
        scale = 1.0 + np.abs(self.xs).max()
        probes = np.vstack([self.xs, at + scale * rng.standard_normal((n_probe, at.size))])
        f0 = self.value(at)
        return all(self.value(p) >= f0 + g @ (p - at) - tol * (1 + abs(f0)) for p in probes)

    def _smooth(self, u):
        # (mu, L)-interpolant: mu/2|u|^2 + conjugate-based (L - mu)-smooth part,
        # evaluated through a QP over the simplex of sample weights.
        mu, L = self.mu_sc, self.L_sm
        Lp = L - mu
        X = self.xs
        ft = self.fs - 0.5 * mu * np.sum(X * X, axis=1)
        gt = self.gs - mu * X
        a = ft + gt @ u - Lp * (X @ u) - np.sum(gt * gt, axis=1) / (2 * Lp)
        B = (Lp * X - gt).T
        lam = _simplex_qp(a, B, 1.0 / (2 * Lp))
        xbar, gbar = lam @ X, lam @ gt
        val = 0.5 * Lp * (u @ u) + lam @ a + (B @ lam) @ (B @ lam) / (2 * Lp)
        grad = gbar + Lp * (u - xbar)
        return float(val + 0.5 * mu * (u @ u)), grad + mu * u


def _simplex_qp(a, B, c):
    """``min_{w in simplex} a.w + c |B w|^2``; SLSQP then an exact KKT polish."""
    m = a.shape[0]
    Q = 2 * c * (B.T @ B)
    k0 = int(np.argmin(a + np.diag(Q) / 2))
    w0 = np.zeros(m)
    w0[k0] = 1.0
    if m == 1:
        return w0
    res = minimize(
        lambda w: a @ w + 0.5 * w @ Q @ w,
        w0,
        jac=lambda w: a + Q @ w,
        bounds=[(0, None)] * m,
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1, "jac": lambda w: np.ones(m)}],
        method="SLSQP",
        options={"ftol": 1e-15, "maxiter": 500},
    )
    w = np.clip(res.x, 0, None)
    w /= w.sum()
    best = w
    best_val = a @ w + 0.5 * w @ Q @ w
    if a @ w0 + 0.5 * w0 @ Q @ w0 <= best_val:
        best, best_val = w0, a @ w0 + 0.5 * w0 @ Q @ w0
    support = np.flatnonzero(w > 1e-9)
    k = support.size
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = Q[np.ix_(support, support)]
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.concatenate([-a[support], [1.0]])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    if np.all(sol[:k] >= 0):
        wp = np.zeros(m)
        wp[support] = sol[:k]
        if a @ wp + 0.5 * wp @ Q @ wp <= best_val + 1e-15:
            best = wp
    return best


def _as_samples(points):
    xs = np.array([np.atleast_1d(np.asarray(p[0], dtype=float)) for p in points])
    fs = np.array([float(p[1]) for p in points])
    gs = np.array([np.atleast_1d(np.asarray(p[2], dtype=float)) for p in points])
    if xs.shape != gs.shape:
        raise ValueError("x and g samples must share one dimension")
    return xs, fs, gs


def interpolate_convex(points, tol: float = 1e-12) -> FunctionModel:
    """Max-of-tangents interpolant ``u -> max_i f_i + <g_i, u - x_i>``."""
    xs, fs, gs = _as_samples(points)
    R = _pair_residuals(xs, fs, gs)
    np.fill_diagonal(R, np.inf)
    scale = 1.0 + np.abs(fs).max()
    i, j = np.unravel_index(np.argmin(R), R.shape)
    if R[i, j] < -tol * scale:
        raise InterpolationError(
            f"not convex-interpolable: pair ({i}, {j}) has residual {R[i, j]:.3e}",
            pair=(int(i), int(j)),
        )
    return FunctionModel("max-of-tangents", xs, fs, gs)


def interpolate_strict(points) -> FunctionModel:
    """Differentiable, strictly convex interpolant through strongly convex smoothing."""
    xs, fs, gs = _as_samples(points)
    m = xs.shape[0]
    if m == 1:
        return _single_point_model(xs, fs, gs)
    R = _pair_residuals(xs, fs, gs)
    dx = np.sum((xs[:, None] - xs[None, :]) ** 2, axis=-1)
    dg = np.sum((gs[:, None] - gs[None, :]) ** 2, axis=-1)
    relevant = (dx + dg) > 0
    np.fill_diagonal(relevant, False)
    if not relevant.any():
        return _single_point_model(xs[:1], fs[:1], gs[:1])
    nu = float(R[relevant].min())
    if nu <= 0:
        i, j = np.argwhere(relevant & (R <= nu))[0]
        raise InterpolationError(
            f"strict conditions violated: pair ({i}, {j}) has residual {nu:.3e}",
            pair=(int(i), int(j)),
        )
    r = float((dx + dg).max())
    L_sm = 2 * r / nu + 1
    mu_sc = min(nu / (2 * r), L_sm / 2)
    return FunctionModel("quadratic-augmented", xs, fs, gs, mu_sc=mu_sc, L_sm=L_sm)


def _single_point_model(xs, fs, gs):
    return _QuadraticModel("quadratic-augmented", xs, fs, gs, mu_sc=1.0, L_sm=1.0)


class _QuadraticModel(FunctionModel):
    """``f_0 + <g_0, u - x_0> + |u - x_0|^2 / 2`` through a single sample."""

    def _smooth(self, u):
        d = u - self.xs[0]
        return float(self.fs[0] + self.gs[0] @ d + 0.5 * d @ d), self.gs[0] + d

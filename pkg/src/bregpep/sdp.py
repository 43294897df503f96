"""Douglas-Rachford splitting solver for small semidefinite programs.

Problems have one PSD block ``X``, a vector of free scalars ``u`` and are
written in maximization form::

    maximize    <C, X> + c.u
    subject to  <A_k, X> + a_k.u  =  b_k     (equalities)
                <A_k, X> + a_k.u >=  b_k     (inequalities)
                X PSD

Internally every inequality gets a nonnegative slack and the stacked variable
``z = (svec X, u, slack)`` lives in ``K = PSD x R^n x R_+^m``.  The iteration
alternates the exact projection onto ``{M z = b}`` (an SVD computed once) with
the projection onto ``K`` (one symmetric eigendecomposition).
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

OPTIMAL = "Optimal"
UNBOUNDED = "UnboundedSuspected"
INFEASIBLE = "Infeasible"
MAXITER = "MaxIter"


def _env_float(name, default):
    raw = os.environ.get(name)
    return float(raw) if raw else default


@dataclass
class SolverSettings:
    eps_abs: float = field(default_factory=lambda: _env_float("BREGPEP_EPS", 1e-8))
    eps_rel: float = field(default_factory=lambda: _env_float("BREGPEP_EPS", 1e-8))
    max_iter: int = 200000
    unbounded_cap: float = 1e6
    seed: int = 0
    alpha: float = 1.6
    rho: float = 1.0
    check_every: int = 50
    adapt_rho: bool = True
    time_limit: float = float("inf")

    def __post_init__(self):
        if not (self.eps_abs > 0 and self.eps_rel > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass
class ConicProgram:
    """Maximization SDP; matrix parts are stacked as ``(m, d, d)`` arrays."""

    psd_dim: int
    n_free: int
    C: np.ndarray
    c: np.ndarray
    A_eq: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    A_in: np.ndarray
    a_in: np.ndarray
    b_in: np.ndarray
    eq_tags: list = field(default_factory=list)
    in_tags: list = field(default_factory=list)

    def __post_init__(self):
        d, n = self.psd_dim, self.n_free
        self.C = np.asarray(self.C, float).reshape(d, d)
        self.c = np.asarray(self.c, float).reshape(n)
        self.b_eq = np.asarray(self.b_eq, float).ravel()
        self.b_in = np.asarray(self.b_in, float).ravel()
        me, mi = len(self.b_eq), len(self.b_in)
        self.A_eq = np.asarray(self.A_eq, float).reshape(me, d, d)
        self.a_eq = np.asarray(self.a_eq, float).reshape(me, n)
        self.A_in = np.asarray(self.A_in, float).reshape(mi, d, d)
        self.a_in = np.asarray(self.a_in, float).reshape(mi, n)
        if not (len(self.A_eq) == len(self.a_eq) == len(self.b_eq)):
            raise ValueError("equality blocks disagree in length")
        if not (len(self.A_in) == len(self.a_in) == len(self.b_in)):
            raise ValueError("inequality blocks disagree in length")
        for A in [self.C, *self.A_eq, *self.A_in]:
            if not np.allclose(A, A.T, atol=1e-12 * (1 + np.abs(A).max())):
                raise ValueError("matrix parts must be symmetric")
        if not self.eq_tags:
            self.eq_tags = [f"eq{k}" for k in range(len(self.b_eq))]
        if not self.in_tags:
            self.in_tags = [f"in{k}" for k in range(len(self.b_in))]

    @property
    def m_eq(self):
        return len(self.b_eq)

    @property
    def m_in(self):
        return len(self.b_in)

    def objective(self, X, u):
        return float(np.sum(self.C * X) + self.c @ u)

    def lhs(self, X, u):
        eq = np.einsum("kij,ij->k", self.A_eq, X) + self.a_eq @ u
        ineq = np.einsum("kij,ij->k", self.A_in, X) + self.a_in @ u
        return eq, ineq

    def to_dict(self):
        def rows(A, a, b, tags):
            return [
                {"tag": t, "A": A[k].tolist(), "a": a[k].tolist(), "b": float(b[k])}
                for k, t in enumerate(tags)
            ]

        return {
            "sense": "maximize",
            "psd_dim": self.psd_dim,
            "n_free": self.n_free,
            "objective": {"C": self.C.tolist(), "c": self.c.tolist()},
            "eq": rows(self.A_eq, self.a_eq, self.b_eq, self.eq_tags),
            "ineq": rows(self.A_in, self.a_in, self.b_in, self.in_tags),
        }

    @classmethod
    def from_dict(cls, d):
        ps, n = d["psd_dim"], d["n_free"]

        def unpack(rows):
            if not rows:
                return np.zeros((0, ps, ps)), np.zeros((0, n)), np.zeros(0), []
            return (
                np.array([r["A"] for r in rows]),
                np.array([r["a"] for r in rows]),
                np.array([r["b"] for r in rows]),
                [r["tag"] for r in rows],
            )

        Ae, ae, be, te = unpack(d["eq"])
        Ai, ai, bi, ti = unpack(d["ineq"])
        return cls(ps, n, np.array(d["objective"]["C"]), np.array(d["objective"]["c"]),
                   Ae, ae, be, Ai, ai, bi, te, ti)

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


@dataclass
class SolverResult:
    status: str
    value: float
    X: np.ndarray
    free: np.ndarray
    duals_eq: np.ndarray
    duals_in: np.ndarray
    dual_value: float
    residuals: dict
    iterations: int
    solve_time: float
    S: np.ndarray | None = None
    state: dict | None = None

    @property
    def duals(self):
        return np.concatenate([self.duals_eq, self.duals_in])


class _Vec:
    """svec helpers for a fixed matrix size."""

    def __init__(self, d):
        self.d = d
        iu0, iu1 = np.triu_indices(d)
        self.iu0 = iu0.astype(np.int64)
        self.iu1 = iu1.astype(np.int64)
        self.sc = np.where(iu0 == iu1, 1.0, np.sqrt(2.0))
        self.n = len(iu0)

    def svec(self, A):
        return A[self.iu0, self.iu1] * self.sc

    def smat(self, v):
        X = np.zeros((self.d, self.d))
        X[self.iu0, self.iu1] = v / self.sc
        X[self.iu1, self.iu0] = v / self.sc
        return X


def _assemble(p: ConicProgram, vec: _Vec):
    nX, nf, mi = vec.n, p.n_free, p.m_in
    m = p.m_eq + mi
    M = np.zeros((m, nX + nf + mi))
    b = np.concatenate([p.b_eq, p.b_in])
    for k in range(p.m_eq):
        M[k, :nX] = vec.svec(p.A_eq[k])
        M[k, nX:nX + nf] = p.a_eq[k]
    for k in range(mi):
        r = p.m_eq + k
        M[r, :nX] = vec.svec(p.A_in[k])
        M[r, nX:nX + nf] = p.a_in[k]
        M[r, nX + nf + k] = -1.0
    q = -np.concatenate([vec.svec(p.C), p.c, np.zeros(mi)])
    return M, b, q


def _project_K(v, vec, nf):
    z = np.empty_like(v)
    kernels.project_cone(v, vec.d, vec.n, vec.iu0, vec.iu1, vec.sc, z)
    lo = vec.n + nf
    z[lo:] = np.maximum(z[lo:], 0.0)
    return z


def _project_Kdual(v, vec, nf):
    # PSD x {0} x R_+
    z = _project_K(v, vec, nf)
    z[vec.n:vec.n + nf] = 0.0
    return z


def _dist_K(v, vec, nf):
    return np.linalg.norm(v - _project_K(v, vec, nf))


def solve(p: ConicProgram, s: SolverSettings | None = None, warm_start: dict | None = None,
          backend: str | None = None) -> SolverResult:
    """Solve ``p``; ``warm_start`` is the ``state`` dict of a previous result."""
    s = s or SolverSettings()
    impl = kernels.get(backend)
    t0 = time.perf_counter()
    vec = _Vec(p.psd_dim)
    nf = p.n_free
    M, b, q = _assemble(p, vec)
    m, n = M.shape

    # Row equilibration; constraint multipliers are rescaled back at the end.
    row_norm = np.linalg.norm(M, axis=1)
    row_norm[row_norm == 0] = 1.0
    Ms, bs = M / row_norm[:, None], b / row_norm
    q_scale = max(1.0, np.abs(q).max())
    qs = q / q_scale

    if m:
        U, sv, Vt = np.linalg.svd(Ms, full_matrices=False)
        keep = sv > 1e-11 * max(sv.max(), 1e-300)
        U, sv, Vt = U[:, keep], sv[keep], Vt[keep]
        coef = U.T @ bs
        incons = np.linalg.norm(bs - U @ coef)
        Vr = np.ascontiguousarray(Vt.T)
        z0 = Vr @ (coef / sv)
    else:
        incons = 0.0
        Vr = np.zeros((n, 0))
        z0 = np.zeros(n)
        U, sv = np.zeros((0, 0)), np.zeros(0)
    if incons > 1e-8 * (1 + np.abs(bs).max(initial=0.0)):
        log.info("affine constraints inconsistent (residual %.2e)", incons)
        return _finish(p, vec, INFEASIBLE, np.zeros(n), None, M, b, q, row_norm, 0, t0,
                       {"affine_inconsistency": float(incons)}, s.rho, q_scale, U, sv, Vr)

    def proj_A(x):
        return x - Vr @ (Vr.T @ x) + z0

    rho = s.rho
    if warm_start is not None and warm_start.get("v") is not None and len(warm_start["v"]) == n:
        v = np.array(warm_start["v"], dtype=float)
        rho = float(warm_start.get("rho", rho))
    else:
        v = proj_A(np.zeros(n))
    z = np.empty(n)
    w = np.empty(n)

    b_inf = np.abs(bs).max() if m else 0.0
    b_orig = np.abs(b).max() if m else 0.0
    q_inf = np.abs(qs).max()
    status = MAXITER
    it = 0
    info = {}
    w_hist = []
    v_hist = []
    best = None
    while it < s.max_iter:
        chunk = min(s.check_every, s.max_iter - it)
        impl.dr_chunk(v, z, w, Vr, z0, qs / rho, s.alpha, vec.d, vec.n, nf,
                      vec.iu0, vec.iu1, vec.sc, chunk)
        it += chunk
        # z = proj_K(v) on exit; dual slack and multipliers from the DR fixed point
        sd = rho * (z - v)
        pri = np.abs(Ms @ z - bs).max() if m else 0.0
        r = qs - sd
        y = U @ ((Vr.T @ r) / sv) if m else np.zeros(0)
        dres = np.abs(r - Vr @ (Vr.T @ r)).max()
        pobj = qs @ z
        dobj = bs @ y if m else 0.0
        gap = abs(pobj - dobj)
        info = {"primal": float(pri), "dual": float(dres), "gap": float(gap), "rho": rho}
        ok = (pri <= s.eps_abs * (1 + b_inf) and dres <= s.eps_abs * (1 + q_inf)
              and gap <= s.eps_rel * (1 + abs(pobj) + abs(dobj)))
        if ok:
            status = OPTIMAL
            break
        if best is None or max(pri, dres, gap) < best[0]:
            best = (max(pri, dres, gap), v.copy())
        # divergence tests on the affine iterate
        w_hist.append(w.copy())
        v_hist.append(v.copy())
        if -pobj * q_scale > s.unbounded_cap * (1 + b_orig) and pri < 1e-3 * (1 + b_inf):
            status = UNBOUNDED
            info["reason"] = "objective cap"
            break
        if len(w_hist) > 20:
            dvec = w_hist[-1] - w_hist[-21]
            w_hist.pop(0)
            nd = np.linalg.norm(dvec)
            if nd > 10.0 * (1 + np.linalg.norm(z0)):
                dk = _project_K(dvec, vec, nf) / nd
                qd = qs @ dk
                if (qd < -1e-6 and np.linalg.norm(Ms @ dk) <= 1e-6
                        and np.linalg.norm(dvec / nd - dk) <= 1e-4):
                    status = UNBOUNDED
                    info["reason"] = "recession direction"
                    info["ray_slope"] = float(-qd * q_scale)
                    info["direction"] = dk
                    break
        if len(v_hist) > 20 and m:
            # a steady drift of v separates A from K: y with M^T y in K*, b.y < 0
            cvec = v_hist[-21] - v_hist[-1]
            v_hist.pop(0)
            nc = np.linalg.norm(cvec)
            if nc > 10.0 * (1 + np.linalg.norm(z0)):
                cvec /= nc
                ck = _project_Kdual(cvec, vec, nf)
                cr = Vr @ (Vr.T @ ck)
                yc = U @ ((Vr.T @ ck) / sv)
                if (np.linalg.norm(ck - cvec) <= 1e-4 and np.linalg.norm(ck - cr) <= 1e-6
                        and bs @ yc < -1e-6 * (1 + np.linalg.norm(yc))):
                    status = INFEASIBLE
                    info["reason"] = "separating certificate"
                    info["certificate_gap"] = float(-bs @ yc)
                    break
        if s.adapt_rho and it % (10 * s.check_every) == 0:
            rp = pri / (1 + b_inf)
            rd = dres / (1 + q_inf)
            if rd > 0 and rp > 0:
                ratio = rp / rd
                new = rho
                if ratio > 5:
                    new = rho * min(np.sqrt(ratio), 10.0)
                elif ratio < 0.2:
                    new = rho / min(np.sqrt(1 / ratio), 10.0)
                new = float(np.clip(new, 1e-6, 1e6))
                if new != rho:
                    v = z - sd / new
                    rho = new
        if time.perf_counter() - t0 > s.time_limit:
            break
    if status == MAXITER and best is not None:
        v = best[1]
        z = _project_K(v, vec, nf)
    return _finish(p, vec, status, z, v, M, b, q, row_norm, it, t0, info, rho, q_scale,
                   U, sv, Vr)


def _finish(p, vec, status, z, v, M, b, q, row_norm, it, t0, info, rho, q_scale, U, sv, Vr):
    nX, nf = vec.n, p.n_free
    X = vec.smat(z[:nX])
    u = z[nX:nX + nf].copy()
    m = M.shape[0]
    if v is not None and m:
        sd = rho * (z - v)
        r = q / q_scale - sd
        ys = U @ ((Vr.T @ r) / sv)
        y = ys * q_scale / row_norm
        # inequality multipliers equal the slack part of sd, which is >= 0 exactly
        y[p.m_eq:] = q_scale * sd[nX + nf:]
        S = vec.smat(sd[:nX]) * q_scale
    else:
        y = np.zeros(m)
        S = None
    # Convert to maximization multipliers: objective = sum_eq lam_k b_k - sum_in w_k (lhs_k - b_k) - <S, X>
    lam_eq = -y[:p.m_eq]
    w_in = y[p.m_eq:]
    value = p.objective(X, u)
    dual_value = float(lam_eq @ p.b_eq + (-w_in) @ p.b_in) if m else 0.0
    if status == UNBOUNDED:
        value = float("inf")
    elif status == INFEASIBLE:
        value = float("-inf")
    state = {"v": v, "rho": rho} if v is not None else None
    res = SolverResult(status, float(value), X, u, lam_eq, w_in, dual_value, dict(info), it,
                       time.perf_counter() - t0, S, state)
    return res


def verify_solution(p: ConicProgram, result: SolverResult, tol: float | None = None) -> dict:
    """Recompute constraint violations, the smallest eigenvalue and the duality gap."""
    X, u = result.X, result.free
    eq, ineq = p.lhs(X, u)
    viol_eq = np.abs(eq - p.b_eq)
    viol_in = np.maximum(p.b_in - ineq, 0.0)
    max_violation = float(max(viol_eq.max(initial=0.0), viol_in.max(initial=0.0)))
    min_eig = float(np.linalg.eigvalsh(0.5 * (X + X.T)).min())
    primal = p.objective(X, u)
    gap = abs(primal - result.dual_value)
    slack = ineq - p.b_in
    comp = float(np.abs(result.duals_in * slack).max(initial=0.0))
    rep = {
        "max_violation": max_violation,
        "min_eig": min_eig,
        "gap": float(gap),
        "primal": primal,
        "dual": result.dual_value,
        "complementarity": comp,
        "min_dual_in": float(result.duals_in.min(initial=0.0)),
    }
    if tol is not None:
        b_inf = max(np.abs(p.b_eq).max(initial=0.0), np.abs(p.b_in).max(initial=0.0))
        rep["ok"] = bool(max_violation <= tol * (1 + b_inf) and min_eig >= -tol
                         and gap <= tol * (1 + abs(primal) + abs(result.dual_value)))
    return rep

"""NoLips, IGA and a span-enforcing oracle harness.

A *Bregman gradient method* only ever queries points that are linear
combinations of vectors it has already seen: the starting point, every
``grad f`` and ``grad h`` returned by the primal oracle and every ``grad h^*``
returned by the mirror oracle.  :func:`harness_run` enforces exactly that.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import instances as inst_mod
from .pep import iga_momentum

PRIMAL = "primal"
MIRROR = "mirror"
OUTPUT = "output"


@dataclass
class FirstOrderOracle:
    f_value: Callable
    f_grad: Callable
    h_value: Callable
    h_grad: Callable
    mirror: Callable
    dim: int
    L: float
    f_star: float | None = None
    x_star: np.ndarray | None = None
    name: str = ""

    def bregman(self, x, y) -> float:
        """``D_h(x, y)``."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return float(self.h_value(x) - self.h_value(y) - self.h_grad(y) @ (x - y))


def quadratic_oracle(alpha: float, dim: int = 1, L: float = 1.0) -> FirstOrderOracle:
    """``f = alpha/2 |x|^2``, ``h = 1/2 |x|^2``; an h-smooth pair when ``alpha <= L``."""
    return FirstOrderOracle(
        f_value=lambda x: 0.5 * alpha * float(np.dot(x, x)),
        f_grad=lambda x: alpha * np.asarray(x, float),
        h_value=lambda x: 0.5 * float(np.dot(x, x)),
        h_grad=lambda x: np.array(x, dtype=float),
        mirror=lambda y: np.array(y, dtype=float),
        dim=dim, L=L, f_star=0.0, x_star=np.zeros(dim), name=f"quadratic(alpha={alpha})",
    )


def constant_oracle(c: float = 1.0, dim: int = 1) -> FirstOrderOracle:
    o = quadratic_oracle(0.0, dim)
    o.f_value = lambda x: float(c)
    o.f_star = float(c)
    o.name = "constant"
    return o


def worst1d_oracle(wc: inst_mod.WorstCase1D) -> FirstOrderOracle:
    ev = inst_mod.eval_worst1d
    return FirstOrderOracle(
        f_value=lambda x: float(ev(wc, x[0], "f")),
        f_grad=lambda x: np.array([ev(wc, x[0], "f", "gradient")]),
        h_value=lambda x: float(ev(wc, x[0], "h")),
        h_grad=lambda x: np.array([ev(wc, x[0], "h", "gradient")]),
        mirror=lambda y: wc.mirror(np.asarray(y, float)),
        dim=1, L=wc.L, f_star=0.0, x_star=np.array([1.0]), name=f"worst1d(N={wc.N}, mu={wc.mu})",
    )


def smoothed_oracle(inst: inst_mod.SmoothedInstance, tol: float = 1e-12) -> FirstOrderOracle:
    return FirstOrderOracle(
        f_value=lambda x: inst_mod.eval_fmu(inst, x),
        f_grad=lambda x: inst_mod.eval_fmu(inst, x, "gradient"),
        h_value=lambda x: inst_mod.eval_hmu(inst, x),
        h_grad=lambda x: inst_mod.eval_hmu(inst, x, "gradient"),
        mirror=lambda y: inst_mod.mirror_hmu(inst, y, tol),
        dim=inst.n, L=inst.L, f_star=0.0, x_star=np.array(inst.x_star),
        name=f"smoothed(n={inst.n}, mu={inst.mu:.3g})",
    )


@dataclass
class OracleTrace:
    records: list = field(default_factory=list)
    V: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    output: np.ndarray | None = None
    lam: float | None = None
    algorithm: str = ""

    @property
    def n_primal(self):
        return sum(r["kind"] == PRIMAL for r in self.records)

    @property
    def n_mirror(self):
        return sum(r["kind"] == MIRROR for r in self.records)

    def span_matrix(self) -> np.ndarray:
        return np.array(self.V)

    def to_csv(self, path, oracle: FirstOrderOracle):
        rows = bound_check(self, oracle)["rows"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "f_gap", "residual", "thm31_bound", "prop46_bound"])
            for r in rows:
                w.writerow([r["k"], r["f_gap"], r["residual"], r["thm31_rhs"], r["prop46_rhs"]])


@dataclass
class IgaState:
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    t: float
    sz: np.ndarray  # grad h(z)


def _record(trace, kind, query, responses):
    trace.records.append({"step": len(trace.records), "kind": kind, "query": np.array(query),
                          "responses": [np.array(r) for r in responses]})


def nolips_run(oracle: FirstOrderOracle, x0, lam: float, N: int) -> OracleTrace:
    """``x_{k+1} = grad h^*(grad h(x_k) - lam grad f(x_k))``."""
    x = np.array(x0, dtype=float)
    tr = OracleTrace(V=[x.copy()], iterates=[x.copy()], lam=lam, algorithm="nolips")
    for _ in range(N):
        g = oracle.f_grad(x)
        s = oracle.h_grad(x)
        _record(tr, PRIMAL, x, [g, s])
        tr.V += [g, s]
        y = s - lam * g
        x = oracle.mirror(y)
        _record(tr, MIRROR, y, [x])
        tr.V.append(x)
        tr.iterates.append(x.copy())
    tr.output = x
    return tr


def iga_run(oracle: FirstOrderOracle, x0, lam: float, N: int) -> OracleTrace:
    """Improved interior gradient algorithm; ``grad h(z_k)`` is carried along exactly."""
    x = np.array(x0, dtype=float)
    tr = OracleTrace(V=[x.copy()], iterates=[x.copy()], lam=lam, algorithm="iga")
    t = iga_momentum(N)
    st = IgaState(x=x.copy(), z=x.copy(), y=x.copy(), t=1.0, sz=None)
    for k in range(N):
        st.t = t[k]
        st.y = (1 - 1 / st.t) * st.x + st.z / st.t
        g = oracle.f_grad(st.y)
        s = oracle.h_grad(st.y)
        _record(tr, PRIMAL, st.y, [g, s])
        tr.V += [g, s]
        if k == 0:
            st.sz = s  # y_0 = z_0
        q = st.sz - st.t * lam * g
        z = oracle.mirror(q)
        _record(tr, MIRROR, q, [z])
        tr.V.append(z)
        st.x = (1 - 1 / st.t) * st.x + z / st.t
        st.z, st.sz = z, q
        tr.iterates.append(st.x.copy())
    tr.output = st.x
    return tr


# ---------------------------------------------------------------------------
# harness


class SpanError(ValueError):
    pass


class BudgetError(ValueError):
    pass


def _combine(coeffs, V):
    out = np.zeros_like(V[0])
    for c, v in zip(coeffs, V):
        if c != 0:
            out = out + c * v
    return out


def harness_run(oracle: FirstOrderOracle, strategy, x0, budget: dict | None = None,
                enforce_span: bool = True) -> OracleTrace:
    """Drive ``strategy`` through the oracles.

    ``strategy(trace)`` returns ``(kind, coeffs)`` with kind in ``primal``,
    ``mirror`` or ``output`` and one coefficient per vector of ``trace.V``.
    The query point (or output) is ``sum_j coeffs[j] V[j]``.  With
    ``enforce_span=False`` a strategy may return a raw point instead.
    """
    budget = budget or {PRIMAL: math.inf, MIRROR: math.inf}
    x0 = np.array(x0, dtype=float)
    tr = OracleTrace(V=[x0.copy()], iterates=[x0.copy()], algorithm=getattr(strategy, "name", ""))
    tr.lam = getattr(strategy, "lam", None)
    used = {PRIMAL: 0, MIRROR: 0}
    while True:
        kind, coeffs = strategy(tr)
        if enforce_span:
            coeffs = np.asarray(coeffs, dtype=float).ravel()
            if coeffs.shape[0] != len(tr.V):
                raise SpanError(f"expected {len(tr.V)} coefficients, got {coeffs.shape[0]}")
            point = _combine(coeffs, tr.V)
        else:
            point = np.asarray(coeffs, dtype=float)
        if kind == OUTPUT:
            tr.output = point
            return tr
        if kind not in (PRIMAL, MIRROR):
            raise ValueError(f"unknown oracle kind {kind!r}")
        if used[kind] + 1 > budget.get(kind, math.inf):
            raise BudgetError(f"{kind} budget of {budget[kind]} exceeded")
        used[kind] += 1
        if kind == PRIMAL:
            g, s = oracle.f_grad(point), oracle.h_grad(point)
            _record(tr, PRIMAL, point, [g, s])
            tr.V += [g, s]
        else:
            z = oracle.mirror(point)
            _record(tr, MIRROR, point, [z])
            tr.V.append(z)
            tr.iterates.append(z.copy())


class NoLipsStrategy:
    """NoLips written against the harness; iterates are the mirror outputs."""

    name = "nolips"

    def __init__(self, lam: float, N: int):
        self.lam, self.N = lam, N
        self._x = 0  # index of the current iterate in V

    def __call__(self, tr):
        n = len(tr.V)
        c = np.zeros(n)
        done = tr.n_mirror
        if tr.n_primal == done:  # next: primal call at x_k, or output
            if done == self.N:
                c[self._x] = 1.0
                return OUTPUT, c
            c[self._x] = 1.0
            return PRIMAL, c
        # V ends with grad f(x_k), grad h(x_k)
        c[n - 1] = 1.0
        c[n - 2] = -self.lam
        self._x = n
        return MIRROR, c


class IgaStrategy:
    """IGA written against the harness; tracks ``x_k, z_k, grad h(z_k)`` as coefficients."""

    name = "iga"

    def __init__(self, lam: float, N: int):
        self.lam, self.N = lam, N
        self.t = iga_momentum(max(N, 1))
        self._x = None
        self._z = None
        self._sz = None

    @staticmethod
    def _pad(c, n):
        out = np.zeros(n)
        out[:len(c)] = c
        return out

    def __call__(self, tr):
        n = len(tr.V)
        if self._x is None:
            self._x = self._pad([1.0], n)
            self._z = self._pad([1.0], n)
        k = tr.n_mirror
        if tr.n_primal == k:
            x, z = self._pad(self._x, n), self._pad(self._z, n)
            if k == self.N:
                return OUTPUT, x
            tk = self.t[k]
            return PRIMAL, (1 - 1 / tk) * x + z / tk
        tk = self.t[k]
        g = np.zeros(n)
        g[n - 2] = 1.0
        if k == 0:
            sz = np.zeros(n)
            sz[n - 1] = 1.0
        else:
            sz = self._pad(self._sz, n)
        q = sz - tk * self.lam * g
        self._sz = q
        znew = np.zeros(n + 1)
        znew[n] = 1.0
        self._x = (1 - 1 / tk) * self._pad(self._x, n + 1) + znew / tk
        self._z = znew
        return MIRROR, q


def lower_bound_experiment(N: int, eps: float, strategy: str = "nolips", L: float = 1.0,
                           lam: float | None = None) -> dict:
    """Run a Bregman gradient method for ``N`` primal and ``N`` mirror calls on the
    zero-preserving instance and compare with ``(1 - eps) L D_h(x_*, x_0) / (2N + 1)``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    inst = inst_mod.SmoothedInstance.for_lower_bound(N, eps, L)
    oracle = smoothed_oracle(inst)
    lam = 1.0 / L if lam is None else lam
    if isinstance(strategy, str):
        strat = {"nolips": NoLipsStrategy, "iga": IgaStrategy}[strategy](lam, N)
    else:
        strat = strategy
    x0 = np.zeros(inst.n)
    tr = harness_run(oracle, strat, x0, {PRIMAL: N, MIRROR: N})
    xbar = tr.output
    gap = oracle.f_value(xbar) - 0.0
    Dh = oracle.bregman(inst.x_star, x0)
    bound = (1 - eps) * L * Dh / (2 * N + 1)
    ratio = gap / bound
    supports = [inst_mod.support_size(v) for v in tr.V]
    return {
        "N": N, "eps": eps, "n": inst.n, "mu": inst.mu, "eta": inst.eta,
        "strategy": getattr(strat, "name", str(strategy)),
        "gap": gap, "bound": bound, "ratio": ratio, "D_h": Dh,
        "pass": bool(ratio >= 1 - 1e-6), "gap_floor_ok": bool(gap >= 1 - inst.mu),
        "last_coord": float(abs(xbar[-1])), "max_support": max(supports), "trace": tr,
    }


def bound_check(trace: OracleTrace, oracle: FirstOrderOracle) -> dict:
    """Both sides of ``f(x_k) - f_* <= D_h(x_*, x_0) / (lam k)`` and of
    ``min_{i<=k} D_h(x_{i-1}, x_i) <= 2 D_h(x_*, x_0) / (k (k-1))``."""
    if oracle.f_star is None or oracle.x_star is None:
        raise ValueError("oracle must expose f_star and x_star")
    lam = trace.lam
    xs = trace.iterates
    D0 = oracle.bregman(oracle.x_star, xs[0])
    rows = []
    min_slack_31 = math.inf
    min_slack_46 = math.inf
    best_res = math.inf
    for k in range(1, len(xs)):
        gap = oracle.f_value(xs[k]) - oracle.f_star
        res = oracle.bregman(xs[k - 1], xs[k])
        best_res = min(best_res, res)
        rhs31 = D0 / (lam * k)
        slack31 = rhs31 - gap
        min_slack_31 = min(min_slack_31, slack31)
        rhs46 = 2 * D0 / (k * (k - 1)) if k >= 2 else math.nan
        slack46 = rhs46 - best_res if k >= 2 else math.nan
        if k >= 2:
            min_slack_46 = min(min_slack_46, slack46)
        rows.append({"k": k, "f_gap": gap, "residual": res, "min_residual": best_res,
                     "thm31_rhs": rhs31, "thm31_slack": slack31,
                     "prop46_rhs": rhs46, "prop46_slack": slack46})
    return {"rows": rows, "D_h0": D0, "lhs": rows[-1]["f_gap"] if rows else None,
            "rhs": rows[-1]["thm31_rhs"] if rows else None,
            "slack": min_slack_31, "residual_slack": min_slack_46}

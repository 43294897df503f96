"""Performance-estimation programs for NoLips and IGA.

A program lists tagged linear constraints over the scalar vectors ``F``, ``H``
(function values), optional auxiliary scalars, and the Gram matrix ``G`` of
the tracked vectors.  Algorithm recursions are stored separately as vector
identities ``sum_r c_r v_r = 0``, which stand for the inner products of that
combination against every tracked vector.

For solving, the tracked vectors are written as fixed combinations of a
smaller basis (``G = lift.T @ R @ lift``).  The lift encodes the recursions,
first-order optimality ``g_* = 0`` and two gauge choices (``x_* = 0`` and
``s_* = 0``).  Both gauges are free because every interpolation inequality
and the objective are invariant under translating all points, and under adding
a linear function to ``h``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .interpolation import (
    INF,
    FunctionPoint,
    LinearConstraint,
    class_constraints,
    sym_outer,
)
from .model import STAR, IndexSet, PepMatrices, ProblemParams, numerical_rank

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Objective:
    coeffs_F: np.ndarray
    coeffs_H: np.ndarray
    coeffs_G: np.ndarray
    coeffs_aux: np.ndarray

    def value(self, F, H, G, aux) -> float:
        v = self.coeffs_F @ F + self.coeffs_H @ H + np.sum(self.coeffs_G * G)
        if self.coeffs_aux.size:
            v += self.coeffs_aux @ aux
        return float(v)


@dataclass(frozen=True)
class VectorIdentity:
    """``sum_r coeffs[r] * v_r = 0`` over the tracked vectors."""

    coeffs: np.ndarray
    tag: str

    def violation(self, G) -> float:
        return float(np.abs(G @ self.coeffs).max())

    def rows(self, n_F, n_H, n_aux, names):
        d = len(self.coeffs)
        out = []
        for r in range(d):
            e = np.zeros(d)
            e[r] = 1.0
            out.append(LinearConstraint(np.zeros(n_F), np.zeros(n_H), sym_outer(self.coeffs, e),
                                        0.0, "=", f"{self.tag}[{names[r]}]", np.zeros(n_aux)))
        return out


@dataclass
class PepProgram:
    objective: Objective
    constraints: list
    identities: list
    psd_dim: int
    vector_names: list
    F_names: list
    H_names: list
    aux_names: list
    lift: np.ndarray
    basis_names: list
    meta: dict = field(default_factory=dict)

    @property
    def n_F(self):
        return len(self.F_names)

    @property
    def n_H(self):
        return len(self.H_names)

    @property
    def n_aux(self):
        return len(self.aux_names)

    @property
    def is_standard(self) -> bool:
        """True when the layout is the ``[x; g; s]`` one of ``PepMatrices``."""
        return self.meta.get("layout") == "standard"

    def all_constraints(self) -> list:
        rows = list(self.constraints)
        for ident in self.identities:
            rows += ident.rows(self.n_F, self.n_H, self.n_aux, self.vector_names)
        return rows

    def tags(self) -> list:
        return [c.tag for c in self.constraints]

    def max_violation(self, F, H, G, aux=None) -> float:
        aux = np.zeros(0) if aux is None else np.asarray(aux)
        v = max((c.violation(F, H, G, aux) for c in self.constraints), default=0.0)
        for ident in self.identities:
            v = max(v, ident.violation(G))
        return float(v)

    def objective_value(self, F, H, G, aux=None) -> float:
        aux = np.zeros(0) if aux is None else np.asarray(aux)
        return self.objective.value(F, H, G, aux)

    def to_dict(self) -> dict:
        return {
            "meta": {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in self.meta.items()},
            "psd_dim": self.psd_dim,
            "vector_names": list(map(str, self.vector_names)),
            "F_names": list(map(str, self.F_names)),
            "H_names": list(map(str, self.H_names)),
            "aux_names": list(self.aux_names),
            "objective": {
                "coeffs_F": self.objective.coeffs_F.tolist(),
                "coeffs_H": self.objective.coeffs_H.tolist(),
                "coeffs_G": self.objective.coeffs_G.tolist(),
                "coeffs_aux": self.objective.coeffs_aux.tolist(),
            },
            "constraints": [c.to_dict() for c in self.constraints],
            "identities": [{"tag": i.tag, "coeffs": i.coeffs.tolist()} for i in self.identities],
            "lift": self.lift.tolist(),
            "basis_names": list(self.basis_names),
        }


class _Layout:
    """Tracked vectors as fixed combinations of named basis vectors."""

    def __init__(self, basis):
        self.basis = list(basis)
        self._bi = {b: k for k, b in enumerate(self.basis)}
        self.names = []
        self._cols = []
        self._ti = {}

    def b(self, name):
        v = np.zeros(len(self.basis))
        v[self._bi[name]] = 1.0
        return v

    @property
    def zero(self):
        return np.zeros(len(self.basis))

    def track(self, name, col):
        self._ti[name] = len(self.names)
        self.names.append(name)
        self._cols.append(np.asarray(col, dtype=float))

    @property
    def dim(self):
        return len(self.names)

    @property
    def lift(self):
        return np.array(self._cols).T

    def e(self, name):
        v = np.zeros(self.dim)
        v[self._ti[name]] = 1.0
        return v


def _eF(n, k):
    v = np.zeros(n)
    v[k] = 1.0
    return v


def _standard_layout(N, lam):
    """``[x_0..x_*, g_0..g_*, s_0..s_*]`` with NoLips recursions in the lift."""
    I = IndexSet(N)
    basis = [f"x{i}" for i in range(N + 1)] + [f"g{i}" for i in range(N + 1)] + ["s0"]
    lay = _Layout(basis)
    for i in I.labels:
        lay.track(("x", i), lay.zero if i == STAR else lay.b(f"x{i}"))
    for i in I.labels:
        lay.track(("g", i), lay.zero if i == STAR else lay.b(f"g{i}"))
    s = lay.b("s0")
    for i in I.labels:
        if i == STAR:
            lay.track(("s", i), lay.zero)
        else:
            lay.track(("s", i), s.copy())
            s = s - lam * lay.b(f"g{i}")
    return I, lay


def _standard_points(I, lay, L):
    n = I.size
    fpts, dpts = [], []
    for i in I.labels:
        k = I.position(i)
        x, g, s = lay.e(("x", i)), lay.e(("g", i)), lay.e(("s", i))
        e = _eF(n, k)
        fpts.append(FunctionPoint(i, x, g, e, np.zeros(n)))
        dpts.append(FunctionPoint(i, x, L * s - g, -e, L * e))
    return fpts, dpts


def _nolips_core(params: ProblemParams, n_aux=0):
    N, L, lam = params.N, params.L, params.lam
    I, lay = _standard_layout(N, lam)
    n, d = I.size, lay.dim
    zF, zH, za = np.zeros(n), np.zeros(n), np.zeros(n_aux)
    fpts, dpts = _standard_points(I, lay, L)
    cons = []
    for c in class_constraints(fpts, 0.0, INF, "cvx-f") + class_constraints(dpts, 0.0, INF, "cvx-d"):
        cons.append(LinearConstraint(c.coeffs_F, c.coeffs_H, c.coeffs_G, 0.0, ">=", c.tag, za))
    gs = lay.e(("g", STAR))
    cons.append(LinearConstraint(zF, zH, sym_outer(gs, gs), 0.0, "=", "stationarity", za))
    # D_h(x_*, x_0) = 1
    s0, x0, xs = lay.e(("s", 0)), lay.e(("x", 0)), lay.e(("x", STAR))
    cH = _eF(n, n - 1) - _eF(n, 0)
    cons.append(LinearConstraint(zF, cH, -sym_outer(s0, xs - x0), 1.0, "=", "normalization", za))
    idents = []
    for i in range(N):
        c = lay.e(("s", i + 1)) - lay.e(("s", i)) + lam * lay.e(("g", i))
        idents.append(VectorIdentity(c, f"alg[{i}]"))
    return I, lay, cons, idents


def _program(lay, cons, idents, obj, F_names, H_names, aux_names, meta):
    return PepProgram(obj, cons, idents, lay.dim, list(lay.names), list(F_names), list(H_names),
                      list(aux_names), lay.lift, list(lay.basis), meta)


def build_nolips_pep(params: ProblemParams) -> PepProgram:
    """Worst case of ``f(x_N) - f_*`` over ``D_h(x_*, x_0) = 1`` for NoLips."""
    I, lay, cons, idents = _nolips_core(params)
    n = I.size
    obj = Objective(_eF(n, n - 2) - _eF(n, n - 1), np.zeros(n), np.zeros((lay.dim, lay.dim)),
                    np.zeros(0))
    meta = {"algorithm": "nolips", "params": params, "criterion": "f(x_N) - f_*",
            "layout": "standard", "theory": 1.0 / (params.lam * params.N)}
    return _program(lay, cons, idents, obj, I.labels, I.labels, [], meta)


def build_residual_pep(params: ProblemParams) -> PepProgram:
    """Worst case of ``min_i D_h(x_{i-1}, x_i)`` through an epigraph scalar ``m``."""
    if params.N < 2:
        raise ValueError("the residual criterion needs N >= 2")
    I, lay, cons, idents = _nolips_core(params, n_aux=1)
    n, d = I.size, lay.dim
    for i in range(1, params.N + 1):
        cH = _eF(n, i - 1) - _eF(n, i)
        A = -sym_outer(lay.e(("s", i)), lay.e(("x", i - 1)) - lay.e(("x", i)))
        cons.append(LinearConstraint(np.zeros(n), cH, A, 0.0, ">=", f"res[{i}]", np.array([-1.0])))
    obj = Objective(np.zeros(n), np.zeros(n), np.zeros((d, d)), np.array([1.0]))
    k = params.N
    meta = {"algorithm": "residual", "params": params, "criterion": "min_i D_h(x_{i-1}, x_i)",
            "layout": "standard", "theory": 2.0 / (k * (k - 1))}
    return _program(lay, cons, idents, obj, I.labels, I.labels, ["m"], meta)


def build_orthogonal_pep(params: ProblemParams) -> PepProgram:
    """NoLips program plus pairwise orthogonality of the gradients."""
    prog = build_nolips_pep(params)
    I = IndexSet(params.N)
    n = I.size
    lay_e = {name: k for k, name in enumerate(prog.vector_names)}
    d = prog.psd_dim
    labs = I.labels
    for a in range(len(labs)):
        for b in range(a + 1, len(labs)):
            u = np.zeros(d)
            v = np.zeros(d)
            u[lay_e[("g", labs[a])]] = 1.0
            v[lay_e[("g", labs[b])]] = 1.0
            prog.constraints.append(LinearConstraint(np.zeros(n), np.zeros(n), sym_outer(u, v), 0.0,
                                                     "=", f"orth[{labs[a]},{labs[b]}]", np.zeros(0)))
    prog.meta["algorithm"] = "nolips-orth"
    return prog


def iga_momentum(N: int) -> np.ndarray:
    """``t_0 .. t_N`` from ``t_0 = 1``, ``t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2``."""
    t = np.empty(N + 1)
    t[0] = 1.0
    for k in range(N):
        t[k + 1] = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t[k] ** 2))
    return t


def _iga_positions(N, zvec):
    """Express ``x_k`` and ``y_k`` through ``z_0..z_N`` (``zvec(k)`` gives basis columns)."""
    t = iga_momentum(N)
    xs = [zvec(0)]
    ys = []
    for k in range(N):
        a = 1.0 - 1.0 / t[k]
        ys.append(a * xs[k] + zvec(k) / t[k])
        xs.append(a * xs[k] + zvec(k + 1) / t[k])
    return t, xs, ys


def build_iga_pep(params: ProblemParams, Ltilde: float = 1.0, sigma: float = 1.0,
                  lam: float | None = None) -> PepProgram:
    """IGA with ``f`` convex ``Ltilde``-smooth and ``h`` ``sigma``-strongly convex.

    ``f`` is sampled at ``y_0..y_{N-1}, x_N, x_*``; ``h`` at ``z_0..z_N, x_*``.
    ``lam`` defaults to ``sigma / Ltilde``; ``params.lam`` is ignored.
    """
    if not (Ltilde > 0 and sigma > 0):
        raise ValueError("Ltilde and sigma must be positive")
    N = params.N
    lam = sigma / Ltilde if lam is None else lam
    basis = ([f"z{k}" for k in range(N + 1)] + [f"gy{k}" for k in range(N)] + ["gxN", "s0"])
    lay = _Layout(basis)
    t, xs, ys = _iga_positions(N, lambda k: lay.b(f"z{k}"))
    fnames = [f"y{k}" for k in range(N)] + [f"x{N}", STAR]
    hnames = [f"z{k}" for k in range(N + 1)] + [STAR]
    fpos = ys + [xs[N], lay.zero]
    fgrad = [lay.b(f"gy{k}") for k in range(N)] + [lay.b("gxN"), lay.zero]
    for nm, col in zip(fnames, fpos):
        lay.track(("f.x", nm), col)
    for nm, col in zip(fnames, fgrad):
        lay.track(("f.g", nm), col)
    for k in range(N + 1):
        lay.track(("h.x", f"z{k}"), lay.b(f"z{k}"))
    lay.track(("h.x", STAR), lay.zero)
    s = lay.b("s0")
    for k in range(N + 1):
        lay.track(("h.g", f"z{k}"), s.copy())
        if k < N:
            s = s - t[k] * lam * lay.b(f"gy{k}")
    lay.track(("h.g", STAR), lay.zero)

    nF, nH = N + 2, N + 2
    zF, zH = np.zeros(nF), np.zeros(nH)
    fpts = [FunctionPoint(nm, lay.e(("f.x", nm)), lay.e(("f.g", nm)), _eF(nF, k), zH)
            for k, nm in enumerate(fnames)]
    hpts = [FunctionPoint(nm, lay.e(("h.x", nm)), lay.e(("h.g", nm)), zF, _eF(nH, k))
            for k, nm in enumerate(hnames)]
    cons = []
    for c in class_constraints(fpts, 0.0, Ltilde, "ssc-f") + class_constraints(hpts, sigma, INF, "ssc-h"):
        cons.append(LinearConstraint(c.coeffs_F, c.coeffs_H, c.coeffs_G, 0.0, ">=", c.tag, np.zeros(0)))
    gs = lay.e(("f.g", STAR))
    cons.append(LinearConstraint(zF, zH, sym_outer(gs, gs), 0.0, "=", "stationarity", np.zeros(0)))
    # D_h(x_*, x_0) + f(x_0) - f_* = 1, with x_0 = y_0 = z_0
    cF = _eF(nF, 0) - _eF(nF, nF - 1)
    cH = _eF(nH, nH - 1) - _eF(nH, 0)
    A = -sym_outer(lay.e(("h.g", "z0")), lay.e(("h.x", STAR)) - lay.e(("h.x", "z0")))
    cons.append(LinearConstraint(cF, cH, A, 1.0, "=", "normalization", np.zeros(0)))
    idents = []
    for k in range(N):
        c = (lay.e(("h.g", f"z{k + 1}")) - lay.e(("h.g", f"z{k}"))
             + t[k] * lam * lay.e(("f.g", fnames[k])))
        idents.append(VectorIdentity(c, f"alg[{k}]"))
    # the f- and h-samples at x_0 and x_* are the same points
    idents.append(VectorIdentity(lay.e(("f.x", "y0")) - lay.e(("h.x", "z0")), "same[x0]"))
    idents.append(VectorIdentity(lay.e(("f.x", STAR)) - lay.e(("h.x", STAR)), "same[star]"))
    for k in range(N):
        idents.append(VectorIdentity(lay.e(("f.x", f"y{k}")) - _combo(lay, ys[k], N), f"pos[y{k}]"))
    idents.append(VectorIdentity(lay.e(("f.x", f"x{N}")) - _combo(lay, xs[N], N), f"pos[x{N}]"))
    obj = Objective(_eF(nF, N) - _eF(nF, N + 1), zH, np.zeros((lay.dim, lay.dim)), np.zeros(0))
    meta = {"algorithm": "iga", "params": params, "Ltilde": Ltilde, "sigma": sigma, "lambda": lam,
            "criterion": "f(x_N) - f_*", "layout": "iga",
            "theory": 4.0 * Ltilde / (sigma * N ** 2)}
    return _program(lay, cons, idents, obj, fnames, hnames, [], meta)


def _combo(lay, basis_col, N):
    """Tracked-space combination of the ``z`` positions equal to ``basis_col``."""
    out = np.zeros(lay.dim)
    for k in range(N + 1):
        out += basis_col[lay._bi[f"z{k}"]] * lay.e(("h.x", f"z{k}"))
    return out


def build_iga_hsmooth_pep(params: ProblemParams) -> PepProgram:
    """IGA run on the h-smooth class (``f`` convex, ``L h - f`` convex)."""
    N, L, lam = params.N, params.L, params.lam
    # x_0 = y_0 = z_0 and x_1 = z_1, so the distinct samples are these
    names = ([f"z{k}" for k in range(N + 1)] + [f"y{k}" for k in range(1, N)]
             + [f"x{k}" for k in range(2, N + 1)] + [STAR])
    free_s = [nm for nm in names if nm[0] in "xy"]
    basis = ([f"z{k}" for k in range(N + 1)] + [f"g.{nm}" for nm in names if nm != STAR]
             + ["s.z0"] + [f"s.{nm}" for nm in free_s])
    lay = _Layout(basis)
    t, xs, ys = _iga_positions(N, lambda k: lay.b(f"z{k}"))
    pos = {f"z{k}": lay.b(f"z{k}") for k in range(N + 1)}
    for k in range(1, N):
        pos[f"y{k}"] = ys[k]
    for k in range(2, N + 1):
        pos[f"x{k}"] = xs[k]
    pos[STAR] = lay.zero
    xN = f"x{N}" if N >= 2 else "z1"

    def gname(k):
        return "g.z0" if k == 0 else f"g.y{k}"

    sz = {}
    s = lay.b("s.z0")
    for k in range(N + 1):
        sz[f"z{k}"] = s.copy()
        if k < N:
            s = s - t[k] * lam * lay.b(gname(k))
    for nm in names:
        lay.track(("x", nm), pos[nm])
    for nm in names:
        lay.track(("g", nm), lay.zero if nm == STAR else lay.b(f"g.{nm}"))
    for nm in names:
        if nm == STAR:
            col = lay.zero
        elif nm in sz:
            col = sz[nm]
        else:
            col = lay.b(f"s.{nm}")
        lay.track(("s", nm), col)
    n = len(names)
    za = np.zeros(0)
    fpts, dpts = [], []
    for k, nm in enumerate(names):
        x, g, sv = lay.e(("x", nm)), lay.e(("g", nm)), lay.e(("s", nm))
        e = _eF(n, k)
        fpts.append(FunctionPoint(nm, x, g, e, np.zeros(n)))
        dpts.append(FunctionPoint(nm, x, L * sv - g, -e, L * e))
    cons = []
    for c in class_constraints(fpts, 0.0, INF, "cvx-f") + class_constraints(dpts, 0.0, INF, "cvx-d"):
        cons.append(LinearConstraint(c.coeffs_F, c.coeffs_H, c.coeffs_G, 0.0, ">=", c.tag, za))
    gs = lay.e(("g", STAR))
    cons.append(LinearConstraint(np.zeros(n), np.zeros(n), sym_outer(gs, gs), 0.0, "=",
                                 "stationarity", za))
    i0, istar = 0, n - 1
    cF = _eF(n, i0) - _eF(n, istar)
    cH = _eF(n, istar) - _eF(n, i0)
    A = -sym_outer(lay.e(("s", "z0")), lay.e(("x", STAR)) - lay.e(("x", "z0")))
    cons.append(LinearConstraint(cF, cH, A, 1.0, "=", "normalization", za))
    idents = []
    for k in range(N):
        gk = "z0" if k == 0 else f"y{k}"
        c = lay.e(("s", f"z{k + 1}")) - lay.e(("s", f"z{k}")) + t[k] * lam * lay.e(("g", gk))
        idents.append(VectorIdentity(c, f"alg[{k}]"))
    obj = Objective(_eF(n, names.index(xN)) - _eF(n, istar), np.zeros(n),
                    np.zeros((lay.dim, lay.dim)), za)
    meta = {"algorithm": "iga-hsmooth", "params": params, "criterion": "f(x_N) - f_*",
            "layout": "iga-hsmooth"}
    return _program(lay, cons, idents, obj, names, names, [], meta)


# ---------------------------------------------------------------------------
# solving


@dataclass
class PepSolution:
    status: str
    value: float
    G: np.ndarray
    F: np.ndarray
    H: np.ndarray
    aux: np.ndarray
    duals: dict
    R: np.ndarray
    report: dict
    solver: sdp.SolverResult | None = None
    params: ProblemParams | None = None
    warning: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def matrices(self) -> PepMatrices | None:
        if self.G.shape[0] != 3 * self.F.shape[0]:
            return None
        return PepMatrices(self.G, self.F, self.H, self.params)


def compile_program(prog: PepProgram, tol: float = 1e-12):
    """Reduce to a :class:`sdp.ConicProgram` over the basis Gram ``R``.

    Returns the conic program plus the indices of the constraints kept as
    equalities and inequalities.  Constraints that the lift satisfies
    identically are dropped; an identically violated one raises.
    """
    Lf = prog.lift
    r = Lf.shape[0]
    nfree = prog.n_F + prog.n_H + prog.n_aux
    Ae, ae, be, te, ke = [], [], [], [], []
    Ai, ai, bi, ti, ki = [], [], [], [], []
    for idx, c in enumerate(prog.constraints):
        A = Lf @ c.coeffs_G @ Lf.T
        A = 0.5 * (A + A.T)
        a = np.concatenate([c.coeffs_F, c.coeffs_H,
                            c.coeffs_aux if c.coeffs_aux.size else np.zeros(prog.n_aux)])
        if max(np.abs(A).max(initial=0.0), np.abs(a).max(initial=0.0)) <= tol:
            bad = c.rhs > tol if c.sense == ">=" else abs(c.rhs) > tol
            if bad:
                raise ValueError(f"constraint {c.tag} is identically violated")
            continue
        if c.sense == "=":
            Ae.append(A); ae.append(a); be.append(c.rhs); te.append(c.tag); ke.append(idx)
        else:
            Ai.append(A); ai.append(a); bi.append(c.rhs); ti.append(c.tag); ki.append(idx)
    o = prog.objective
    C = Lf @ o.coeffs_G @ Lf.T
    cvec = np.concatenate([o.coeffs_F, o.coeffs_H,
                           o.coeffs_aux if o.coeffs_aux.size else np.zeros(prog.n_aux)])
    cp = sdp.ConicProgram(r, nfree, 0.5 * (C + C.T), cvec,
                          np.array(Ae).reshape(-1, r, r), np.array(ae).reshape(-1, nfree), be,
                          np.array(Ai).reshape(-1, r, r), np.array(ai).reshape(-1, nfree), bi,
                          te, ti)
    return cp, ke, ki


def _unpack(prog, res, ke, ki):
    R = res.X
    G = prog.lift.T @ R @ prog.lift
    u = res.free
    F = u[:prog.n_F]
    H = u[prog.n_F:prog.n_F + prog.n_H]
    aux = u[prog.n_F + prog.n_H:]
    duals = {c.tag: 0.0 for c in prog.constraints}
    for j, idx in enumerate(ke):
        duals[prog.constraints[idx].tag] = float(res.duals_eq[j])
    for j, idx in enumerate(ki):
        duals[prog.constraints[idx].tag] = float(res.duals_in[j])
    return G, F, H, aux, duals


def solve_pep(prog: PepProgram, settings: sdp.SolverSettings | None = None,
              warm_start=None) -> PepSolution:
    cp, ke, ki = compile_program(prog)
    res = sdp.solve(cp, settings, warm_start=warm_start)
    G, F, H, aux, duals = _unpack(prog, res, ke, ki)
    report = dict(res.residuals)
    report["iterations"] = res.iterations
    report["solve_time"] = res.solve_time
    report["max_violation"] = prog.max_violation(F, H, G, aux)
    report["min_eig"] = float(np.linalg.eigvalsh(res.X).min()) if res.X.size else 0.0
    report["dual_value"] = res.dual_value
    value = res.value
    if res.status in (sdp.OPTIMAL, sdp.MAXITER):
        value = prog.objective_value(F, H, G, aux)
    sol = PepSolution(res.status, value, G, F, H, aux, duals, res.X, report, res,
                      prog.meta.get("params"))
    sol.meta = {"conic": cp, "kept_eq": ke, "kept_in": ki}
    return sol


def low_rank_refine(prog: PepProgram, sol: PepSolution, gap_tol: float = 1e-4,
                    settings: sdp.SolverSettings | None = None, rank_tol: float = 1e-7,
                    reweight: int = 20, delta: float = 1e-2) -> PepSolution:
    """Minimise ``trace(G)`` (then a log-det reweighting) at near-optimal value.

    The default is a few rounds of the reweighted-trace heuristic
    ``min <W, R>`` with ``W = (R_prev + delta I)^{-1}``; ``reweight=0`` keeps the
    plain trace objective.
    """
    if sol.status != sdp.OPTIMAL:
        raise ValueError("low_rank_refine needs an Optimal solution")
    cp, ke, ki = compile_program(prog)
    Lf = prog.lift
    target = (1.0 - gap_tol) * sol.value
    # slightly below the target so the added row never exceeds the solver precision
    s = settings or sdp.SolverSettings()
    target -= 10 * s.eps_abs * (1 + abs(sol.value))
    W = Lf @ Lf.T
    best = sol
    R = sol.R
    for rnd in range(1 + max(reweight, 0)):
        if rnd > 0:
            w, V = np.linalg.eigh(R)
            scale = max(w.max(), 1e-300)
            W = (V / (np.maximum(w, 0) + delta * scale)) @ V.T
            W /= np.abs(W).max()
        obj_row_A = cp.C
        obj_row_a = cp.c
        cp2 = sdp.ConicProgram(
            cp.psd_dim, cp.n_free, -0.5 * (W + W.T), np.zeros(cp.n_free),
            cp.A_eq, cp.a_eq, cp.b_eq,
            np.concatenate([cp.A_in, obj_row_A[None]]), np.vstack([cp.a_in, obj_row_a]),
            np.append(cp.b_in, target), cp.eq_tags, cp.in_tags + ["objective-floor"])
        res = sdp.solve(cp2, s)
        if res.status != sdp.OPTIMAL:
            if rnd == 0:
                log.warning("low-rank refinement failed (%s); keeping the input", res.status)
                out = PepSolution(**{**sol.__dict__})
                out.warning = f"refinement {res.status}"
                return out
            break
        R = res.X
        G, F, H, aux, duals = _unpack(prog, res, ke, ki)
        report = dict(res.residuals)
        report["max_violation"] = prog.max_violation(F, H, G, aux)
        report["min_eig"] = float(np.linalg.eigvalsh(R).min())
        best = PepSolution(sdp.OPTIMAL, prog.objective_value(F, H, G, aux), G, F, H, aux,
                           duals, R, report, res, sol.params)
    return best


def extract_dual(prog: PepProgram, sol: PepSolution):
    """Map multipliers of the tagged inequalities onto named weight families."""
    from .certificates import CertificateWeights

    if not sol.duals:
        raise ValueError("solution carries no duals")
    N = prog.meta["params"].N
    d = sol.duals

    def get(tag):
        if tag not in d:
            raise ValueError(f"missing dual for {tag}")
        return d[tag]

    gamma_star = np.array([get(f"cvx-f[{STAR},{i}]") for i in range(N + 1)])
    gamma_chain = np.array([get(f"cvx-f[{i},{i + 1}]") for i in range(N)])
    mu_up = np.array([get(f"cvx-d[{i + 1},{i}]") for i in range(N)])
    mu_down = np.array([get(f"cvx-d[{i},{i + 1}]") for i in range(N)])
    kw = dict(gamma_star=gamma_star, gamma_chain=gamma_chain, mu_star_k=get(f"cvx-d[{STAR},{N}]"),
              mu_up=mu_up, mu_down=mu_down, k=N,
              lam=prog.meta["params"].lam)
    if prog.meta.get("algorithm") == "residual":
        kw["tau"] = np.array([get(f"res[{i}]") for i in range(1, N + 1)])
        kw["gamma_k_star"] = get(f"cvx-f[{N},{STAR}]")
    w = CertificateWeights(**kw)
    return w

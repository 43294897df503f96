import numpy as np
import pytest
from scipy.optimize import minimize

from bregpep import ProblemParams, pep
from bregpep.interpolation import FunctionPoint
from bregpep.model import DiscretePoint, DiscreteRepresentation

_SOLVED = {}

BUILDERS = {
    "nolips": pep.build_nolips_pep,
    "residual": pep.build_residual_pep,
    "orth": pep.build_orthogonal_pep,
    "iga": pep.build_iga_pep,
    "iga-hsmooth": pep.build_iga_hsmooth_pep,
}


def solved(kind, N, lam=1.0, L=1.0):
    """Solve a program once per session; returns ``(program, solution)``."""
    key = (kind, N, lam, L)
    if key not in _SOLVED:
        prog = BUILDERS[kind](ProblemParams(L=L, lam=lam, N=N))
        _SOLVED[key] = (prog, pep.solve_pep(prog))
    return _SOLVED[key]


@pytest.fixture(scope="session")
def pep_solved():
    return solved


def sample_points(xs, fs, gs):
    """Function points over the Gram of ``[x_0..x_m-1, g_0..g_m-1]`` plus that Gram."""
    m = len(fs)
    xs = np.asarray(xs, float).reshape(m, -1)
    gs = np.asarray(gs, float).reshape(m, -1)
    eye = np.eye(2 * m)
    pts = [FunctionPoint(i, eye[i], eye[m + i], np.eye(m)[i], np.zeros(m)) for i in range(m)]
    P = np.hstack([xs.T, gs.T])
    return pts, np.asarray(fs, float), P.T @ P


def make_rep(xs, fs, gs, hs=None, ss=None, lam=1.0, L=1.0):
    """Representation from per-label arrays (``N + 2`` rows, the last one is ``star``)."""
    xs = np.asarray(xs, float).reshape(len(fs), -1)
    gs = np.asarray(gs, float).reshape(xs.shape)
    hs = np.zeros(len(fs)) if hs is None else np.asarray(hs, float)
    ss = np.zeros_like(xs) if ss is None else np.asarray(ss, float).reshape(xs.shape)
    pts = tuple(DiscretePoint(xs[i], fs[i], gs[i], hs[i], ss[i]) for i in range(len(fs)))
    return DiscreteRepresentation(ProblemParams(L=L, lam=lam, N=len(fs) - 2), pts)


def cvxpy_solve(cp):
    """Solve a ``ConicProgram`` with an interior-point solver; ``(status, value)``."""
    cvx = pytest.importorskip("cvxpy")
    X = cvx.Variable((cp.psd_dim, cp.psd_dim), PSD=True)
    u = cvx.Variable(cp.n_free)
    cons = []
    for k in range(cp.m_eq):
        cons.append(cvx.trace(cp.A_eq[k] @ X) + cp.a_eq[k] @ u == cp.b_eq[k])
    for k in range(cp.m_in):
        cons.append(cvx.trace(cp.A_in[k] @ X) + cp.a_in[k] @ u >= cp.b_in[k])
    prob = cvx.Problem(cvx.Maximize(cvx.trace(cp.C @ X) + cp.c @ u), cons)
    prob.solve(solver="CLARABEL")
    return prob.status, prob.value


def fd_grad(fun, x, h=1e-6):
    x = np.atleast_1d(np.asarray(x, float))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def brute_prox(x, mu, c):
    obj = lambda u: np.abs(u - c).max() + (x - u) @ (x - u) / (2 * mu)  # noqa: E731
    best = None
    for start in (x, c, 0.5 * (x + c)):
        r = minimize(obj, start, method="Nelder-Mead",
                     options={"xatol": 1e-11, "fatol": 1e-14, "maxiter": 20000})
        if best is None or r.fun < best.fun:
            best = r
    return best.x


def brute_l1(v, r):
    """Projection onto the l1 ball through SLSQP on the split u = p - q."""
    n = v.size
    obj = lambda w: 0.5 * np.sum((w[:n] - w[n:] - v) ** 2)  # noqa: E731
    jac = lambda w: np.concatenate([w[:n] - w[n:] - v, -(w[:n] - w[n:] - v)])  # noqa: E731
    res = minimize(obj, np.zeros(2 * n), jac=jac, bounds=[(0, None)] * (2 * n),
                   constraints=[{"type": "ineq", "fun": lambda w: r - w.sum(),
                                 "jac": lambda w: -np.ones(2 * n)}],
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    return res.x[:n] - res.x[n:]

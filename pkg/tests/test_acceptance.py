"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import functools
import time

import numpy as np
import pytest

from bregpep import ProblemParams, pep, sdp
from bregpep.algorithms import (
    MIRROR,
    PRIMAL,
    bound_check,
    harness_run,
    IgaStrategy,
    NoLipsStrategy,
    nolips_run,
    quadratic_oracle,
    smoothed_oracle,
    worst1d_oracle,
)
from bregpep.certificates import PROP46, THM31, prop46_weights, random_representation, thm31_weights, verify_identity
from bregpep.instances import (
    SmoothedInstance,
    WorstCase1D,
    eval_dmu,
    eval_fmu,
    eval_hmu,
    eval_pathological_nd,
    eval_worst1d,
    mirror_hmu,
    project_l1_ball,
    prox_linf,
)
from bregpep.model import (
    PepMatrices,
    gram_from_representation,
    numerical_rank,
    representation_from_gram,
)
from conftest import brute_l1, brute_prox, fd_grad


def criterion(number, title):
    """Print ``PASS``/``FAIL`` for the wrapped check and re-raise failures."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                _line(f"FAIL criterion {number:2d} {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
                raise
            dt = time.perf_counter() - t0
            _line(f"PASS criterion {number:2d} {title} ({dt:.2f} s){': ' + detail if detail else ''}")

        return run

    return wrap


def _line(text):
    rep = _REPORTER[0]
    if rep is not None:
        rep.write_line(text)
    else:
        print(text)


_REPORTER = [None]


@pytest.fixture(autouse=True, scope="module")
def _reporter(pytestconfig):
    _REPORTER[0] = pytestconfig.pluginmanager.getplugin("terminalreporter")
    yield
    _REPORTER[0] = None


def solve_fresh(builder, N, lam=1.0, L=1.0, **kw):
    prog = builder(ProblemParams(L=L, lam=lam, N=N), **kw)
    return prog, pep.solve_pep(prog)


# 1

@criterion(1, "NoLips worst case equals D_h / (lam N)")
def test_c01_nolips_values():
    t0 = time.perf_counter()
    errs = {}
    for N in (1, 2, 3, 4, 5, 10):
        _, sol = solve_fresh(pep.build_nolips_pep, N)
        assert sol.status == sdp.OPTIMAL
        errs[N] = abs(sol.value - 1 / N) * N
        assert errs[N] <= 1e-3, (N, sol.value)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60
    _, sol = solve_fresh(pep.build_nolips_pep, 20)
    errs[20] = abs(sol.value - 1 / 20) * 20
    assert sol.status == sdp.OPTIMAL and errs[20] <= 5e-3
    return f"max rel error {max(errs.values()):.1e}, N <= 10 in {elapsed:.1f} s"


# 2

@criterion(2, "step-size frontier")
def test_c02_step_frontier():
    for L in (1.0, 2.0):
        for N in (1, 3):
            _, sol = solve_fresh(pep.build_nolips_pep, N, lam=1 / L, L=L)
            assert sol.status == sdp.OPTIMAL
            assert sol.value == pytest.approx(L / N, rel=1e-3)
    _, sol = solve_fresh(pep.build_nolips_pep, 2, lam=1.5)
    assert sol.status == sdp.UNBOUNDED
    return f"lam = 1.5 at N = 2 gives {sol.status}"


# 3

@criterion(3, "residual program below 2 / (k (k - 1))")
def test_c03_residual():
    vals = []
    for k in (2, 3, 5):
        _, sol = solve_fresh(pep.build_residual_pep, k)
        assert sol.status == sdp.OPTIMAL
        assert sol.value <= 2 / (k * (k - 1)) + 1e-3, (k, sol.value)
        vals.append(sol.value * k * (k - 1) / 2)
    return "normalised values " + ", ".join(f"{v:.4f}" for v in vals)


# 4

@criterion(4, "lower bound on the zero-preserving pair")
def test_c04_lower_bound():
    t0 = time.perf_counter()
    worst = np.inf
    for N in (1, 2, 3):
        for eps in (0.25, 0.5):
            inst = SmoothedInstance.for_lower_bound(N, eps)
            o = smoothed_oracle(inst)
            x0 = np.zeros(inst.n)
            for strat in (NoLipsStrategy(1.0, N), IgaStrategy(1.0, N)):
                tr = harness_run(o, strat, x0, {PRIMAL: N, MIRROR: N})
                gap = eval_fmu(inst, tr.output)
                Dh = (eval_hmu(inst, inst.x_star) - eval_hmu(inst, x0)
                      - eval_hmu(inst, x0, "gradient") @ (inst.x_star - x0))
                bound = (1 - eps) * inst.L * Dh / (2 * N + 1)
                assert gap >= bound, (N, eps, strat.name, gap, bound)
                assert gap >= 1 - inst.mu
                worst = min(worst, gap / bound)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30
    return f"min gap / bound {worst:.3f}"


# 5

@criterion(5, "certificate identities on random data")
def test_c05_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for which, make, ks in ((THM31, thm31_weights, range(1, 9)), (PROP46, prop46_weights, range(2, 9))):
        ks = list(ks)
        for trial in range(200):
            k = ks[trial % len(ks)]
            lam = float(np.exp(rng.uniform(-1, 1)))
            rep = random_representation(k, lam, dim=int(rng.integers(1, 5)), seed=int(rng.integers(2 ** 32)))
            worst = max(worst, verify_identity(make(k, lam), rep, which))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-10
    assert elapsed < 5
    return f"max relative residual {worst:.1e}"


# 6

def _bound_cases():
    quad = quadratic_oracle(0.5)
    huber = worst1d_oracle(WorstCase1D(3, 0.05))
    lb = SmoothedInstance.for_lower_bound(2, 0.5)
    return [(quad, np.array([np.sqrt(2)])), (quadratic_oracle(0.8, dim=3), np.array([1.0, -2.0, 0.5])),
            (huber, np.array([-0.05])), (huber, np.array([2.5])),
            (smoothed_oracle(lb), np.zeros(lb.n))]


@criterion(6, "upper bounds hold along NoLips runs")
def test_c06_trajectories():
    worst31 = worst46 = np.inf
    for o, x0 in _bound_cases():
        for lam in (1 / o.L, 1 / (2 * o.L)):
            rep = bound_check(nolips_run(o, x0, lam, 6), o)
            for row in rep["rows"]:
                assert row["thm31_slack"] >= -1e-9, (o.name, lam, row)
                if row["k"] >= 2:
                    assert row["prop46_slack"] >= -1e-9, (o.name, lam, row)
            worst31 = min(worst31, rep["slack"])
            worst46 = min(worst46, rep["residual_slack"])
    return f"min slacks {worst31:.2e} and {worst46:.2e}"


@criterion(6, "bound_check agrees with a direct evaluation")
def test_c06_bound_check_independent():
    o = quadratic_oracle(0.5)
    tr = nolips_run(o, [np.sqrt(2)], 1.0, 4)
    rep = bound_check(tr, o)
    # h = x^2 / 2 and f = x^2 / 4 in closed form
    xs = [float(x[0]) for x in tr.iterates]
    D0 = 0.5 * xs[0] ** 2
    for row, x in zip(rep["rows"], xs[1:]):
        assert row["f_gap"] == pytest.approx(0.25 * x * x, rel=1e-12)
        assert row["thm31_rhs"] == pytest.approx(D0 / row["k"], rel=1e-12)


# 7

@criterion(7, "near tightness on the one-dimensional worst case")
def test_c07_worst1d():
    wc = WorstCase1D(3, 1e-3)
    o = worst1d_oracle(wc)
    tr = nolips_run(o, [wc.x0], 1.0, 3)
    f = eval_worst1d(wc, float(tr.output[0]))
    x0, xs = wc.x0, 1.0
    Dh = (eval_worst1d(wc, xs, "h") - eval_worst1d(wc, x0, "h")
          - eval_worst1d(wc, x0, "h", "gradient") * (xs - x0))
    ratio = f * 1.0 * 3 / Dh
    assert ratio >= 0.9
    return f"ratio {ratio:.4f}"


# 8

@criterion(8, "IGA below 4 / N^2 with a visible margin")
def test_c08_iga():
    margins = []
    for N in (1, 2, 5, 10):
        _, sol = solve_fresh(pep.build_iga_pep, N)
        assert sol.status == sdp.OPTIMAL
        bound = 4 / N ** 2
        assert sol.value <= bound + 1e-3, (N, sol.value)
        margin = 1 - sol.value / bound
        if N >= 2:
            assert margin >= 0.01, (N, margin)
        margins.append(margin)
    return "relative margins " + ", ".join(f"{m:.3f}" for m in margins)


# 9

@criterion(9, "IGA over the h-smooth class is unbounded")
def test_c09_iga_hsmooth():
    _, sol = solve_fresh(pep.build_iga_hsmooth_pep, 2)
    assert sol.status == sdp.UNBOUNDED
    return sol.status


# 10

@criterion(10, "zero-preserving oracles")
def test_c10_zero_preserving():
    inst = SmoothedInstance.for_lower_bound(3, 0.5)
    assert inst.n == 7
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(50):
        p = int(rng.integers(0, inst.n))
        x = np.zeros(inst.n)
        x[:p] = rng.uniform(-2, 3, p)
        # grad f_mu tolerates trailing entries up to mu; grad d_mu is t / mu + mu t there,
        # so grad h_mu and the mirror map get exact members of E_p
        x_tail = x.copy()
        x_tail[p:] = rng.uniform(-inst.mu, inst.mu, inst.n - p)
        y = np.zeros(inst.n)
        y[:p] = rng.uniform(-2, 2, p)
        outs = [eval_fmu(inst, x_tail, "gradient"), eval_hmu(inst, x, "gradient"), mirror_hmu(inst, y, 1e-12)]
        for v in outs:
            worst = max(worst, np.abs(v[p + 1:]).max(initial=0.0))
    assert worst <= 1e-8
    return f"max out-of-support magnitude {worst:.1e}"


# 11

@criterion(11, "finite differences, brute-force prox and Gram round trip")
def test_c11_hygiene():
    rng = np.random.default_rng(11)
    # smoothed family: draw points away from kinks of the prox and of phi
    inst = SmoothedInstance.for_lower_bound(1, 0.5)
    worst_fd = 0.0
    n_checked = 0
    while n_checked < 30:
        x = inst.x_star + rng.standard_normal(inst.n) * rng.choice([0.5, 3 * inst.mu])
        w = (x - inst.x_star) / inst.mu
        a = np.abs(w)
        pv = project_l1_ball(w, 1.0)
        theta = a.max() - np.abs(pv).max() if a.sum() > 1 else 0.0
        if (np.abs(np.abs(x) - inst.mu).min() < 1e-4 or np.abs(a - theta).min() < 1e-3
                or abs(a.sum() - 1) < 1e-3):
            continue
        n_checked += 1
        for ev in (eval_fmu, eval_dmu, eval_hmu):
            g = ev(inst, x, "gradient")
            fd = fd_grad(lambda u: ev(inst, u), x, 1e-6 * inst.mu)
            worst_fd = max(worst_fd, np.abs(fd - g).max() / (1 + np.abs(g).max()))
    wc = WorstCase1D(3, 0.1)
    kinks = wc.breakpoints()
    for x in [x for x in rng.uniform(-1, 2, 100) if np.abs(x - kinks).min() > 1e-4]:
        for which in ("f", "h"):
            g = eval_worst1d(wc, x, which, "gradient")
            fd = fd_grad(lambda u: eval_worst1d(wc, u[0], which), [x])[0]
            worst_fd = max(worst_fd, abs(fd - g) / (1 + abs(g)))
    for _ in range(30):
        x = rng.standard_normal(3)
        a = np.sort(np.abs(x - 1.0))
        # away from ties in the max and from the hinge kinks
        if a[-1] - a[-2] < 1e-3 or np.abs(x[1:]).min() < 1e-3:
            continue
        for which in ("f", "h"):
            _, g = eval_pathological_nd(3, x, which)
            fd = fd_grad(lambda u: eval_pathological_nd(3, u, which)[0], x, 1e-7)
            worst_fd = max(worst_fd, np.abs(fd - g).max() / (1 + np.abs(g).max()))
    q = quadratic_oracle(0.7, dim=2)
    x = rng.standard_normal(2)
    worst_fd = max(worst_fd, np.abs(fd_grad(q.f_value, x) - q.f_grad(x)).max())
    assert worst_fd <= 1e-5

    worst_prox = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        v, c = 2 * rng.standard_normal(n), rng.standard_normal(n)
        mu, r = float(rng.uniform(0.1, 1.5)), float(rng.uniform(0.1, 2.0))
        worst_prox = max(worst_prox, np.abs(prox_linf(v, mu, c) - brute_prox(v, mu, c)).max(),
                         np.abs(project_l1_ball(v, r) - brute_l1(v, r)).max())
    assert worst_prox <= 1e-6

    worst_rt = 0.0
    for N in (1, 3, 5):
        B = rng.standard_normal((4, 3 * (N + 2)))
        M = PepMatrices(B.T @ B, rng.standard_normal(N + 2), rng.standard_normal(N + 2))
        M2 = gram_from_representation(representation_from_gram(M, rank_tol=1e-12))
        worst_rt = max(worst_rt, np.abs(M2.G - M.G).max() / (1 + np.abs(M.G).max()))
    assert worst_rt <= 1e-8
    return f"fd {worst_fd:.1e}, prox {worst_prox:.1e}, round trip {worst_rt:.1e}"


# 12

@criterion(12, "low-rank extraction at N = 3")
def test_c12_low_rank():
    prog, sol = solve_fresh(pep.build_nolips_pep, 3)
    ref = pep.low_rank_refine(prog, sol, 1e-4)
    assert ref.status == sdp.OPTIMAL
    rank = numerical_rank(ref.G)
    assert rank <= 3
    X = representation_from_gram(ref.matrices).stacked("x")[:-1]
    spread = max(np.linalg.norm(a - b) for a in X for b in X)
    assert spread <= 1e-2
    return f"rank {rank}, spread {spread:.1e}"

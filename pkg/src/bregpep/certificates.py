"""Weighted-sum convergence certificates for NoLips.

Each certificate is a list of nonnegative weights on inequalities of the form
``bracket <= 0`` (convexity of ``f``, convexity of ``h/lam - f``, and for the
residual bound the definition of the smallest Bregman residual).  After
substituting the recursion ``s_{i+1} = s_i - lam g_i`` the weighted sum equals
the target expression identically, so a valid representation forces
``target <= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .model import STAR, DiscreteRepresentation

THM31 = "thm31"
PROP46 = "prop46"


def _frac(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    return Fraction(float(v))


@dataclass
class CertificateWeights:
    """Weights by family; entries may be ``Fraction`` (analytic) or float (extracted).

    ``gamma_star[i]``  f(x_*) >= f(x_i) + <g_i, x_* - x_i>,             i = 0..k
    ``gamma_chain[i]`` f(x_i) >= f(x_{i+1}) + <g_{i+1}, x_i - x_{i+1}>, i = 0..k-1
    ``mu_star_k``      d(x_*) >= d(x_k) + <grad d(x_k), x_* - x_k>
    ``mu_up[i]``       d(x_{i+1}) >= d(x_i) + <grad d(x_i), x_{i+1} - x_i>
    ``mu_down[i]``     d(x_i) >= d(x_{i+1}) + <grad d(x_{i+1}), x_i - x_{i+1}>
    ``tau[i-1]``       D_h(x_{i-1}, x_i) >= min_j D_h(x_{j-1}, x_j),    i = 1..k
    ``gamma_k_star``   f(x_k) >= f(x_*)
    with ``d = h/lam - f``.
    """

    k: int
    gamma_star: list
    gamma_chain: list
    mu_star_k: object
    mu_up: list
    mu_down: list
    tau: list = field(default_factory=list)
    gamma_k_star: object = 0
    lam: object = 1

    def __post_init__(self):
        self.gamma_star = list(self.gamma_star)
        self.gamma_chain = list(self.gamma_chain)
        self.mu_up = list(self.mu_up)
        self.mu_down = list(self.mu_down)
        self.tau = list(self.tau)
        if len(self.gamma_star) != self.k + 1:
            raise ValueError("gamma_star needs k + 1 entries")
        for name in ("gamma_chain", "mu_up", "mu_down"):
            if len(getattr(self, name)) != self.k:
                raise ValueError(f"{name} needs k entries")
        if self.tau and len(self.tau) != self.k:
            raise ValueError("tau needs k entries")

    def families(self) -> dict:
        return {
            "gamma_star": [float(v) for v in self.gamma_star],
            "gamma_chain": [float(v) for v in self.gamma_chain],
            "mu_star_k": [float(self.mu_star_k)],
            "mu_up": [float(v) for v in self.mu_up],
            "mu_down": [float(v) for v in self.mu_down],
            "tau": [float(v) for v in self.tau],
            "gamma_k_star": [float(self.gamma_k_star)],
        }

    def min_weight(self) -> float:
        return min(min(v, default=0.0) for v in self.families().values())

    def to_dict(self) -> dict:
        def enc(v):
            return str(v) if isinstance(v, Fraction) else float(v)

        return {
            "k": self.k,
            "lambda": enc(self.lam),
            "gamma_star": [enc(v) for v in self.gamma_star],
            "gamma_chain": [enc(v) for v in self.gamma_chain],
            "mu_star_k": enc(self.mu_star_k),
            "mu_up": [enc(v) for v in self.mu_up],
            "mu_down": [enc(v) for v in self.mu_down],
            "tau": [enc(v) for v in self.tau],
            "gamma_k_star": enc(self.gamma_k_star),
        }

    @classmethod
    def from_dict(cls, d) -> "CertificateWeights":
        def dec(v):
            return Fraction(v) if isinstance(v, str) else v

        return cls(d["k"], [dec(v) for v in d["gamma_star"]], [dec(v) for v in d["gamma_chain"]],
                   dec(d["mu_star_k"]), [dec(v) for v in d["mu_up"]],
                   [dec(v) for v in d["mu_down"]], [dec(v) for v in d.get("tau", [])],
                   dec(d.get("gamma_k_star", 0)), dec(d.get("lambda", 1)))


def thm31_weights(k: int, lam=1) -> CertificateWeights:
    """Certificate of ``f(x_k) - f_* <= D_h(x_*, x_0) / (lam k)``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    K = Fraction(k)
    return CertificateWeights(
        k=k,
        gamma_star=[1 / K] * (k + 1),
        gamma_chain=[Fraction(i) / K for i in range(k)],
        mu_star_k=1 / K,
        mu_up=[Fraction(i + 1) / K for i in range(k)],
        mu_down=[Fraction(i) / K for i in range(k)],
        lam=_frac(lam),
    )


def prop46_weights(k: int, lam=1) -> CertificateWeights:
    """Certificate of ``min_i D_h(x_{i-1}, x_i) <= 2 D_h(x_*, x_0) / (k (k-1))``."""
    if k < 2:
        raise ValueError("the residual certificate needs k >= 2")
    lam = _frac(lam)
    den = Fraction(k * (k - 1))
    return CertificateWeights(
        k=k,
        gamma_star=[2 * lam / den] * (k + 1),
        gamma_chain=[Fraction(0)] * k,
        mu_star_k=2 * lam / den,
        mu_up=[2 * lam * (i + 1) / den for i in range(k)],
        mu_down=[Fraction(0)] * k,
        tau=[Fraction(2 * (i - 1)) / den for i in range(1, k + 1)],
        gamma_k_star=2 * lam / Fraction(k - 1),
        lam=lam,
    )


def _check_recursion(rep, k, lam, tol=1e-12):
    for i in range(k):
        a, b = rep[i], rep[i + 1]
        err = np.abs(b.s - (a.s - lam * a.g)).max()
        scale = 1.0 + np.abs(a.s).max() + lam * np.abs(a.g).max()
        if err > tol * scale:
            raise ValueError(f"representation violates s_{i + 1} = s_{i} - lam g_{i} "
                             f"(error {err:.3e})")


def _min_residual(rep, k):
    """``min_j D_h(x_{j-1}, x_j)``, ties broken by the lowest ``j``."""
    vals = [rep[j - 1].h - rep[j].h - rep[j].s @ (rep[j - 1].x - rep[j].x) for j in range(1, k + 1)]
    j = int(np.argmin(vals))
    return vals[j], j + 1


def identity_terms(weights: CertificateWeights, rep: DiscreteRepresentation, which: str):
    """Weighted brackets ``(name, weight, bracket)`` and the target value.

    Every bracket is ``<= 0`` on valid data; weights are floats here.
    """
    k = weights.k
    if rep.params.N < k:
        raise ValueError(f"representation has N={rep.params.N} < k={k}")
    lam = float(weights.lam)
    _check_recursion(rep, k, lam)
    P = {i: rep[i] for i in range(k + 1)}
    P[STAR] = rep[STAR]

    def f_br(i, j):
        # f(x_i) - f(x_j) + <g_i, x_j - x_i>, i.e. f(x_j) >= f(x_i) + <g_i, x_j - x_i>
        a, b = P[i], P[j]
        return a.f - b.f + a.g @ (b.x - a.x)

    def d_br(i, j):
        a, b = P[i], P[j]
        da = a.h / lam - a.f
        db = b.h / lam - b.f
        return da - db + (a.s / lam - a.g) @ (b.x - a.x)

    w = weights
    terms = []
    for i in range(k + 1):
        terms.append((f"gamma_star[{i}]", float(w.gamma_star[i]), f_br(i, STAR)))
    for i in range(k):
        terms.append((f"gamma_chain[{i}]", float(w.gamma_chain[i]), f_br(i + 1, i)))
    terms.append(("mu_star_k", float(w.mu_star_k), d_br(k, STAR)))
    for i in range(k):
        terms.append((f"mu_up[{i}]", float(w.mu_up[i]), d_br(i, i + 1)))
        terms.append((f"mu_down[{i}]", float(w.mu_down[i]), d_br(i + 1, i)))
    s0, x0, xs = P[0].s, P[0].x, P[STAR].x
    Dh0 = P[STAR].h - P[0].h - s0 @ (xs - x0)
    if which == THM31:
        target = P[k].f - P[STAR].f - Dh0 / (lam * k)
    elif which == PROP46:
        if k < 2:
            raise ValueError("prop46 needs k >= 2")
        terms.append(("gamma_k_star", float(w.gamma_k_star), P[STAR].f - P[k].f))
        m, _ = _min_residual(rep, k)
        for i in range(1, k + 1):
            D = P[i - 1].h - P[i].h - P[i].s @ (P[i - 1].x - P[i].x)
            terms.append((f"tau[{i - 1}]", float(w.tau[i - 1]) if w.tau else 0.0, m - D))
        target = m - 2.0 * Dh0 / (k * (k - 1))
    else:
        raise ValueError(f"unknown certificate {which!r}")
    return terms, float(target)


def verify_identity(weights: CertificateWeights, rep: DiscreteRepresentation, which: str) -> float:
    """Relative residual ``|sum w * bracket - target| / (1 + sum |w * bracket| + |target|)``."""
    terms, target = identity_terms(weights, rep, which)
    S = sum(wt * br for _, wt, br in terms)
    mag = sum(abs(wt * br) for _, wt, br in terms) + abs(target)
    return abs(S - target) / (1.0 + mag)


def random_representation(k: int, lam: float = 1.0, dim: int = 3, seed=None,
                          L: float = 1.0) -> DiscreteRepresentation:
    """Arbitrary data whose ``s`` values follow the NoLips recursion."""
    from .model import DiscretePoint, ProblemParams

    rng = np.random.default_rng(seed)
    pts = []
    s = rng.standard_normal(dim)
    for i in range(k + 1):
        g = rng.standard_normal(dim)
        pts.append(DiscretePoint(rng.standard_normal(dim), rng.standard_normal(), g,
                                 rng.standard_normal(), s))
        s = s - lam * g
    pts.append(DiscretePoint(rng.standard_normal(dim), rng.standard_normal(),
                             rng.standard_normal(dim), rng.standard_normal(),
                             rng.standard_normal(dim)))
    return DiscreteRepresentation(ProblemParams(L=L, lam=lam, N=k), tuple(pts))


def validate_dual(analytic: CertificateWeights, extracted: CertificateWeights, k: int | None = None) -> dict:
    """Componentwise deviation per family (report only)."""
    if k is not None and (analytic.k != k or extracted.k != k):
        raise ValueError("weights are for different k")
    if analytic.k != extracted.k:
        raise ValueError("weights are for different k")
    fa, fe = analytic.families(), extracted.families()
    per = {}
    for name, va in fa.items():
        ve = fe[name]
        if not va and not ve:
            continue
        va = va or [0.0] * len(ve)
        ve = ve or [0.0] * len(va)
        per[name] = float(np.max(np.abs(np.array(va) - np.array(ve))))
    return {"max_abs_dev": max(per.values(), default=0.0), "families": per}

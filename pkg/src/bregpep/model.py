"""Core data types: problem parameters, index sets, discrete representations.

The Gram layout is fixed everywhere in the package: rows ``[x-block; g-block;
s-block]``, and inside each block the labels ``0, 1, ..., N, star``.  Row of
``(block, i)`` is ``block * (N + 2) + position(i)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

STAR = "star"
X_BLOCK, G_BLOCK, S_BLOCK = 0, 1, 2

Label = Union[int, str]


@dataclass(frozen=True)
class ProblemParams:
    """h-smoothness constant ``L``, step size ``lam`` and iteration count ``N``."""

    L: float
    lam: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"L must be positive, got {self.L}")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "lam", float(self.lam))

    def to_dict(self) -> dict:
        return {"L": self.L, "lambda": self.lam, "N": self.N}

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemParams":
        return cls(L=d["L"], lam=d.get("lambda", d.get("lam")), N=d["N"])


@dataclass(frozen=True)
class IndexSet:
    """Labels ``0..N`` followed by the distinguished ``star`` label."""

    N: int

    @property
    def labels(self) -> list:
        return list(range(self.N + 1)) + [STAR]

    @property
    def size(self) -> int:
        return self.N + 2

    def position(self, label: Label) -> int:
        if label == STAR:
            return self.N + 1
        i = int(label)
        if not 0 <= i <= self.N:
            raise KeyError(label)
        return i

    def row(self, block: int, label: Label) -> int:
        return block * self.size + self.position(label)

    def pairs(self):
        """Ordered pairs ``(i, j)`` with ``i != j`` in canonical order."""
        labs = self.labels
        return [(i, j) for i in labs for j in labs if i != j]

    def __iter__(self):
        return iter(self.labels)

    def __len__(self):
        return self.size


def parse_label(raw) -> Label:
    if raw == STAR or raw == "*":
        return STAR
    return int(raw)


@dataclass(frozen=True)
class DiscretePoint:
    x: np.ndarray
    f: float
    g: np.ndarray
    h: float
    s: np.ndarray

    def __post_init__(self):
        for name in ("x", "g", "s"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "f", float(self.f))
        object.__setattr__(self, "h", float(self.h))
        if not (self.x.shape == self.g.shape == self.s.shape) or self.x.ndim != 1:
            raise ValueError("x, g and s must share one ambient dimension")


@dataclass(frozen=True)
class DiscreteRepresentation:
    """Oracle outputs of a pair ``(f, h)`` at ``x_0, ..., x_N, x_*``.

    ``points`` is stored in canonical order (``0..N`` then ``star``); a mapping
    from labels is accepted at construction.
    """

    params: ProblemParams
    points: tuple
    dim: int = field(default=-1)

    def __post_init__(self):
        index = IndexSet(self.params.N)
        pts = self.points
        if isinstance(pts, dict):
            pts = tuple(pts[lab] for lab in index.labels)
        pts = tuple(pts)
        if len(pts) != index.size:
            raise ValueError(f"expected {index.size} points, got {len(pts)}")
        dim = pts[0].x.shape[0]
        if self.dim not in (-1, dim):
            raise ValueError("declared dimension does not match the points")
        for p in pts:
            if p.x.shape[0] != dim:
                raise ValueError("all points must share the ambient dimension")
            arr = np.concatenate([p.x, p.g, p.s, [p.f, p.h]])
            if not np.all(np.isfinite(arr)):
                raise ValueError("representation contains non-finite values")
        for a in range(len(pts)):
            for b in range(a + 1, len(pts)):
                if np.array_equal(pts[a].x, pts[b].x) and (
                    pts[a].f != pts[b].f or pts[a].h != pts[b].h
                ):
                    raise ValueError(
                        f"points {index.labels[a]} and {index.labels[b]} coincide "
                        "but carry different function values"
                    )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dim", dim)

    @property
    def index(self) -> IndexSet:
        return IndexSet(self.params.N)

    def __getitem__(self, label: Label) -> DiscretePoint:
        return self.points[self.index.position(label)]

    def stacked(self, name: str) -> np.ndarray:
        """Array of shape ``(N+2, dim)`` (vectors) or ``(N+2,)`` (scalars)."""
        return np.array([getattr(p, name) for p in self.points])

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "points": [
                {
                    "index": str(lab),
                    "x": p.x.tolist(),
                    "f": p.f,
                    "g": p.g.tolist(),
                    "h": p.h,
                    "s": p.s.tolist(),
                }
                for lab, p in zip(self.index.labels, self.points)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteRepresentation":
        params = ProblemParams.from_dict(d["params"])
        pts = {
            parse_label(p["index"]): DiscretePoint(p["x"], p["f"], p["g"], p["h"], p["s"])
            for p in d["points"]
        }
        return cls(params, pts)


@dataclass(frozen=True)
class PepMatrices:
    """Gram matrix ``G`` (size ``3(N+2)``) and value vectors ``F``, ``H``."""

    G: np.ndarray
    F: np.ndarray
    H: np.ndarray
    params: ProblemParams | None = None

    def __post_init__(self):
        G = np.array(self.G, dtype=float)
        F = np.array(self.F, dtype=float).ravel()
        H = np.array(self.H, dtype=float).ravel()
        n = F.shape[0]
        if H.shape[0] != n or G.shape != (3 * n, 3 * n):
            raise ValueError("G must be 3(N+2) square and F, H of length N+2")
        if not np.allclose(G, G.T, rtol=0, atol=1e-12 * (1 + np.abs(G).max())):
            raise ValueError("G must be symmetric")
        G = 0.5 * (G + G.T)
        for a in (G, F, H):
            a.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "H", H)

    @property
    def N(self) -> int:
        return self.F.shape[0] - 2

    @property
    def index(self) -> IndexSet:
        return IndexSet(self.N)

    def block(self, a: int, b: int) -> np.ndarray:
        """``G^{ab}`` with ``a, b`` in ``{X_BLOCK, G_BLOCK, S_BLOCK}``."""
        n = self.N + 2
        return self.G[a * n:(a + 1) * n, b * n:(b + 1) * n]

    def is_psd(self, rel_tol: float = 1e-8) -> bool:
        scale = max(np.linalg.norm(self.G, 2), 1e-300)
        return np.linalg.eigvalsh(self.G).min() >= -rel_tol * scale

    def to_dict(self) -> dict:
        d = {"G": self.G.tolist(), "F": self.F.tolist(), "H": self.H.tolist()}
        if self.params is not None:
            d["params"] = self.params.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PepMatrices":
        params = ProblemParams.from_dict(d["params"]) if "params" in d else None
        return cls(np.array(d["G"]), np.array(d["F"]), np.array(d["H"]), params)


def bregman_distance(h_at_x: float, h_at_y: float, grad_h_at_y, x, y) -> float:
    """``D_h(x, y) = h(x) - h(y) - <grad h(y), x - y>``."""
    grad = np.atleast_1d(np.asarray(grad_h_at_y, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not (grad.shape == x.shape == y.shape):
        raise ValueError(
            f"dimension mismatch: grad {grad.shape}, x {x.shape}, y {y.shape}"
        )
    return float(h_at_x - h_at_y - grad @ (x - y))


def vectors_matrix(rep: DiscreteRepresentation) -> np.ndarray:
    """Columns ``[x_0..x_*, g_0..g_*, s_0..s_*]``, shape ``(dim, 3(N+2))``."""
    return np.hstack([rep.stacked("x").T, rep.stacked("g").T, rep.stacked("s").T])


def gram_from_representation(rep: DiscreteRepresentation) -> PepMatrices:
    P = vectors_matrix(rep)
    return PepMatrices(P.T @ P, rep.stacked("f"), rep.stacked("h"), rep.params)


def factor_psd(G: np.ndarray, rank_tol: float = 1e-7) -> np.ndarray:
    """Return ``P`` with ``P.T @ P ~= G`` and as few rows as ``rank_tol`` permits."""
    G = 0.5 * (np.asarray(G, dtype=float) + np.asarray(G, dtype=float).T)
    w, V = np.linalg.eigh(G)
    lam_max = max(w.max(), 0.0)
    if lam_max == 0.0:
        return np.zeros((1, G.shape[0]))
    if w.min() < -1e-6 * lam_max:
        raise ValueError(f"not PSD: min eigenvalue {w.min():.3e}, max {lam_max:.3e}")
    keep = w > rank_tol * lam_max
    P = (V[:, keep] * np.sqrt(w[keep])).T
    return P[::-1]


def numerical_rank(G: np.ndarray, rank_tol: float = 1e-7) -> int:
    w = np.linalg.eigvalsh(0.5 * (G + G.T))
    lam_max = w.max()
    if lam_max <= 0:
        return 0
    return int(np.sum(w > rank_tol * lam_max))


def representation_from_gram(
    M: PepMatrices, rank_tol: float = 1e-7, params: ProblemParams | None = None
) -> DiscreteRepresentation:
    params = params or M.params
    if params is None:
        params = ProblemParams(L=1.0, lam=1.0, N=M.N)
    if params.N != M.N:
        raise ValueError("params.N does not match the matrix size")
    P = factor_psd(M.G, rank_tol)
    n = M.N + 2
    pts = [
        DiscretePoint(P[:, k], M.F[k], P[:, n + k], M.H[k], P[:, 2 * n + k])
        for k in range(n)
    ]
    return DiscreteRepresentation(params, tuple(pts))


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj.to_dict(), indent=2)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def load_representation(path) -> DiscreteRepresentation:
    with open(path) as fh:
        return DiscreteRepresentation.from_dict(json.load(fh))


def load_matrices(path) -> PepMatrices:
    with open(path) as fh:
        return PepMatrices.from_dict(json.load(fh))

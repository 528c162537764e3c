"""Neighbor graphs and nonlinear 2D projection.

The projection follows the UMAP construction: fuzzy neighborhood weights from
an exact k-NN graph, then an attractive/repulsive stochastic-gradient layout
whose low-dimensional kernel honors min_dist. Updates are applied in epoch
batches with a seeded generator and a fixed edge schedule, so a given
(input, config, seed) always produces bit-identical coordinates on one
platform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit
from scipy.sparse import coo_matrix

from .curate import FusedCorpus

_SMOOTH_TOL = 1e-5
_MIN_SIGMA_SCALE = 1e-3
_GRAD_CLIP = 4.0


@dataclass(frozen=True)
class ProjectionConfig:
    n_neighbors: int = 15
    min_dist: float = 0.1
    n_epochs: int = 200
    seed: int = 0
    metric: str = "euclidean"

    def __post_init__(self) -> None:
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be >= 2")
        if self.min_dist < 0:
            raise ValueError("min_dist must be non-negative")
        if self.n_epochs < 1:
            raise ValueError("n_epochs must be positive")
        if self.metric != "euclidean":
            raise ValueError(f"unsupported metric: {self.metric}")


@dataclass
class NeighborGraph:
    """Exact k nearest neighbors per point, self excluded.

    Rows of ``indices``/``dists`` are sorted ascending by (distance, index),
    which pins the order of distance ties.
    """

    indices: np.ndarray  # (n, k) int64
    dists: np.ndarray  # (n, k) float64

    @property
    def n_neighbors(self) -> int:
        return self.indices.shape[1]


@dataclass
class Projection2D:
    ids: tuple[str, ...]
    coords: np.ndarray  # (n, 2) float64


def knn_graph(vectors: np.ndarray, k: int) -> NeighborGraph:
    """Brute-force exact k-NN under Euclidean distance.

    Exact at every size this engine targets; block-wise evaluation keeps the
    distance matrix out of memory for large n.
    """
    X = np.ascontiguousarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("vectors must be a 2D matrix")
    n = X.shape[0]
    if not np.isfinite(X).all():
        raise ValueError("non-finite entries in vectors")
    if k < 1:
        raise ValueError("k must be positive")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the point count {n}")

    sq = np.einsum("ij,ij->i", X, X)
    indices = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k), dtype=np.float64)
    block = max(1, (1 << 22) // max(n, 1))
    for start in range(0, n, block):
        stop = min(n, start + block)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (X[start:stop] @ X.T)
        np.maximum(d2, 0.0, out=d2)
        for r in range(start, stop):
            row = d2[r - start]
            row[r] = np.inf  # self excluded; duplicate points keep distance 0
            kth = np.partition(row, k - 1)[k - 1]
            cand = np.flatnonzero(row <= kth)
            order = cand[np.lexsort((cand, row[cand]))][:k]
            indices[r] = order
            dists[r] = np.sqrt(row[order])
    return NeighborGraph(indices=indices, dists=dists)


def _smooth_neighbor_weights(graph: NeighborGraph) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (sigma, rho) so each fuzzy neighborhood has size log2(k+1)."""
    n, k = graph.dists.shape
    target = np.log2(k + 1)
    rhos = np.zeros(n)
    sigmas = np.ones(n)
    mean_all = float(graph.dists.mean()) if graph.dists.size else 0.0
    for i in range(n):
        row = graph.dists[i]
        nonzero = row[row > 0.0]
        rhos[i] = nonzero[0] if nonzero.size else 0.0
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(64):
            shifted = row - rhos[i]
            psum = float(np.sum(np.where(shifted > 0, np.exp(-shifted / mid), 1.0)))
            if abs(psum - target) < _SMOOTH_TOL:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2.0 if hi == np.inf else (lo + hi) / 2.0
        sigmas[i] = mid
        floor = _MIN_SIGMA_SCALE * (row.mean() if rhos[i] > 0 else mean_all)
        if sigmas[i] < floor:
            sigmas[i] = floor
    return sigmas, rhos


def _fuzzy_edges(graph: NeighborGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetrized fuzzy weights; returns undirected edges (i, j, weight), i < j."""
    n, k = graph.indices.shape
    sigmas, rhos = _smooth_neighbor_weights(graph)
    shifted = graph.dists - rhos[:, None]
    vals = np.where(shifted <= 0, 1.0, np.exp(-shifted / sigmas[:, None]))
    rows = np.repeat(np.arange(n), k)
    cols = graph.indices.ravel()
    W = coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    Wt = W.T.tocsr()
    sym = (W + Wt - W.multiply(Wt)).tocoo()
    keep = sym.row < sym.col
    return sym.row[keep], sym.col[keep], sym.data[keep]


def _attraction_curve(min_dist: float, spread: float = 1.0) -> tuple[float, float]:
    """Fit (a, b) of 1/(1 + a d^{2b}) to the offset exponential target curve."""

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    xv = np.linspace(0.0, spread * 3.0, 300)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))
    (a, b), _ = curve_fit(curve, xv, yv)
    return float(a), float(b)


def _pca_init(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Deterministic PCA init scaled to [-10, 10], plus tiny seeded jitter.

    Component signs are fixed (largest-magnitude loading positive) so the
    LAPACK sign ambiguity cannot leak into the output.
    """
    n, d = X.shape
    Xc = X - X.mean(axis=0)
    if d <= n:
        cov = Xc.T @ Xc
        _, vecs = np.linalg.eigh(cov)
        comps = vecs[:, -1 : -min(2, d) - 1 : -1]
        for c in range(comps.shape[1]):
            pivot = int(np.argmax(np.abs(comps[:, c])))
            if comps[pivot, c] < 0:
                comps[:, c] = -comps[:, c]
        Y = Xc @ comps
    else:
        gram = Xc @ Xc.T
        vals, vecs = np.linalg.eigh(gram)
        take = min(2, n)
        Y = vecs[:, -1 : -take - 1 : -1] * np.sqrt(np.clip(vals[-1 : -take - 1 : -1], 0, None))
        for c in range(Y.shape[1]):
            pivot = int(np.argmax(np.abs(Y[:, c])))
            if Y[pivot, c] < 0:
                Y[:, c] = -Y[:, c]
    if Y.shape[1] < 2:
        Y = np.hstack([Y, np.zeros((n, 2 - Y.shape[1]))])
    peak = float(np.max(np.abs(Y)))
    if peak > 0:
        Y = Y * (10.0 / peak)
    return Y + rng.normal(scale=1e-4, size=(n, 2))


def _optimize_layout(
    Y: np.ndarray,
    edges: tuple[np.ndarray, np.ndarray, np.ndarray],
    cfg: ProjectionConfig,
    rng: np.random.Generator,
    negative_sample_rate: int = 5,
    initial_alpha: float = 1.0,
) -> np.ndarray:
    heads, tails, weights = edges
    n = Y.shape[0]
    if heads.size == 0:
        return Y
    a, b = _attraction_curve(cfg.min_dist)
    # Edge e fires every max(w)/w[e] epochs, the classic epoch schedule.
    wmax = weights.max()
    live = weights >= wmax / cfg.n_epochs
    heads, tails, weights = heads[live], tails[live], weights[live]
    epochs_per_sample = wmax / weights
    next_sample = epochs_per_sample.copy()

    for epoch in range(1, cfg.n_epochs + 1):
        alpha = initial_alpha * (1.0 - (epoch - 1) / cfg.n_epochs)
        active = next_sample <= epoch
        if not np.any(active):
            continue
        i, j = heads[active], tails[active]
        diff = Y[i] - Y[j]
        d2 = np.einsum("ij,ij->i", diff, diff)
        attract = np.zeros_like(d2)
        pos = d2 > 0.0
        d2p = d2[pos]
        attract[pos] = (-2.0 * a * b * np.power(d2p, b - 1.0)) / (
            a * np.power(d2p, b) + 1.0
        )
        step = np.clip(attract[:, None] * diff, -_GRAD_CLIP, _GRAD_CLIP) * alpha
        np.add.at(Y, i, step)
        np.add.at(Y, j, -step)
        for anchor in (i, j):
            for _ in range(negative_sample_rate):
                other = rng.integers(0, n, size=anchor.size)
                diff_n = Y[anchor] - Y[other]
                d2n = np.einsum("ij,ij->i", diff_n, diff_n)
                repel = 2.0 * b / ((0.001 + d2n) * (a * np.power(d2n, b) + 1.0))
                repel[other == anchor] = 0.0
                step_n = np.clip(repel[:, None] * diff_n, -_GRAD_CLIP, _GRAD_CLIP) * alpha
                np.add.at(Y, anchor, step_n)
        next_sample[active] += epochs_per_sample[active]
    return Y


def _embed(X: np.ndarray, cfg: ProjectionConfig, seed) -> np.ndarray:
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points")
    k = min(cfg.n_neighbors, n - 1)  # small inputs clamp rather than fail
    graph = knn_graph(X, k)
    edges = _fuzzy_edges(graph)
    rng = np.random.Generator(np.random.PCG64(seed))
    Y = _pca_init(X, rng)
    Y = _optimize_layout(Y, edges, cfg, rng)
    if not np.isfinite(Y).all():
        raise RuntimeError("layout diverged to non-finite coordinates")
    return Y


def project_global(fused: FusedCorpus, cfg: ProjectionConfig) -> Projection2D:
    """Project every fused vector onto 2D, preserving global structure."""
    X = np.asarray(fused.matrix, dtype=np.float64)
    if not np.isfinite(X).all():
        raise ValueError("non-finite fused vectors")
    coords = _embed(X, cfg, cfg.seed)
    return Projection2D(ids=tuple(fused.ids), coords=coords)


def project_local(
    member_vectors: np.ndarray,
    cfg: ProjectionConfig,
    ids: Optional[Sequence[str]] = None,
    seed_offset: int = 0,
) -> Projection2D:
    """Re-project one cluster in an unconstrained local frame.

    Clusters smaller than n_neighbors+1 clamp n_neighbors to size-1; fitting
    the local frame into a region polygon happens downstream.
    """
    X = np.asarray(member_vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("cluster must contain at least 2 points")
    if not np.isfinite(X).all():
        raise ValueError("non-finite member vectors")
    seed = np.random.SeedSequence(cfg.seed, spawn_key=(seed_offset,))
    coords = _embed(X, cfg, seed)
    names = tuple(ids) if ids is not None else tuple(str(i) for i in range(X.shape[0]))
    return Projection2D(ids=names, coords=coords)


def trustworthiness(high: np.ndarray, low: Projection2D | np.ndarray, k: int) -> float:
    """Neighbor-preservation score in [0, 1] for sensible k.

    1 - (2 / (n k (2n - 3k - 1))) * sum over points i and over low-dim
    k-neighbors j of i that are not high-dim k-neighbors of (rank(i, j) - k),
    where rank is j's position in i's high-dim neighbor ordering.
    """
    X = np.asarray(high, dtype=np.float64)
    Y = low.coords if isinstance(low, Projection2D) else np.asarray(low, dtype=np.float64)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise ValueError("point sets are not aligned")
    if k < 1 or k >= n:
        raise ValueError("k too large")

    def ordered_neighbors(M: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(M[:, None, :] - M[None, :, :], axis=2)
        np.fill_diagonal(d, np.inf)
        idx = np.arange(n)
        rows = []
        for i in range(n):
            order = np.lexsort((idx, d[i]))  # distance ties break by index
            rows.append(order[order != i])
        return np.stack(rows)

    high_order = ordered_neighbors(X)  # (n, n-1), nearest first
    low_order = ordered_neighbors(Y)
    rank = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        rank[i, high_order[i]] = np.arange(1, n)
    penalty = 0
    for i in range(n):
        high_k = set(high_order[i, :k].tolist())
        for j in low_order[i, :k]:
            if int(j) not in high_k:
                penalty += int(rank[i, j]) - k
    if penalty == 0:
        return 1.0
    return 1.0 - (2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0))) * penalty

"""Dimensionality reduction, k-means, and cluster-separation metrics.

Five techniques (PCA, truncated SVD, classical MDS, exact t-SNE, Isomap)
project embedding matrices to 2-D; k-means with k=2 then clusters the
projection and the cluster ratio (centroid separation over mean
within-cluster spread) scores each technique. All randomness flows through
explicit seeds, so every run is reproducible.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import DegenerateInput, DisconnectedGraph, PerplexityOutOfRange


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError("input must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("input matrix contains NaN/Inf")
    return X


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Per column: flip sign so the largest-magnitude loading is positive."""
    out = components.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def pca(X, k: int) -> np.ndarray:
    """Project onto the top-k eigenvectors of the covariance of centered X."""
    X = _as_matrix(X)
    n, d = X.shape
    if k > min(n - 1, d) and n > 1:
        raise ValueError(f"k={k} exceeds min(n-1, d)={min(n - 1, d)}")
    Xc = X - X.mean(axis=0)
    cov = (Xc.T @ Xc) / max(n - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    # zero-pad directions beyond numerical rank rather than emit noise
    tol = max(n, d) * np.finfo(float).eps * max(eigvals.max(initial=0.0), 1.0)
    keep = eigvals > tol
    if not np.all(keep):
        warnings.warn("requested components exceed numerical rank; zero-padding")
        eigvecs = eigvecs.copy()
        eigvecs[:, ~keep] = 0.0
    return Xc @ _fix_signs(eigvecs)


def tsvd(X, k: int) -> np.ndarray:
    """X @ V_k for the top-k right singular vectors of uncentered X."""
    X = _as_matrix(X)
    n, d = X.shape
    if k > min(n, d):
        raise ValueError(f"k={k} exceeds min(n, d)={min(n, d)}")
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    V = vt[:k].T
    tol = max(n, d) * np.finfo(float).eps * max(s.max(initial=0.0), 1.0)
    keep = s[:k] > tol
    if not np.all(keep):
        warnings.warn("requested components exceed numerical rank; zero-padding")
        V = V.copy()
        V[:, ~keep] = 0.0
    return X @ _fix_signs(V)


def mds_classical(X, k: int = 2, distances: np.ndarray | None = None) -> np.ndarray:
    """Torgerson scaling of the pairwise Euclidean distance matrix.

    ``distances`` overrides the computed matrix (used by Isomap for
    geodesic distances).
    """
    X = _as_matrix(X)
    n = X.shape[0]
    if n == 1:
        return np.zeros((1, k))
    D = distances if distances is not None else squareform(pdist(X))
    if np.all(D == 0):
        if np.any(X != X[0]):
            raise DegenerateInput("zero distance matrix for distinct points")
        return np.zeros((n, k))
    D2 = D ** 2
    J = np.eye(n) - np.ones((n, n)) / n
    B = -0.5 * J @ D2 @ J
    eigvals, eigvecs = np.linalg.eigh(B)
    order = np.argsort(eigvals)[::-1][:k]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    if np.any(eigvals < -1e-9 * max(abs(eigvals).max(), 1.0)):
        warnings.warn("negative eigenvalues clamped to zero (non-Euclidean distances)")
    eigvals = np.clip(eigvals, 0.0, None)
    return _fix_signs(eigvecs) * np.sqrt(eigvals)


# -- t-SNE -------------------------------------------------------------------


def _entropy_and_probs(dist_row: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """Shannon entropy (bits) and conditional probabilities at precision beta."""
    p = np.exp(-dist_row * beta)
    s = p.sum()
    if s <= 0:
        return 0.0, np.zeros_like(p)
    p = p / s
    nz = p > 0
    h = -np.sum(p[nz] * np.log2(p[nz]))
    return float(h), p


def _conditional_probs(D2: np.ndarray, perplexity: float, tol: float = 1e-5,
                       max_iter: int = 50) -> np.ndarray:
    """Per-point Gaussian bandwidths by bisection on log2-entropy."""
    n = D2.shape[0]
    target = np.log2(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        row = np.delete(D2[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        h, p = _entropy_and_probs(row, beta)
        for _ in range(max_iter):
            if abs(h - target) <= tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2 if hi == np.inf else (lo + hi) / 2
            else:
                hi = beta
                beta = (lo + hi) / 2
            h, p = _entropy_and_probs(row, beta)
        P[i, np.arange(n) != i] = p
    return P


@dataclass
class TsneTrace:
    kl: list[float] = field(default_factory=list)


def tsne(X, perplexity: float = 15.0, seed: int = 0, iters: int = 1000,
         trace: TsneTrace | None = None) -> np.ndarray:
    """Exact (O(n^2)) t-SNE to 2-D with the standard optimizer schedule:
    early exaggeration x12 for 250 iterations, learning rate 200, momentum
    0.5 then 0.8 after iteration 250, seeded Gaussian init (sigma=1e-4)."""
    X = _as_matrix(X)
    n = X.shape[0]
    if n < 4:
        raise ValueError("t-SNE requires at least 4 points")
    if not 1.0 <= perplexity <= (n - 1) / 3:
        raise PerplexityOutOfRange(
            f"perplexity {perplexity} outside [1, {(n - 1) / 3:.2f}] for n={n}"
        )
    D2 = squareform(pdist(X)) ** 2
    Pc = _conditional_probs(D2, perplexity)
    P = (Pc + Pc.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)

    rng = np.random.default_rng(seed)
    Y = rng.normal(scale=1e-4, size=(n, 2))
    dY = np.zeros_like(Y)
    gains = np.ones_like(Y)  # per-parameter adaptive gains stabilize lr=200
    lr = 200.0
    exaggeration = 12.0
    eps = 1e-12

    for it in range(iters):
        Peff = P * exaggeration if it < 250 else P
        momentum = 0.5 if it < 250 else 0.8

        diff = Y[:, None, :] - Y[None, :, :]
        dist2 = np.sum(diff ** 2, axis=2)
        num = 1.0 / (1.0 + dist2)
        np.fill_diagonal(num, 0.0)
        Q = num / num.sum()
        Q = np.maximum(Q, eps)

        if trace is not None and (it == 0 or it == iters - 1):
            trace.kl.append(float(np.sum(P * np.log(P / Q))))

        grad = 4.0 * np.einsum("ij,ijk->ik", (Peff - Q) * num, diff)
        same_sign = np.sign(grad) == np.sign(dY)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, 0.01)
        dY = momentum * dY - lr * gains * grad
        Y = Y + dY
        Y = Y - Y.mean(axis=0)
    return Y


def tsne_entropy_calibration(X, perplexity: float) -> np.ndarray:
    """Per-point |log2-entropy - log2(perplexity)| after bandwidth search."""
    X = _as_matrix(X)
    D2 = squareform(pdist(X)) ** 2
    n = X.shape[0]
    target = np.log2(perplexity)
    P = _conditional_probs(D2, perplexity)
    errs = np.zeros(n)
    for i in range(n):
        row = P[i][np.arange(n) != i]
        nz = row > 0
        h = -np.sum(row[nz] * np.log2(row[nz]))
        errs[i] = abs(h - target)
    return errs


# -- Isomap ------------------------------------------------------------------


def isomap(X, k_neighbors: int = 10, k: int = 2) -> np.ndarray:
    """Geodesic distances on the symmetric k-NN graph, then classical MDS."""
    X = _as_matrix(X)
    n = X.shape[0]
    if k_neighbors < 1 or k_neighbors >= n:
        raise ValueError("k_neighbors must be in [1, n-1]")
    D = cdist(X, X)
    graph = np.full((n, n), np.inf)
    for i in range(n):
        order = np.argsort(D[i])
        picked = 0
        for j in order:
            if j == i:
                continue
            graph[i, j] = D[i, j]
            picked += 1
            if picked == k_neighbors:
                break
    graph = np.minimum(graph, graph.T)  # symmetric: union of directed edges
    adjacency = np.where(np.isinf(graph), 0.0, graph)
    mask = ~np.isinf(graph)
    n_comp, labels = connected_components(mask, directed=False)
    if n_comp > 1:
        sizes = sorted(np.bincount(labels).tolist(), reverse=True)
        raise DisconnectedGraph(sizes)
    geo = shortest_path(adjacency, method="D", directed=False)
    return mds_classical(X, k=k, distances=geo)


# -- k-means -----------------------------------------------------------------


def kmeans(X, k: int = 2, seed: int = 0, max_iter: int = 300, tol: float = 1e-6,
           inertia_trace: list | None = None) -> tuple[np.ndarray, np.ndarray]:
    """k-means++ seeded Lloyd iterations; empty clusters are reseeded to the
    farthest point. Returns (assignments, centers)."""
    X = _as_matrix(X)
    n = X.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total == 0:
            centers[c] = X[rng.integers(n)]
        else:
            probs = closest / total
            centers[c] = X[rng.choice(n, p=probs)]
        closest = np.minimum(closest, np.sum((X - centers[c]) ** 2, axis=1))

    assignments = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = cdist(X, centers) ** 2
        assignments = np.argmin(d2, axis=1)
        if inertia_trace is not None:
            inertia_trace.append(float(d2[np.arange(n), assignments].sum()))
        new_centers = centers.copy()
        for c in range(k):
            members = X[assignments == c]
            if len(members) == 0:
                # reseed empty cluster to the point farthest from its center
                far = int(np.argmax(d2[np.arange(n), assignments]))
                new_centers[c] = X[far]
            else:
                new_centers[c] = members.mean(axis=0)
        move = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if move < tol:
            break
    d2 = cdist(X, centers) ** 2
    assignments = np.argmin(d2, axis=1)
    return assignments, centers


# -- cluster metrics -----------------------------------------------------------


@dataclass(frozen=True)
class ClusterMetrics:
    cluster_distance: float
    collection_distance: float
    cluster_ratio: float


def cluster_metrics(points, assignments) -> ClusterMetrics:
    """Centroid separation, pooled mean point-to-own-centroid distance, and
    their ratio, for exactly two non-empty clusters."""
    points = _as_matrix(points)
    assignments = np.asarray(assignments)
    labels = np.unique(assignments)
    if len(labels) != 2:
        raise ValueError(f"exactly 2 non-empty clusters required, got {len(labels)}")
    c0 = points[assignments == labels[0]].mean(axis=0)
    c1 = points[assignments == labels[1]].mean(axis=0)
    cluster_distance = float(np.linalg.norm(c0 - c1))
    centers = {labels[0]: c0, labels[1]: c1}
    dists = [float(np.linalg.norm(p - centers[a])) for p, a in zip(points, assignments)]
    collection_distance = float(np.mean(dists))
    if collection_distance == 0.0:
        ratio = 0.0 if cluster_distance == 0.0 else float("inf")
    else:
        ratio = cluster_distance / collection_distance
    return ClusterMetrics(cluster_distance, collection_distance, ratio)


# -- experiment runner -----------------------------------------------------------


TECHNIQUES = ("mds", "tsne", "pca", "tsvd", "isomap")


@dataclass
class TechniqueResult:
    name: str
    metrics: ClusterMetrics | None
    wall_ms: float
    error: str | None = None


@dataclass
class ReductionReport:
    seed: int
    perplexity: float
    k_neighbors: int
    results: list[TechniqueResult]

    def ranking(self) -> list[str]:
        scored = [r for r in self.results if r.metrics is not None]
        scored.sort(key=lambda r: r.metrics.cluster_ratio, reverse=True)
        return [r.name for r in scored]

    def to_table(self) -> str:
        lines = [f"{'technique':10} {'cluster_dist':>14} {'collection_dist':>16} "
                 f"{'cluster_ratio':>14} {'wall_ms':>9}"]
        for r in self.results:
            if r.metrics is None:
                lines.append(f"{r.name:10} {'-':>14} {'-':>16} {'-':>14} "
                             f"{r.wall_ms:9.1f}  ERROR: {r.error}")
            else:
                m = r.metrics
                lines.append(
                    f"{r.name:10} {m.cluster_distance:14.6f} "
                    f"{m.collection_distance:16.6f} {m.cluster_ratio:14.6f} "
                    f"{r.wall_ms:9.1f}"
                )
        lines.append("ranking: " + " > ".join(self.ranking()))
        return "\n".join(lines)

    def to_ndjson(self) -> str:
        rows = []
        for r in self.results:
            rows.append(json.dumps({
                "technique": r.name,
                "cluster_distance": r.metrics.cluster_distance if r.metrics else None,
                "collection_distance": r.metrics.collection_distance if r.metrics else None,
                "cluster_ratio": r.metrics.cluster_ratio if r.metrics else None,
                "wall_ms": r.wall_ms,
                "seed": self.seed,
                "error": r.error,
            }))
        return "\n".join(rows) + "\n"


def run_reduction_experiment(X, seed: int = 0, perplexity: float = 15.0,
                             k_neighbors: int = 10,
                             tsne_iters: int = 1000) -> ReductionReport:
    """Reduce the embedding matrix to 2-D with each technique, cluster with
    k-means (k=2), and score via the cluster ratio. Technique failures are
    recorded in the report, never fatal."""
    X = _as_matrix(X)
    results = []
    for name in TECHNIQUES:
        t0 = time.perf_counter()
        try:
            if name == "pca":
                Y = pca(X, 2)
            elif name == "tsvd":
                Y = tsvd(X, 2)
            elif name == "mds":
                Y = mds_classical(X, 2)
            elif name == "tsne":
                Y = tsne(X, perplexity=perplexity, seed=seed, iters=tsne_iters)
            else:
                Y = isomap(X, k_neighbors=k_neighbors, k=2)
            assignments, _ = kmeans(Y, k=2, seed=seed)
            metrics = cluster_metrics(Y, assignments)
            results.append(TechniqueResult(name, metrics,
                                           (time.perf_counter() - t0) * 1000))
        except Exception as e:
            results.append(TechniqueResult(name, None,
                                           (time.perf_counter() - t0) * 1000,
                                           error=f"{type(e).__name__}: {e}"))
    return ReductionReport(seed=seed, perplexity=perplexity,
                           k_neighbors=k_neighbors, results=results)

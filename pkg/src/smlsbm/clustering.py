"""Generic clustering: k-means++/Lloyd, the gap statistic and complete-linkage
agglomerative clustering."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster import hierarchy
from scipy.spatial.distance import squareform

from ._rng import derive_rng, derive_seed


class EmptyClusterError(RuntimeError):
    """k-means could not produce ``k`` nonempty clusters."""


@dataclass
class KMeansSettings:
    n_restarts: int = 10
    max_iter: int = 300
    tol: float = 0.0
    seed: int = 0


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int
    objective_trace: list[float] = field(default_factory=list)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    idx = [int(rng.integers(n))]
    d2 = _sq_dists(x, x[idx])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise EmptyClusterError(f"fewer than {k} distinct points")
        nxt = int(rng.choice(n, p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, _sq_dists(x, x[[nxt]])[:, 0])
    return x[idx].copy()


def _lloyd(x, centers, max_iter, tol):
    k = centers.shape[0]
    n = len(x)
    rows = np.arange(n)
    trace = []
    labels = None
    centers = centers.copy()
    for it in range(1, max_iter + 1):
        d = _sq_dists(x, centers)
        new_labels = d.argmin(1)
        counts = np.bincount(new_labels, minlength=k)
        for _ in range(k + 1):
            empty = np.flatnonzero(counts == 0)
            if empty.size == 0:
                break
            # re-seed at the point farthest from its own center
            own = d[rows, new_labels]
            own = np.where(counts[new_labels] > 1, own, -1.0)
            far = int(np.argmax(own))
            if own[far] <= 0:
                raise EmptyClusterError(f"fewer than {k} distinct points")
            centers[empty[0]] = x[far]
            d[:, empty[0]] = _sq_dists(x, x[[far]])[:, 0]
            new_labels = d.argmin(1)
            counts = np.bincount(new_labels, minlength=k)
        else:
            raise EmptyClusterError("cannot refill empty clusters")
        trace.append(float(d[rows, new_labels].sum()))
        new_centers = np.stack([x[new_labels == m].mean(0) for m in range(k)])
        converged = labels is not None and np.array_equal(labels, new_labels)
        shift = float(((new_centers - centers) ** 2).sum())
        labels, centers = new_labels, new_centers
        if converged or shift <= tol:
            break
    inertia = float(_sq_dists(x, centers)[rows, labels].sum())
    trace.append(inertia)
    return labels, centers, inertia, it, trace


def kmeans_fit(points, k: int, settings: KMeansSettings | None = None) -> KMeansResult:
    """Best of ``n_restarts`` k-means++ seeded Lloyd runs by inertia.

    Labels are canonicalized to first-occurrence order so that the output is a
    function of the partition alone.
    """
    settings = settings or KMeansSettings()
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    if k == 1:
        c = x.mean(0, keepdims=True)
        inertia = float(_sq_dists(x, c).sum())
        return KMeansResult(np.zeros(n, dtype=int), c, inertia, 0, [inertia])
    # seeding runs over a canonical point order so results do not depend on
    # how the caller ordered the points
    perm = np.lexsort(x.T[::-1])
    inv = np.empty_like(perm)
    inv[perm] = np.arange(n)
    x = x[perm]
    best = None
    err = None
    for r in range(settings.n_restarts):
        rng = derive_rng(settings.seed, "kmeans", r)
        try:
            centers = _kmeanspp(x, k, rng)
            res = _lloyd(x, centers, settings.max_iter, settings.tol)
        except EmptyClusterError as exc:
            err = exc
            continue
        if best is None or res[2] < best[2]:
            best = res
    if best is None:
        raise EmptyClusterError(f"k-means failed in all {settings.n_restarts} restarts: {err}")
    labels, centers, inertia, n_iter, trace = best
    labels = labels[inv]
    labels, order = canonical_labels(labels, return_order=True)
    return KMeansResult(labels, centers[order], inertia, n_iter, trace)


def kmeans(points, k: int, settings: KMeansSettings | None = None) -> np.ndarray:
    return kmeans_fit(points, k, settings).labels


def canonical_labels(labels, return_order: bool = False):
    """Relabel to ``0..k-1`` by order of first appearance."""
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    mapping = {old: new for new, old in enumerate(order)}
    out = np.array([mapping[v] for v in labels], dtype=int)
    if return_order:
        return out, np.asarray(order, dtype=int)
    return out


def within_dispersion(x: np.ndarray, labels: np.ndarray) -> float:
    w = 0.0
    for m in np.unique(labels):
        pts = x[labels == m]
        w += float(((pts - pts.mean(0)) ** 2).sum())
    return w


@dataclass
class GapResult:
    k: int
    candidates: list[int]
    gap: np.ndarray
    s: np.ndarray
    log_w: np.ndarray


def _reference_sampler(x: np.ndarray, reference: str, rng: np.random.Generator):
    if reference == "box":
        lo, hi = x.min(0), x.max(0)
        return lambda: rng.uniform(lo, hi, size=x.shape)
    if reference == "pca":
        mu = x.mean(0)
        _, _, vt = np.linalg.svd(x - mu, full_matrices=False)
        proj = (x - mu) @ vt.T
        lo, hi = proj.min(0), proj.max(0)
        return lambda: rng.uniform(lo, hi, size=proj.shape) @ vt + mu
    raise ValueError(f"unknown reference {reference!r}")


def gap_statistic(points, k_candidates, B: int = 20, seed: int = 0,
                  kmeans_settings: KMeansSettings | None = None,
                  reference: str = "pca") -> GapResult:
    """Tibshirani-Walther-Hastie gap with the 1-SE rule.

    References are uniform over a box: aligned with the principal axes of the
    data (``"pca"``) or with the coordinate axes (``"box"``). With few points
    in many dimensions the coordinate box is a poor null, since its
    dispersion barely falls with ``k`` and the gap then grows without bound.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    cands = sorted(set(int(k) for k in k_candidates))
    if not cands:
        raise ValueError("no candidate k")
    n_distinct = len(np.unique(x, axis=0))
    cands = [k for k in cands if 1 <= k <= max(1, n_distinct)]
    if n_distinct == 1 or len(cands) <= 1:
        k = cands[0] if cands else 1
        return GapResult(k, cands, np.zeros(len(cands)), np.zeros(len(cands)), np.zeros(len(cands)))
    base = kmeans_settings or KMeansSettings(seed=seed)
    floor = 1e-12 * max(within_dispersion(x, np.zeros(len(x), int)), 1e-300)

    def log_w(data, k, key):
        st = KMeansSettings(base.n_restarts, base.max_iter, base.tol, derive_seed(seed, "gap", k, key))
        try:
            lab = kmeans(data, k, st)
        except EmptyClusterError:
            lab = np.zeros(len(data), dtype=int)
        return np.log(max(within_dispersion(data, lab), floor))

    draw = _reference_sampler(x, reference, derive_rng(seed, "gap-reference"))
    refs = [draw() for _ in range(B)]
    lw = np.array([log_w(x, k, 0) for k in cands])
    ref_lw = np.array([[log_w(r, k, b + 1) for b, r in enumerate(refs)] for k in cands])
    gap = ref_lw.mean(1) - lw
    s = ref_lw.std(1) * np.sqrt(1.0 + 1.0 / B)
    chosen = cands[-1]
    for a in range(len(cands) - 1):
        if gap[a] >= gap[a + 1] - s[a + 1]:
            chosen = cands[a]
            break
    return GapResult(chosen, cands, gap, s, lw)


@dataclass
class Dendrogram:
    """Agglomerative merge list in scipy linkage layout: each merge joins
    clusters ``left`` and ``right`` (ids ``>= n`` refer to earlier merges)."""

    n_leaves: int
    merges: np.ndarray
    labels: list[str] | None = None

    @property
    def heights(self) -> np.ndarray:
        return self.merges[:, 2]

    def cut(self, height: float) -> np.ndarray:
        """Flat partition joining everything merged at or below ``height``."""
        if self.n_leaves == 1:
            return np.zeros(1, dtype=int)
        lab = hierarchy.fcluster(self.merges, t=height, criterion="distance")
        return canonical_labels(lab)

    def to_dict(self) -> dict:
        return {
            "n_leaves": self.n_leaves,
            "labels": self.labels,
            "merges": [
                {"left": int(a), "right": int(b), "height": float(h), "size": int(c)}
                for a, b, h, c in self.merges
            ],
        }


def hierarchical_cluster(d, linkage: str = "complete", labels=None) -> Dendrogram:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.allclose(d, d.T) or np.any(np.diag(d) != 0) or np.any(d < 0):
        raise ValueError("distance matrix must be symmetric, nonnegative, zero-diagonal")
    if linkage != "complete":
        raise ValueError(f"unsupported linkage {linkage!r}")
    n = d.shape[0]
    if n < 2:
        return Dendrogram(n, np.zeros((0, 4)), labels)
    z = hierarchy.linkage(squareform(d, checks=False), method="complete")
    return Dendrogram(n, z, list(labels) if labels is not None else None)


def euclidean_distances(features) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    return np.sqrt(_sq_dists(x, x) * (1 - np.eye(len(x))))

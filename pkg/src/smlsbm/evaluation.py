"""Partition metrics, block-matrix error and the comparison baselines."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import (  # noqa: F401  re-exported for callers of this module
    Dendrogram,
    KMeansSettings,
    euclidean_distances,
    gap_statistic,
    hierarchical_cluster,
    kmeans,
)
from .network import MultilayerNetwork
from .sbm import FitConfig, SbmFit, fit_sbm, upper_triangle
from .strata import StrataAssignment


def contingency(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"partitions differ in length: {a.shape} vs {b.shape}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(a, b) -> float:
    """``2 I(a; b) / (H(a) + H(b))`` with natural logs.

    Two single-cluster partitions score 1; a single-cluster partition against
    a nontrivial one scores 0.
    """
    table = contingency(a, b)
    ha, hb = _entropy(table.sum(1)), _entropy(table.sum(0))
    if ha + hb == 0:
        return 1.0
    if ha == 0 or hb == 0:
        return 0.0
    n = table.sum()
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(1), table.sum(0))[nz] / n**2
    mi = float((pij * np.log(pij / outer)).sum())
    return float(min(max(2.0 * mi / (ha + hb), 0.0), 1.0))


def match_labels(z_true, z_est, k: int) -> np.ndarray:
    """Permutation ``perm`` with ``perm[est_label] = true_label`` maximizing
    agreement (Hungarian on the confusion matrix)."""
    z_true, z_est = np.asarray(z_true, int), np.asarray(z_est, int)
    conf = np.zeros((k, k))
    np.add.at(conf, (z_est, z_true), 1)
    rows, cols = linear_sum_assignment(-conf)
    perm = np.empty(k, dtype=int)
    perm[rows] = cols
    return perm


def lower_vec(m: np.ndarray) -> np.ndarray:
    return m[np.tril_indices(m.shape[0])]


def pi_error(pi_true, pi_est, z_true, z_est) -> float:
    """l2 distance between lower triangles (diagonal included) after mapping
    estimated community labels onto the true ones."""
    pi_true, pi_est = np.asarray(pi_true, float), np.asarray(pi_est, float)
    if pi_true.shape != pi_est.shape:
        raise ValueError(f"block matrices differ in size: {pi_true.shape} vs {pi_est.shape}")
    k = pi_true.shape[0]
    perm = match_labels(z_true, z_est, k)
    aligned = np.empty_like(pi_est)
    aligned[np.ix_(perm, perm)] = pi_est
    return float(np.linalg.norm(lower_vec(pi_true) - lower_vec(aligned)))


def baseline_single_sbm(net: MultilayerNetwork, k: int, cfg: FitConfig | None = None) -> SbmFit:
    """One SBM pooled over every layer."""
    cfg = cfg or FitConfig()
    cfg = FitConfig(k, cfg.max_inner_iters, cfg.tol, cfg.n_restarts, cfg.epsilon_clamp, cfg.seed)
    return fit_sbm(list(net.layers), cfg)


def baseline_single_layer_sbm(net: MultilayerNetwork, k: int, cfg: FitConfig | None = None) -> list[SbmFit]:
    """An independent SBM per layer."""
    cfg = cfg or FitConfig()
    cfg = FitConfig(k, cfg.max_inner_iters, cfg.tol, cfg.n_restarts, cfg.epsilon_clamp, cfg.seed)
    return [fit_sbm([a], cfg) for a in net.layers]


def adjacency_features(net: MultilayerNetwork) -> np.ndarray:
    return np.stack([upper_triangle(a).astype(float) for a in net.layers])


def baseline_kmeans_adjacency(net: MultilayerNetwork, s: int,
                              settings: KMeansSettings | None = None) -> StrataAssignment:
    """k-means on the raw upper-triangle adjacency vectors of the layers."""
    return StrataAssignment(kmeans(adjacency_features(net), s, settings))


def layer_dendrogram(net: MultilayerNetwork) -> Dendrogram:
    """Complete-linkage tree of the layers under euclidean distance between
    their adjacency vectors."""
    d = euclidean_distances(adjacency_features(net))
    return hierarchical_cluster(d, "complete", labels=net.layer_labels)

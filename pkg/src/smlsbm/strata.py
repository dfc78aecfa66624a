"""Joint clustering of layers into strata and nodes into communities.

Phase I fits an SBM to every layer on its own, turns each fit into an
edge-probability fingerprint (the upper triangle of ``theta``) and clusters
the fingerprints with k-means. Phase II then repeats, until the layer
partition stops changing:

1. fit one consensus SBM per stratum on the pooled member layers;
2. refit every layer against its stratum twice: block probabilities under the
   consensus assignment, and assignments under the consensus probabilities;
3. build the two fingerprints of every layer from those refits and cluster
   all ``2L`` of them;
4. layers whose two fingerprints agree join that cluster, and each distinct
   disagreeing pair of clusters becomes a new stratum.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import derive_seed
from .clustering import EmptyClusterError, KMeansSettings, canonical_labels, gap_statistic, kmeans_fit
from .network import MultilayerNetwork
from .sbm import FitConfig, SbmFit, fit_sbm, iterate_tau, theta_from, update_pi, upper_triangle

logger = logging.getLogger(__name__)


@dataclass
class StrataAssignment:
    y: np.ndarray

    def __post_init__(self):
        self.y = canonical_labels(np.asarray(self.y, dtype=int))

    @property
    def n_strata(self) -> int:
        return int(self.y.max()) + 1 if self.y.size else 0

    @property
    def n_layers(self) -> int:
        return len(self.y)

    @property
    def members(self) -> list[list[int]]:
        return [np.flatnonzero(self.y == s).tolist() for s in range(self.n_strata)]

    def indicator(self) -> np.ndarray:
        """``L x S`` binary layer-to-stratum matrix."""
        Y = np.zeros((self.n_layers, self.n_strata), dtype=int)
        Y[np.arange(self.n_layers), self.y] = 1
        return Y

    def same_partition(self, other: "StrataAssignment") -> bool:
        return np.array_equal(self.y, other.y)


@dataclass
class StrataConfig:
    s_init: int | None = None
    k_per_stratum: int = 4
    k_overrides: dict[int, int] = field(default_factory=dict)
    max_outer_iters: int = 50
    fit: FitConfig = field(default_factory=FitConfig)
    kmeans: KMeansSettings = field(default_factory=KMeansSettings)
    kmeans_retries: int = 3
    gap_references: int = 20
    refit_tol: float = 1e-6
    refit_max_iter: int = 1
    seed: int = 0
    jobs: int = 1
    # True: each reassignment uses the current strata count as its center count
    grow_centers: bool = False
    consensus_rows_init: bool = True

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.s_init is not None and self.s_init < 1:
            raise ValueError("s_init must be >= 1")

    def k_for(self, stratum: int) -> int:
        return self.k_overrides.get(stratum, self.k_per_stratum)

    def fit_config(self, k: int, *keys) -> FitConfig:
        return replace(self.fit, k=k, seed=derive_seed(self.seed, *keys))

    def kmeans_settings(self, *keys) -> KMeansSettings:
        return replace(self.kmeans, seed=derive_seed(self.seed, *keys))


@dataclass
class IterationRecord:
    y: list[int]
    bounds: list[float]
    n_strata: int


@dataclass
class SmlsbmModel:
    assignment: StrataAssignment
    stratum_fits: list[SbmFit]
    history: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    layer_fits: list[SbmFit] | None = None

    @property
    def y(self) -> np.ndarray:
        return self.assignment.y

    @property
    def n_strata(self) -> int:
        return self.assignment.n_strata

    def layer_fit(self, l: int) -> SbmFit:
        """Consensus fit of the stratum layer ``l`` belongs to."""
        return self.stratum_fits[self.y[l]]

    def to_dict(self, layer_labels=None) -> dict:
        doc = {
            "assignment": {"y": self.y.tolist(), "n_strata": self.n_strata,
                           "members": self.assignment.members},
            "strata": [f.to_dict() for f in self.stratum_fits],
            "history": [
                {"y": h.y, "bounds": h.bounds, "n_strata": h.n_strata} for h in self.history
            ],
            "converged": self.converged,
            "iterations": self.iterations,
        }
        if layer_labels is not None:
            doc["assignment"]["layer_labels"] = list(layer_labels)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SmlsbmModel":
        return cls(
            StrataAssignment(doc["assignment"]["y"]),
            [SbmFit.from_dict(f) for f in doc["strata"]],
            [IterationRecord(h["y"], h["bounds"], h["n_strata"]) for h in doc.get("history", [])],
            bool(doc["converged"]),
            int(doc["iterations"]),
        )


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _fit_layer(args):
    a, cfg = args
    return fit_sbm([a], cfg)


def theta_features(fits) -> np.ndarray:
    return np.stack([upper_triangle(f.theta()) for f in fits])


def cluster_features(features: np.ndarray, s: int, cfg: StrataConfig, *keys):
    """k-means with ``s`` centers; an empty-cluster failure is retried with a
    fresh seed up to ``cfg.kmeans_retries`` times."""
    err = None
    for attempt in range(cfg.kmeans_retries + 1):
        try:
            return kmeans_fit(features, s, cfg.kmeans_settings(*keys, attempt))
        except EmptyClusterError as exc:
            err = exc
    raise EmptyClusterError(f"k-means with {s} centers failed after retries: {err}")


def phase1_init(net: MultilayerNetwork, cfg: StrataConfig):
    """Per-layer fits and the initial strata from clustering their
    fingerprints. Returns ``(assignment, layer_fits, features, centers)``."""
    L = net.n_layers
    if cfg.s_init is not None and cfg.s_init > L:
        raise ValueError(f"s_init={cfg.s_init} exceeds the number of layers {L}")
    jobs = [(net[l], cfg.fit_config(cfg.k_per_stratum, "phase1", l)) for l in range(L)]
    layer_fits = _map(_fit_layer, jobs, cfg.jobs)
    feats = theta_features(layer_fits)
    s = cfg.s_init
    if s is None:
        s = gap_statistic(
            feats, range(1, min(L, 10) + 1), B=cfg.gap_references,
            seed=derive_seed(cfg.seed, "gap"), kmeans_settings=cfg.kmeans,
        ).k
        logger.info("gap statistic selected S=%d", s)
    if s == 1:
        y = np.zeros(L, dtype=int)
        centers = feats.mean(0, keepdims=True)
    else:
        res = cluster_features(feats, s, cfg, "phase1-kmeans")
        y, centers = res.labels, res.centers
    return StrataAssignment(y), layer_fits, feats, centers


def medoid(features: np.ndarray, members, center=None) -> int:
    """Member whose fingerprint is nearest ``center`` (default: member mean)."""
    sub = features[members]
    if center is None:
        center = sub.mean(0)
    d = ((sub - center) ** 2).sum(1)
    return int(members[int(np.argmin(d))])


def fit_stratum_consensus(net: MultilayerNetwork, members, cfg: StrataConfig, init=None,
                          stratum: int = 0, key=()) -> SbmFit:
    if len(members) == 0:
        raise ValueError("a stratum needs at least one layer")
    k = cfg.k_for(stratum)
    if init is not None:
        t = init.tau if isinstance(init, SbmFit) else np.asarray(init)
        if t.shape[1] != k:
            init = None
    fcfg = cfg.fit_config(k, "consensus", *key, stratum)
    return fit_sbm([net[l] for l in members], fcfg, init=init, rows_init=cfg.consensus_rows_init)


def layer_refit_pi(layer: np.ndarray, tau_bar: np.ndarray, eps: float = 1e-9):
    """Layer-specific block probabilities with responsibilities frozen."""
    return update_pi(tau_bar, [layer], eps=eps)


def layer_refit_tau(layer: np.ndarray, pi_bar, alpha_bar, tau_init, tol=1e-6, max_iter=200):
    """Layer-specific responsibilities with ``(pi, alpha)`` frozen.

    Phase II calls this with ``max_iter=1`` (see ``StrataConfig.refit_max_iter``):
    iterating a single weak layer to its own fixed point drifts far from the
    consensus assignment and buries the stratum signal in partition noise.
    """
    tau, _ = iterate_tau([layer], pi_bar, alpha_bar, tau_init, tol=tol, max_iter=max_iter)
    return tau


@dataclass
class LayerRefit:
    pi_tilde: np.ndarray
    tau_tilde: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray


def dual_theta(consensus: SbmFit, pi_tilde: np.ndarray, tau_tilde: np.ndarray):
    """``(theta(consensus tau, layer pi), theta(layer tau, consensus pi))``."""
    return theta_from(consensus.tau, pi_tilde), theta_from(tau_tilde, consensus.pi)


def refit_layer(layer, consensus: SbmFit, cfg: StrataConfig) -> LayerRefit:
    pi_t = layer_refit_pi(layer, consensus.tau, cfg.fit.epsilon_clamp)
    tau_t = layer_refit_tau(layer, consensus.pi, consensus.alpha, consensus.tau,
                            cfg.refit_tol, cfg.refit_max_iter)
    t1, t2 = dual_theta(consensus, pi_t, tau_t)
    return LayerRefit(pi_t, tau_t, t1, t2)


def strata_from_pairs(c1, c2) -> StrataAssignment:
    """Agreeing layers keep their cluster; every distinct disagreeing
    ``(c1, c2)`` pair becomes its own stratum."""
    c1, c2 = np.asarray(c1), np.asarray(c2)
    keys = [(int(a), int(a)) if a == b else (int(a), int(b)) for a, b in zip(c1, c2)]
    agree = sorted({k for k in keys if k[0] == k[1]})
    spawn = sorted({k for k in keys if k[0] != k[1]})
    index = {k: s for s, k in enumerate(agree + spawn)}
    return StrataAssignment(np.array([index[k] for k in keys]))


def reassign_layers(theta1, theta2, s: int, cfg: StrataConfig, key=()) -> StrataAssignment:
    """Cluster the ``2L`` fingerprints (all ``theta1`` then all ``theta2``)
    into ``s`` groups and apply the pair rule."""
    f1 = np.stack([upper_triangle(t) if t.ndim == 2 else t for t in theta1])
    f2 = np.stack([upper_triangle(t) if t.ndim == 2 else t for t in theta2])
    L = len(f1)
    feats = np.vstack([f1, f2])
    s_eff = min(s, len(np.unique(feats, axis=0)))
    if s_eff <= 1:
        return StrataAssignment(np.zeros(L, dtype=int))
    labels = cluster_features(feats, s_eff, cfg, "reassign", *key).labels
    return strata_from_pairs(labels[:L], labels[L:])


def _refit_job(args):
    a, consensus, cfg = args
    return refit_layer(a, consensus, cfg)


def phase2(net: MultilayerNetwork, assignment: StrataAssignment, cfg: StrataConfig,
           features: np.ndarray, layer_taus: list[np.ndarray]) -> SmlsbmModel:
    """Iterate consensus fits, layer refits and reassignment until the layer
    partition is stable or ``cfg.max_outer_iters`` passes have run.

    ``features`` and ``layer_taus`` describe each layer for choosing the
    consensus initialization (the stratum medoid's responsibilities).
    """
    L = net.n_layers
    y = StrataAssignment(assignment.y)
    features = np.asarray(features)
    layer_taus = list(layer_taus)
    history: list[IterationRecord] = []
    target_s = cfg.s_init or y.n_strata
    fits = None
    converged = False
    it = 0
    for it in range(1, cfg.max_outer_iters + 1):
        fits = []
        for s, members in enumerate(y.members):
            m = medoid(features, members)
            fits.append(fit_stratum_consensus(net, members, cfg, init=layer_taus[m],
                                              stratum=s, key=(it,)))
        refits = _map(_refit_job, [(net[l], fits[y.y[l]], cfg) for l in range(L)], cfg.jobs)
        new = reassign_layers([r.theta1 for r in refits], [r.theta2 for r in refits],
                              max(target_s, 1), cfg, key=(it,))
        history.append(IterationRecord(new.y.tolist(), [float(f.bound) for f in fits], new.n_strata))
        logger.debug("outer iteration %d: %d strata", it, new.n_strata)
        features = np.stack([upper_triangle(r.theta1) for r in refits])
        layer_taus = [fits[y.y[l]].tau for l in range(L)]
        if new.same_partition(y):
            converged = True
            break
        y = new
        if cfg.grow_centers:
            target_s = y.n_strata
    if not converged:
        fits = [
            fit_stratum_consensus(net, members, cfg, init=layer_taus[medoid(features, members)],
                                  stratum=s, key=("final",))
            for s, members in enumerate(y.members)
        ]
    return SmlsbmModel(y, fits, history, converged, it)


def fit_smlsbm(net: MultilayerNetwork, cfg: StrataConfig | None = None) -> SmlsbmModel:
    cfg = cfg or StrataConfig()
    L = net.n_layers
    if L == 1 or cfg.s_init == 1:
        fit = fit_sbm(list(net.layers), cfg.fit_config(cfg.k_for(0), "single"))
        return SmlsbmModel(StrataAssignment(np.zeros(L, dtype=int)), [fit], [], True, 0)
    y, layer_fits, feats, _ = phase1_init(net, cfg)
    if cfg.s_init is None and y.n_strata == 1:
        fit = fit_sbm(list(net.layers), cfg.fit_config(cfg.k_for(0), "single"))
        return SmlsbmModel(y, [fit], [], True, 0, layer_fits)
    model = phase2(net, y, cfg, feats, [f.tau for f in layer_fits])
    model.layer_fits = layer_fits
    return model

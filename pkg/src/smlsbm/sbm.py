"""Variational EM for a Bernoulli stochastic block model shared by one or more
layers.

Every layer fed to :func:`fit_sbm` is treated as an independent draw from the
same ``(pi, Z)``, so the sufficient statistics are the summed adjacency matrix
and the layer count. Responsibilities are updated with a synchronous
mean-field sweep in the log domain; when a full sweep would lower the bound
it is shortened by backtracking along the same direction, which keeps the
bound monotone without giving up the synchronous schedule.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ._rng import derive_rng
from .clustering import EmptyClusterError, KMeansSettings, kmeans

logger = logging.getLogger(__name__)

EPS = 1e-9
EMPTY_MASS = 1e-6
_TINY = 1e-300


class NumericalFailure(FloatingPointError):
    def __init__(self, message: str, restart: int | None = None):
        self.restart = restart
        if restart is not None:
            message = f"restart {restart}: {message}"
        super().__init__(message)


@dataclass
class FitConfig:
    k: int = 4
    max_inner_iters: int = 200
    tol: float = 1e-6
    n_restarts: int = 5
    epsilon_clamp: float = EPS
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        if not 0 < self.epsilon_clamp < 0.5:
            raise ValueError("epsilon_clamp must lie in (0, 0.5)")


@dataclass
class SbmFit:
    tau: np.ndarray
    pi: np.ndarray
    alpha: np.ndarray
    bound: float
    n_layers_fitted: int
    diagnostics: dict = field(default_factory=dict)
    trace: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.pi.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.tau.shape[0]

    def hard_partition(self) -> np.ndarray:
        return hard_partition(self.tau)

    def theta(self) -> np.ndarray:
        return theta_from(self.tau, self.pi)

    def to_dict(self) -> dict:
        il = np.tril_indices(self.k)
        return {
            "k": self.k,
            "alpha": self.alpha.tolist(),
            "pi": self.pi[il].tolist(),
            "tau": self.tau.tolist(),
            "bound": float(self.bound),
            "n_layers_fitted": self.n_layers_fitted,
            "diagnostics": _jsonable(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SbmFit":
        k = int(doc["k"])
        pi = np.zeros((k, k))
        pi[np.tril_indices(k)] = doc["pi"]
        pi = pi + np.tril(pi, -1).T
        return cls(
            tau=np.asarray(doc["tau"], dtype=float),
            pi=pi,
            alpha=np.asarray(doc["alpha"], dtype=float),
            bound=float(doc["bound"]),
            n_layers_fitted=int(doc.get("n_layers_fitted", 1)),
            diagnostics=dict(doc.get("diagnostics", {})),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def pool_layers(adjs) -> tuple[np.ndarray, int]:
    """Summed adjacency matrix and layer count of a layer list or stack."""
    if isinstance(adjs, np.ndarray) and adjs.ndim == 2:
        return adjs.astype(float), 1
    stack = [np.asarray(a) for a in adjs]
    if not stack:
        raise ValueError("need at least one layer")
    n = stack[0].shape[0]
    if any(a.shape != (n, n) for a in stack):
        raise ValueError("all layers must share the same N x N shape")
    return np.sum(stack, axis=0, dtype=float), len(stack)


# -- closed-form updates ---------------------------------------------------------

def update_alpha(tau: np.ndarray) -> np.ndarray:
    alpha = np.asarray(tau, dtype=float).mean(axis=0)
    return alpha / alpha.sum()


def _block_stats(tau, asum, n_layers):
    """Ordered-pair (i != j) edge and pair counts between communities."""
    edges = tau.T @ asum @ tau
    s = tau.sum(0)
    pairs = n_layers * (np.outer(s, s) - tau.T @ tau)
    return edges, pairs


def _pi_from_stats(edges, pairs, eps):
    empty = pairs <= 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        pi = np.where(empty, eps, edges / np.where(empty, 1.0, pairs))
    pi = np.clip(0.5 * (pi + pi.T), eps, 1 - eps)
    return pi, empty


def update_pi(tau: np.ndarray, adjs, eps: float = EPS, return_flags: bool = False):
    """Pooled block edge densities; empty block pairs get ``eps`` (flagged)."""
    asum, n_layers = pool_layers(adjs)
    tau = np.asarray(tau, dtype=float)
    pi, empty = _pi_from_stats(*_block_stats(tau, asum, n_layers), eps)
    if return_flags:
        return pi, empty
    return pi


def _log_weights(tau, pi, alpha, asum, n_layers):
    lp, lq = np.log(pi), np.log1p(-pi)
    s = tau.sum(0)[None, :]
    lw = (asum @ tau) @ (lp - lq) + n_layers * (s - tau) @ lq
    return lw + np.log(np.maximum(alpha, _TINY))[None, :]


def _normalize_rows(lw):
    tau = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
    return tau / tau.sum(1, keepdims=True)


def update_tau(tau_prev: np.ndarray, pi: np.ndarray, alpha: np.ndarray, adjs) -> np.ndarray:
    """One synchronous mean-field sweep: every row is recomputed from
    ``tau_prev`` over all ``j != i``, then softmax-normalized."""
    asum, n_layers = pool_layers(adjs)
    lw = _log_weights(np.asarray(tau_prev, float), pi, alpha, asum, n_layers)
    if not np.all(np.isfinite(lw)):
        raise NumericalFailure("non-finite responsibility log-weight")
    return _normalize_rows(lw)


def _bound(tau, pi, alpha, asum, n_layers):
    edges, pairs = _block_stats(tau, asum, n_layers)
    lp, lq = np.log(pi), np.log1p(-pi)
    pair_term = 0.5 * float((edges * lp + (pairs - edges) * lq).sum())
    la = np.log(np.maximum(alpha, _TINY))
    prior = float((tau * la[None, :]).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -float(np.where(tau > 0, tau * np.log(tau), 0.0).sum())
    return prior + pair_term + ent


def bound_J(fit_or_tau, adjs, pi=None, alpha=None) -> float:
    """Variational lower bound: prior term, edge and non-edge terms over
    ``i < j`` pairs of every layer, plus the entropy of ``tau``."""
    if isinstance(fit_or_tau, SbmFit):
        tau, pi, alpha = fit_or_tau.tau, fit_or_tau.pi, fit_or_tau.alpha
    else:
        tau = fit_or_tau
    asum, n_layers = pool_layers(adjs)
    return _bound(np.asarray(tau, float), np.asarray(pi, float), np.asarray(alpha, float), asum, n_layers)


def hard_partition(tau: np.ndarray) -> np.ndarray:
    """Row argmax (0-based); ties go to the lowest community index."""
    return np.argmax(np.asarray(tau), axis=1)


def theta_from(tau_or_z: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Edge-probability matrix ``pi[z_i, z_j]`` under the hard partition of
    ``tau``, with a zero diagonal."""
    z = np.asarray(tau_or_z)
    if z.ndim == 2:
        z = hard_partition(z)
    theta = np.asarray(pi)[np.ix_(z, z)].astype(float)
    np.fill_diagonal(theta, 0.0)
    return theta


def upper_triangle(m: np.ndarray) -> np.ndarray:
    return m[np.triu_indices(m.shape[0], k=1)]


# -- fitting ---------------------------------------------------------------------------

def _ascent_step(tau, pi, alpha, asum, n_layers, j_old, max_halvings=40):
    """Synchronous sweep, backtracked toward ``tau`` if it lowers the bound."""
    lw = _log_weights(tau, pi, alpha, asum, n_layers)
    if not np.all(np.isfinite(lw)):
        raise NumericalFailure("non-finite responsibility log-weight")
    target = _normalize_rows(lw)
    step = 1.0
    for _ in range(max_halvings):
        cand = target if step == 1.0 else (1 - step) * tau + step * target
        j = _bound(cand, pi, alpha, asum, n_layers)
        if j >= j_old:
            return cand, j, step
        step *= 0.5
    return tau, j_old, 0.0


def _m_step(tau, asum, n_layers, eps):
    alpha = update_alpha(tau)
    pi, empty = _pi_from_stats(*_block_stats(tau, asum, n_layers), eps)
    return alpha, pi, empty


def reseed_empty(tau: np.ndarray, threshold: float = EMPTY_MASS) -> tuple[np.ndarray, list[int]]:
    """Give each near-empty column full responsibility for the node whose
    largest responsibility is smallest."""
    tau = np.array(tau, dtype=float)
    mass = tau.sum(0)
    reseeded = []
    used: set[int] = set()
    for m in np.flatnonzero(mass < threshold):
        conf = tau.max(1)
        order = np.argsort(conf, kind="stable")
        i = next(int(v) for v in order if int(v) not in used)
        used.add(i)
        tau[i] = 0.0
        tau[i, m] = 1.0
        reseeded.append(int(m))
    return tau, reseeded


def _run_em(tau, asum, n_layers, cfg, restart):
    alpha, pi, empty = _m_step(tau, asum, n_layers, cfg.epsilon_clamp)
    j = _bound(tau, pi, alpha, asum, n_layers)
    trace = [j]
    it = 0
    converged = False
    for it in range(1, cfg.max_inner_iters + 1):
        tau, _, _ = _ascent_step(tau, pi, alpha, asum, n_layers, j)
        alpha, pi, empty = _m_step(tau, asum, n_layers, cfg.epsilon_clamp)
        j_new = _bound(tau, pi, alpha, asum, n_layers)
        if not np.isfinite(j_new):
            raise NumericalFailure("non-finite bound", restart)
        trace.append(j_new)
        done = abs(j_new - j) < cfg.tol * (1 + abs(j))
        j = j_new
        if done:
            converged = True
            break
    return tau, pi, alpha, j, trace, it, converged, empty


def _fit_one(tau0, asum, n_layers, cfg, restart):
    tau0, reseeded = reseed_empty(tau0)
    tau, pi, alpha, j, trace, it, conv, empty = _run_em(tau0, asum, n_layers, cfg, restart)
    if cfg.k > 1 and np.any(tau.sum(0) < EMPTY_MASS):
        # a collapsed community gets one more chance from a reseeded state
        tau1, more = reseed_empty(tau)
        out = _run_em(tau1, asum, n_layers, cfg, restart)
        if out[3] > j:
            tau, pi, alpha, j, trace, it2, conv, empty = out
            it += it2
            reseeded += more
    diag = {
        "restart": restart,
        "iterations": it,
        "converged": conv,
        "reseeded_columns": reseeded,
        "empty_blocks": [[int(a), int(b)] for a, b in zip(*np.nonzero(np.tril(empty)))],
    }
    return SbmFit(tau, pi, alpha, j, n_layers, diag, trace)


def one_hot(z: np.ndarray, k: int) -> np.ndarray:
    tau = np.zeros((len(z), k))
    tau[np.arange(len(z)), np.asarray(z, dtype=int)] = 1.0
    return tau


def kmeans_rows_init(asum: np.ndarray, k: int, seed: int) -> np.ndarray | None:
    """One-hot responsibilities from k-means on adjacency rows, or ``None``
    when the rows do not have ``k`` distinct values."""
    try:
        z = kmeans(asum, k, KMeansSettings(n_restarts=5, seed=seed))
    except EmptyClusterError:
        return None
    return one_hot(z, k)


def random_tau(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(k), size=n)


def fit_sbm(adjs, cfg: FitConfig | None = None, init=None, rows_init: bool | None = None) -> SbmFit:
    """Fit one SBM to all given layers; best bound over restarts wins.

    Restarts start, in order, from ``init`` (an ``SbmFit``, a responsibility
    matrix, or a list of either) when given; from k-means on the rows of the
    summed adjacency matrix (always when ``init`` is absent, otherwise only if
    ``rows_init`` is true); and from Dirichlet(1) responsibilities for the
    rest, ``cfg.n_restarts`` random-or-not starts beyond the supplied ones.
    """
    cfg = cfg or FitConfig()
    asum, n_layers = pool_layers(adjs)
    n, k = asum.shape[0], cfg.k
    if k > n:
        raise ValueError(f"k={k} exceeds the number of nodes {n}")
    if k == 1:
        fit = _fit_one(np.ones((n, 1)), asum, n_layers, cfg, 0)
        fit.diagnostics["n_restarts"] = 1
        return fit
    starts = []
    if init is not None:
        inits = init if isinstance(init, (list, tuple)) else [init]
        for t0 in inits:
            t0 = t0.tau if isinstance(t0, SbmFit) else np.asarray(t0, dtype=float)
            if t0.shape != (n, k):
                raise ValueError(f"init responsibilities have shape {t0.shape}, expected {(n, k)}")
            starts.append(t0)
    if init is None or rows_init:
        t0 = kmeans_rows_init(asum, k, cfg.seed)
        if t0 is not None:
            starts.append(t0)
    n_random = max(cfg.n_restarts - len(starts), 0) if init is None else cfg.n_restarts - 1
    if not starts:
        n_random = max(n_random, 1)
    for r in range(1, n_random + 1):
        starts.append(random_tau(n, k, derive_rng(cfg.seed, "sbm", r)))
    best = None
    for r, t0 in enumerate(starts):
        fit = _fit_one(t0, asum, n_layers, cfg, r)
        if best is None or fit.bound > best.bound:
            best = fit
    best.diagnostics["n_restarts"] = len(starts)
    return best


def iterate_tau(adjs, pi, alpha, tau_init, tol: float = 1e-6, max_iter: int = 200) -> tuple[np.ndarray, int]:
    """Responsibilities for frozen ``(pi, alpha)``: repeat the (backtracked)
    sweep until the largest entry change drops below ``tol``."""
    asum, n_layers = pool_layers(adjs)
    tau = np.array(tau_init, dtype=float)
    if tau.shape[1] == 1:
        return np.ones_like(tau), 0
    pi = np.asarray(pi, float)
    alpha = np.asarray(alpha, float)
    j = _bound(tau, pi, alpha, asum, n_layers)
    it = 0
    for it in range(1, max_iter + 1):
        new, j, _ = _ascent_step(tau, pi, alpha, asum, n_layers, j)
        delta = float(np.abs(new - tau).max())
        tau = new
        if delta < tol:
            break
    return tau, it


def config_dict(cfg: FitConfig) -> dict:
    return asdict(cfg)

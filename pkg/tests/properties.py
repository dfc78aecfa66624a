"""Randomized invariants shared by the unit suite (few examples) and the
acceptance suite (1000 examples each)."""
import numpy as np
from hypothesis import given, settings, strategies as st

from smlsbm.clustering import KMeansSettings, kmeans_fit
from smlsbm.evaluation import nmi
from smlsbm.sbm import EPS, theta_from, update_alpha, update_pi, update_tau
from smlsbm.strata import StrataAssignment

seeds = st.integers(0, 2**32 - 1)


def strategies(*strats):
    # given() is applied per run, so one process can run a property at several sizes
    def deco(fn):
        fn.strategies = strats
        return fn
    return deco


def _stack(rng, n, n_layers):
    out = []
    for _ in range(n_layers):
        a = np.triu(rng.random((n, n)) < rng.uniform(0, 1), 1).astype(np.uint8)
        out.append(a | a.T)
    return out


def _random_pi(rng, k):
    pi = rng.random((k, k))
    return np.clip((pi + pi.T) / 2, EPS, 1 - EPS)


@strategies(seeds, st.integers(2, 20), st.integers(1, 5), st.integers(1, 3))
def tau_and_alpha_normalized(seed, n, k, n_layers):
    rng = np.random.default_rng(seed)
    adjs = _stack(rng, n, n_layers)
    tau = rng.dirichlet(np.ones(k), size=n)
    new = update_tau(tau, _random_pi(rng, k), rng.dirichlet(np.ones(k)), adjs)
    assert np.all(new >= 0)
    assert np.max(np.abs(new.sum(1) - 1)) <= 1e-9
    alpha = update_alpha(new)
    assert abs(alpha.sum() - 1) <= 1e-9 and np.all(alpha >= 0)


@strategies(seeds, st.integers(2, 20), st.integers(1, 5), st.integers(1, 3))
def pi_symmetric_and_clamped(seed, n, k, n_layers):
    rng = np.random.default_rng(seed)
    pi = update_pi(rng.dirichlet(np.ones(k), size=n), _stack(rng, n, n_layers))
    assert np.array_equal(pi, pi.T)
    assert pi.min() >= EPS and pi.max() <= 1 - EPS


@strategies(seeds, st.integers(2, 20), st.integers(1, 5))
def theta_label_invariant(seed, n, k):
    rng = np.random.default_rng(seed)
    tau = rng.dirichlet(np.ones(k), size=n)
    pi = _random_pi(rng, k)
    perm = rng.permutation(k)
    assert np.array_equal(theta_from(tau, pi), theta_from(tau[:, perm], pi[np.ix_(perm, perm)]))


@strategies(st.lists(st.integers(0, 5), min_size=1, max_size=60), seeds)
def nmi_symmetric_bounded_relabel_invariant(a, seed):
    rng = np.random.default_rng(seed)
    b = rng.integers(0, rng.integers(1, 6), len(a))
    v = nmi(a, b)
    assert 0.0 <= v <= 1.0
    assert abs(v - nmi(b, a)) <= 1e-12
    relabel = rng.permutation(10)
    assert abs(v - nmi(relabel[np.asarray(a)], b)) <= 1e-12
    if len(set(a)) > 1:
        assert abs(nmi(a, a) - 1.0) <= 1e-12


@strategies(seeds, st.integers(2, 5), st.integers(5, 40), st.integers(1, 4))
def kmeans_objective_non_increasing(seed, k, n, dim):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, dim))
    res = kmeans_fit(pts, min(k, n), KMeansSettings(n_restarts=1, seed=seed))
    tr = np.asarray(res.objective_trace)
    assert np.all(np.diff(tr) <= 1e-9 * (1 + tr[0]))


@strategies(st.lists(st.integers(0, 8), min_size=1, max_size=80))
def strata_assignment_partitions_layers(y):
    a = StrataAssignment(y)
    flat = sorted(i for m in a.members for i in m)
    assert flat == list(range(len(y)))
    assert (a.indicator().sum(1) == 1).all()
    assert set(a.y.tolist()) == set(range(a.n_strata))
    for m in a.members:
        assert len({y[i] for i in m}) == 1


ALL = {
    "tau rows and alpha sum to one": tau_and_alpha_normalized,
    "pi symmetric and clamped": pi_symmetric_and_clamped,
    "theta invariant to label permutation": theta_label_invariant,
    "nmi symmetric, bounded, relabel invariant": nmi_symmetric_bounded_relabel_invariant,
    "kmeans objective non-increasing": kmeans_objective_non_increasing,
    "strata assignment is a partition": strata_assignment_partitions_layers,
}


def run(prop, max_examples):
    test = given(*prop.strategies)(prop)
    settings(max_examples=max_examples, deadline=None, database=None)(test)()

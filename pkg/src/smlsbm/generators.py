"""Seeded samplers for planted-partition SBM layers and stratified multiplex
networks.

All randomness comes from Philox streams keyed by ``(seed, purpose, index)``
(see ``_rng``), and each layer draws its pairs in row-major ``i < j`` order,
so a given spec and seed always produce the same network.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._rng import derive_rng
from .network import MultilayerNetwork


class InfeasibleParameters(ValueError):
    pass


@dataclass(frozen=True)
class PlantedParams:
    n: int
    k: int
    p_in: float
    p_out: float
    community_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        for name in ("p_in", "p_out"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InfeasibleParameters(f"{name}={v} outside [0, 1]")
        if self.community_sizes is not None:
            if len(self.community_sizes) != self.k or sum(self.community_sizes) != self.n:
                raise ValueError("community_sizes must have k entries summing to n")

    @property
    def pi(self) -> np.ndarray:
        return planted_pi(self.k, self.p_in, self.p_out)

    def sizes(self) -> list[int]:
        if self.community_sizes is not None:
            return list(self.community_sizes)
        base, extra = divmod(self.n, self.k)
        return [base + (m < extra) for m in range(self.k)]


def planted_pi(k: int, p_in: float, p_out: float) -> np.ndarray:
    pi = np.full((k, k), float(p_out))
    np.fill_diagonal(pi, p_in)
    return pi


def derive_p_out(c: float, n: int, k: int, p_in: float) -> float:
    """Between-community probability giving expected mean degree ``c``:
    ``c = n (p_in + (k - 1) p_out) / k``."""
    if k < 2:
        raise InfeasibleParameters("p_out is undefined for k < 2")
    p_out = (c * k / n - p_in) / (k - 1)
    if not -1e-12 <= p_out <= 1 + 1e-12:
        raise InfeasibleParameters(
            f"p_in={p_in} with c={c}, n={n}, k={k} implies p_out={p_out:.6g} outside [0, 1]"
        )
    return float(min(max(p_out, 0.0), 1.0))


def derive_p_in(c: float, n: int, k: int, p_out: float) -> float:
    p_in = c * k / n - (k - 1) * p_out
    if not -1e-12 <= p_in <= 1 + 1e-12:
        raise InfeasibleParameters(
            f"p_out={p_out} with c={c}, n={n}, k={k} implies p_in={p_in:.6g} outside [0, 1]"
        )
    return float(min(max(p_in, 0.0), 1.0))


def params_from_gap(c: float, n: int, k: int, gap: float) -> tuple[float, float]:
    """``(p_in, p_out)`` with ``n (p_in - p_out) = gap`` at mean degree ``c``."""
    p_out = (c * k / n - gap / n) / k
    p_in = p_out + gap / n
    for name, v in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= v <= 1.0:
            raise InfeasibleParameters(f"gap={gap} with c={c} gives {name}={v:.6g}")
    return p_in, p_out


def detectability_gap(params: PlantedParams) -> float:
    return params.n * (params.p_in - params.p_out)


def expected_mean_degree(params: PlantedParams) -> float:
    return params.n * (params.p_in + (params.k - 1) * params.p_out) / params.k


def sample_sbm(pi, z, seed: int | np.random.Generator = 0) -> np.ndarray:
    """Symmetric zero-diagonal layer with ``A_ij ~ Bernoulli(pi[z_i, z_j])``."""
    pi = np.asarray(pi, dtype=float)
    z = np.asarray(z, dtype=int)
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed, "layer")
    n = len(z)
    iu, ju = np.triu_indices(n, k=1)
    draws = rng.random(iu.size) < pi[z[iu], z[ju]]
    a = np.zeros((n, n), dtype=np.uint8)
    a[iu[draws], ju[draws]] = 1
    return a | a.T


def planted_assignment(params: PlantedParams, rng: np.random.Generator | None = None) -> np.ndarray:
    """Balanced blocks (or ``community_sizes``) under a random node
    permutation; contiguous blocks when ``rng`` is ``None``."""
    z = np.repeat(np.arange(params.k), params.sizes())
    if rng is not None:
        z = z[rng.permutation(params.n)]
    return z


@dataclass
class StratumSpec:
    n_layers: int
    params: PlantedParams | None = None
    pi: np.ndarray | None = None
    z: np.ndarray | None = None

    def __post_init__(self):
        if self.params is None and self.pi is None:
            raise ValueError("a stratum needs planted params or an explicit pi")
        if self.n_layers < 1:
            raise ValueError("a stratum needs at least one layer")

    @property
    def block_pi(self) -> np.ndarray:
        return np.asarray(self.pi, float) if self.pi is not None else self.params.pi


@dataclass
class SmlsbmSpec:
    strata: list[StratumSpec]
    n: int
    seed: int = 0
    shared_assignment: bool = False

    @property
    def n_layers(self) -> int:
        return sum(s.n_layers for s in self.strata)


@dataclass
class GroundTruth:
    y: np.ndarray
    z: list[np.ndarray]
    pi: list[np.ndarray]
    layer_params: list[tuple[float, float] | None] = field(default_factory=list)

    def layer_z(self, l: int) -> np.ndarray:
        return self.z[self.y[l]]

    def layer_pi(self, l: int) -> np.ndarray:
        return self.pi[self.y[l]]

    def to_dict(self) -> dict:
        return {
            "y": self.y.tolist(),
            "z": [z.tolist() for z in self.z],
            "pi": [p.tolist() for p in self.pi],
        }


def _stratum_z(spec: SmlsbmSpec, s: int, st: StratumSpec) -> np.ndarray:
    if st.z is not None:
        z = np.asarray(st.z, dtype=int)
        if len(z) != spec.n:
            raise ValueError(f"stratum {s} assignment has length {len(z)}, expected {spec.n}")
        return z
    params = st.params
    if params is None:
        raise ValueError(f"stratum {s} has an explicit pi but no assignment")
    key = 0 if spec.shared_assignment else s
    return planted_assignment(params, derive_rng(spec.seed, "assignment", key))


def sample_smlsbm(spec: SmlsbmSpec) -> tuple[MultilayerNetwork, GroundTruth]:
    """Sample ``L^s`` independent layers from each stratum's SBM; layers are
    ordered stratum by stratum."""
    z_list, pi_list, y, stack = [], [], [], []
    l = 0
    for s, st in enumerate(spec.strata):
        if st.params is not None and st.params.n != spec.n:
            raise ValueError("all strata must share n")
        z = _stratum_z(spec, s, st)
        pi = st.block_pi
        if pi.shape[0] <= z.max():
            raise ValueError(f"stratum {s} assignment uses more communities than pi has")
        z_list.append(z)
        pi_list.append(pi)
        for _ in range(st.n_layers):
            stack.append(sample_sbm(pi, z, derive_rng(spec.seed, "layer", l)))
            y.append(s)
            l += 1
    net = MultilayerNetwork(np.stack(stack))
    params = [
        (st.params.p_in, st.params.p_out) if st.params is not None else None for st in spec.strata
    ]
    return net, GroundTruth(np.asarray(y), z_list, pi_list, params)


# -- experiment presets -------------------------------------------------------

FIG3_STRATA = ((0.6, 0.0083), (0.4, 0.075), (0.125, 0.167))


def fig3_spec(seed: int = 0, n: int = 128, k: int = 4, layers_per_stratum: int = 10,
              strata: Sequence[tuple[float, float]] = FIG3_STRATA) -> SmlsbmSpec:
    """Three planted strata at mean degree 20 with independent assignments."""
    return SmlsbmSpec(
        [StratumSpec(layers_per_stratum, PlantedParams(n, k, p_in, p_out)) for p_in, p_out in strata],
        n=n,
        seed=seed,
    )


def fig4_spec(gap2: float, n_layers: int, seed: int = 0, n: int = 128, k: int = 4,
              c: float = 16.0, gap1: float = 10.0) -> SmlsbmSpec:
    """Two equal strata sharing one assignment; stratum 1 at gap ``gap1``,
    stratum 2 at ``gap2``, both at mean degree ``c``."""
    if n_layers % 2:
        raise ValueError("n_layers must be even")
    strata = []
    for g in (gap1, gap2):
        p_in, p_out = params_from_gap(c, n, k, g)
        strata.append(StratumSpec(n_layers // 2, PlantedParams(n, k, p_in, p_out)))
    return SmlsbmSpec(strata, n=n, seed=seed, shared_assignment=True)

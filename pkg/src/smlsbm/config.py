"""Experiment configuration files.

Configs are INI-style text read with :mod:`configparser`::

    [experiment]
    kind = fig4            ; fig3 | fig4 | generate | microbiome
    seed = 0
    replicates = 10
    out_dir = results/fig4

    [generator]
    n = 128
    k = 4
    c = 16
    strata = 0.6:0.0083, 0.4:0.075   ; p_in:p_out, or bare p_in (p_out from c)
    layers_per_stratum = 10
    shared_assignment = false
    gap1 = 10                        ; fig4 only
    gaps = 2, 4, 6, 8, 10, 12, 14, 16, 18
    layers = 10, 100

    [inference]
    s = 2                            ; or "auto" for the gap statistic
    k = 4
    max_outer_iters = 50
    n_restarts = 5
    tol = 1e-6
    max_inner_iters = 200
    kmeans_restarts = 10
    refit_max_iter = 1

    [microbiome]
    threshold = 0.2
    min_layers = 2

Every key is optional; missing keys take the defaults below. The names
``fig3``, ``fig4-L10``, ``fig4-L100``, ``fig4`` and ``microbiome`` resolve to
built-in presets.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .clustering import KMeansSettings
from .generators import (
    PlantedParams,
    SmlsbmSpec,
    StratumSpec,
    derive_p_out,
    fig4_spec,
)
from .sbm import FitConfig
from .strata import StrataConfig

KINDS = ("fig3", "fig4", "generate", "microbiome")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str = "fig3"
    seed: int = 0
    replicates: int = 10
    out_dir: str = "results"
    n: int = 128
    k: int = 4
    c: float = 20.0
    strata: list[tuple[float, float | None]] = field(
        default_factory=lambda: [(0.6, 0.0083), (0.4, 0.075), (0.125, 0.167)]
    )
    layers_per_stratum: int = 10
    shared_assignment: bool = False
    gap1: float = 10.0
    gaps: list[float] = field(default_factory=lambda: [2, 4, 6, 8, 10, 12, 14, 16, 18])
    layer_counts: list[int] = field(default_factory=lambda: [10, 100])
    s: int | None = 3
    k_infer: int = 4
    max_outer_iters: int = 50
    n_restarts: int = 5
    tol: float = 1e-6
    max_inner_iters: int = 200
    kmeans_restarts: int = 10
    refit_max_iter: int = 1
    threshold: float = 0.2
    min_layers: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.gaps or not self.layer_counts:
            raise ConfigError("sweep grids must be nonempty")
        if any(L % 2 for L in self.layer_counts):
            raise ConfigError("two-strata sweeps need an even layer count")
        if self.s is not None and self.s < 1:
            raise ConfigError("s must be >= 1")
        if not self.strata:
            raise ConfigError("at least one stratum is required")

    def fit_config(self, seed: int = 0) -> FitConfig:
        return FitConfig(self.k_infer, self.max_inner_iters, self.tol, self.n_restarts, seed=seed)

    def strata_config(self, seed: int, s: int | None = ..., jobs: int = 1) -> StrataConfig:
        return StrataConfig(
            s_init=self.s if s is ... else s,
            k_per_stratum=self.k_infer,
            max_outer_iters=self.max_outer_iters,
            fit=self.fit_config(seed),
            kmeans=KMeansSettings(n_restarts=self.kmeans_restarts, seed=seed),
            refit_max_iter=self.refit_max_iter,
            seed=seed,
            jobs=jobs,
        )

    def planted(self) -> list[PlantedParams]:
        out = []
        for p_in, p_out in self.strata:
            if p_out is None:
                p_out = derive_p_out(self.c, self.n, self.k, p_in)
            out.append(PlantedParams(self.n, self.k, p_in, p_out))
        return out

    def generator_spec(self, seed: int) -> SmlsbmSpec:
        return SmlsbmSpec(
            [StratumSpec(self.layers_per_stratum, p) for p in self.planted()],
            n=self.n,
            seed=seed,
            shared_assignment=self.shared_assignment,
        )

    def fig4_spec(self, gap: float, n_layers: int, seed: int) -> SmlsbmSpec:
        return fig4_spec(gap, n_layers, seed=seed, n=self.n, k=self.k, c=self.c, gap1=self.gap1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strata"] = [list(x) for x in self.strata]
        return d

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_FIG4 = dict(kind="fig4", c=16.0, s=2, replicates=10, gap1=10.0)

PRESETS: dict[str, dict] = {
    "fig3": dict(kind="fig3", c=20.0, s=3, replicates=10, out_dir="results/fig3"),
    "fig4": dict(_FIG4, layer_counts=[10, 100], out_dir="results/fig4"),
    "fig4-L10": dict(_FIG4, layer_counts=[10], out_dir="results/fig4-L10"),
    "fig4-L100": dict(_FIG4, layer_counts=[100], out_dir="results/fig4-L100"),
    "microbiome": dict(kind="microbiome", s=6, k_infer=4, threshold=0.2, min_layers=2,
                       out_dir="results/microbiome"),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return ExperimentConfig(**PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _strata(text: str) -> list[tuple[float, float | None]]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            a, b = item.split(":", 1)
            out.append((float(a), float(b)))
        else:
            out.append((float(item), None))
    return out


_SCHEMA = {
    "experiment": {"kind": str, "seed": int, "replicates": int, "out_dir": str},
    "generator": {
        "n": int, "k": int, "c": float, "strata": _strata, "layers_per_stratum": int,
        "shared_assignment": "bool", "gap1": float, "gaps": _floats,
        "layers": lambda t: [int(x) for x in _floats(t)],
    },
    "inference": {
        "s": lambda t: None if t.strip().lower() in ("auto", "gap", "") else int(t),
        "k": int, "max_outer_iters": int, "n_restarts": int, "tol": float,
        "max_inner_iters": int, "kmeans_restarts": int, "refit_max_iter": int,
    },
    "microbiome": {"threshold": float, "min_layers": int},
}

_RENAME = {("generator", "layers"): "layer_counts", ("inference", "k"): "k_infer"}


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values = {}
    if parser.has_option("experiment", "preset"):
        base = preset(parser.get("experiment", "preset"))
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if section == "experiment" and key == "preset":
                continue
            conv = _SCHEMA[section].get(key)
            if conv is None:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                val = parser.getboolean(section, key) if conv == "bool" else conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
            values[_RENAME.get((section, key), key)] = val
    if base is None and values.get("kind") in PRESETS:
        base = preset(values["kind"])
    base = base or ExperimentConfig()
    return replace(base, **values)


def load_config(ref: str | Path) -> ExperimentConfig:
    """Preset name or path to a config file."""
    ref = str(ref)
    if ref in PRESETS:
        return preset(ref)
    path = Path(ref)
    if not path.exists():
        raise FileNotFoundError(f"config {ref!r} is neither a preset nor an existing file")
    return parse_config(path.read_text())

"""Replicated synthetic experiments and their CSV output.

Each replicate's seed is derived from the experiment name, its grid point and
its replicate index, so any subset of a sweep reruns to the same numbers.
Replicates run in a process pool but rows are written in grid order, which
keeps the CSV byte-identical for every worker count.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import derive_seed
from .config import ExperimentConfig
from .evaluation import (
    baseline_kmeans_adjacency,
    baseline_single_layer_sbm,
    baseline_single_sbm,
    nmi,
    pi_error,
)
from .generators import GroundTruth, sample_smlsbm
from .network import MultilayerNetwork
from .sbm import SbmFit
from .strata import fit_smlsbm

logger = logging.getLogger(__name__)

CSV_VERSION = 1
COLUMNS = ("experiment", "n_layers", "gap", "replicate", "seed", "model", "metric", "value", "status")
AGG_COLUMNS = ("experiment", "n_layers", "gap", "model", "metric", "n", "mean", "se")


@dataclass(frozen=True)
class Task:
    experiment: str
    n_layers: int
    gap: float | None
    replicate: int
    seed: int


@dataclass(frozen=True)
class Row:
    experiment: str
    n_layers: int
    gap: float | None
    replicate: int
    seed: int
    model: str
    metric: str
    value: float
    status: str = "ok"


def _fmt_gap(gap) -> str:
    return "" if gap is None else f"{gap:g}"


def replicate_seed(base: int, experiment: str, n_layers: int, gap, replicate: int) -> int:
    return derive_seed(base, experiment, n_layers, _fmt_gap(gap), replicate)


def _community_nmi(fits_for_layer, truth: GroundTruth) -> dict[int, float]:
    """Mean community NMI over the layers of each planted stratum."""
    out = {}
    for s in range(len(truth.z)):
        layers = np.flatnonzero(truth.y == s)
        out[s] = float(np.mean([nmi(truth.z[s], fits_for_layer(l).hard_partition()) for l in layers]))
    return out


def _pi_errors(fits_for_layer, truth: GroundTruth) -> dict[int, float]:
    out = {}
    for s in range(len(truth.z)):
        errs = []
        for l in np.flatnonzero(truth.y == s):
            f: SbmFit = fits_for_layer(l)
            errs.append(pi_error(truth.pi[s], f.pi, truth.z[s], f.hard_partition()))
        out[s] = float(np.mean(errs))
    return out


def _model_metrics(name: str, fits_for_layer, truth: GroundTruth, with_pi: bool):
    rows = []
    cn = _community_nmi(fits_for_layer, truth)
    for s, v in cn.items():
        rows.append((name, f"community_nmi_s{s + 1}", v))
    if with_pi:
        pe = _pi_errors(fits_for_layer, truth)
        for s, v in pe.items():
            rows.append((name, f"pi_error_s{s + 1}", v))
        sizes = np.bincount(truth.y)
        rows.append((name, "pi_error", float(np.dot(sizes, [pe[s] for s in range(len(sizes))]) / sizes.sum())))
    return rows


def _smlsbm_metrics(net: MultilayerNetwork, truth: GroundTruth, cfg: ExperimentConfig, seed: int,
                    with_pi: bool):
    model = fit_smlsbm(net, cfg.strata_config(seed))
    rows = [
        ("smlsbm", "strata_nmi", nmi(truth.y, model.y)),
        ("smlsbm", "noi", float(model.iterations)),
        ("smlsbm", "n_strata", float(model.n_strata)),
        ("smlsbm", "converged", float(model.converged)),
    ]
    rows += _model_metrics("smlsbm", model.layer_fit, truth, with_pi)
    return rows


def run_fig3_replicate(cfg: ExperimentConfig, seed: int) -> list[tuple[str, str, float]]:
    """Three-strata benchmark: the strata model against one pooled SBM and per-layer SBMs."""
    net, truth = sample_smlsbm(cfg.generator_spec(seed))
    rows = _smlsbm_metrics(net, truth, cfg, seed, with_pi=True)
    fit_cfg = cfg.fit_config(seed)
    single = baseline_single_sbm(net, cfg.k_infer, fit_cfg)
    rows += _model_metrics("single_sbm", lambda l: single, truth, with_pi=True)
    per_layer = baseline_single_layer_sbm(net, cfg.k_infer, fit_cfg)
    rows += _model_metrics("single_layer_sbm", lambda l: per_layer[l], truth, with_pi=True)
    return rows


def run_fig4_replicate(cfg: ExperimentConfig, gap: float, n_layers: int, seed: int):
    """Two strata sharing one community assignment; the second stratum's
    detectability gap is swept."""
    net, truth = sample_smlsbm(cfg.fig4_spec(gap, n_layers, seed))
    rows = _smlsbm_metrics(net, truth, cfg, seed, with_pi=False)
    s = cfg.s or 2
    km = baseline_kmeans_adjacency(net, s, cfg.strata_config(seed).kmeans_settings("baseline"))
    rows.append(("kmeans_adjacency", "strata_nmi", nmi(truth.y, km.y)))
    return rows


def tasks_for(cfg: ExperimentConfig) -> list[Task]:
    out = []
    if cfg.kind == "fig3":
        L = cfg.layers_per_stratum * len(cfg.strata)
        for r in range(cfg.replicates):
            out.append(Task("fig3", L, None, r, replicate_seed(cfg.seed, "fig3", L, None, r)))
    elif cfg.kind == "fig4":
        for L in cfg.layer_counts:
            for gap in cfg.gaps:
                for r in range(cfg.replicates):
                    out.append(Task("fig4", L, gap, r, replicate_seed(cfg.seed, "fig4", L, gap, r)))
    else:
        raise ValueError(f"experiment kind {cfg.kind!r} has no sweep")
    return out


def run_task(args) -> list[Row]:
    cfg, task = args
    try:
        if task.experiment == "fig3":
            raw = run_fig3_replicate(cfg, task.seed)
        else:
            raw = run_fig4_replicate(cfg, task.gap, task.n_layers, task.seed)
    except Exception as exc:  # a failed replicate must not abort the sweep
        logger.warning("replicate %s failed: %s", task, exc)
        logger.debug("%s", traceback.format_exc())
        msg = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
        return [Row(task.experiment, task.n_layers, task.gap, task.replicate, task.seed,
                    "", "", math.nan, msg)]
    return [Row(task.experiment, task.n_layers, task.gap, task.replicate, task.seed, m, k, float(v))
            for m, k, v in raw]


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, tasks: list[Task] | None = None) -> list[Row]:
    tasks = tasks_for(cfg) if tasks is None else tasks
    args = [(cfg, t) for t in tasks]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(run_task, args))
    else:
        chunks = [run_task(a) for a in args]
    return [row for chunk in chunks for row in chunk]


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def header_lines(cfg: ExperimentConfig) -> list[str]:
    return [f"# smlsbm-results v{CSV_VERSION} config_hash={cfg.hash()} seed={cfg.seed} kind={cfg.kind}"]


def rows_to_csv(rows: list[Row], cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    for line in header_lines(cfg):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([r.experiment, r.n_layers, _fmt_gap(r.gap), r.replicate, r.seed, r.model,
                    r.metric, _fmt(r.value), r.status])
    return buf.getvalue()


def aggregate(rows: list[Row]) -> list[tuple]:
    """Mean and standard error per (experiment, L, gap, model, metric),
    over successful replicates, in first-seen order."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        if r.status != "ok":
            continue
        groups.setdefault((r.experiment, r.n_layers, r.gap, r.model, r.metric), []).append(r.value)
    out = []
    for key, vals in groups.items():
        v = np.asarray(vals, float)
        se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else math.nan
        out.append((*key, len(v), float(v.mean()), se))
    return out


def aggregate_to_csv(rows: list[Row], cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    for line in header_lines(cfg):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGG_COLUMNS)
    for exp, L, gap, model, metric, n, mean, se in aggregate(rows):
        w.writerow([exp, L, _fmt_gap(gap), model, metric, n, _fmt(mean), _fmt(se)])
    return buf.getvalue()


def read_rows(path: str | Path) -> list[Row]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for d in reader:
            rows.append(Row(d["experiment"], int(d["n_layers"]),
                            float(d["gap"]) if d["gap"] else None, int(d["replicate"]),
                            int(d["seed"]), d["model"], d["metric"], float(d["value"]), d["status"]))
    return rows


def write_results(rows: list[Row], cfg: ExperimentConfig, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw, agg = out / f"{cfg.kind}_results.csv", out / f"{cfg.kind}_aggregate.csv"
    raw.write_text(rows_to_csv(rows, cfg))
    agg.write_text(aggregate_to_csv(rows, cfg))
    return raw, agg

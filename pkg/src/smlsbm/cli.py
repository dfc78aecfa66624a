"""``smlsbm`` command-line driver.

Exit codes: 0 success, 1 usage or invalid parameters, 2 input/output
problems, 3 numerical failure during inference.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import derive_rng
from .config import ConfigError, ExperimentConfig, load_config
from .evaluation import baseline_single_layer_sbm, baseline_single_sbm, layer_dendrogram
from .experiments import run_experiment, write_results
from .generators import InfeasibleParameters, sample_sbm, sample_smlsbm
from .network import (
    DegenerateNetworkError,
    EdgeListError,
    EmptyNetworkWarning,
    WeightedEdgeList,
    filter_nodes_by_layer_count,
    load_network,
    parse_edge_list,
    threshold_to_multilayer,
    write_edge_list,
)
from .sbm import NumericalFailure
from .strata import fit_smlsbm

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("smlsbm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _s_arg(text: str) -> int | None:
    if text.lower() in ("auto", "gap"):
        return None
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("s must be >= 1")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _config(args, default: str | None) -> ExperimentConfig:
    ref = args.config or default
    cfg = load_config(ref) if ref else ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "s", ...) is not ...:
        over["s"] = args.s
    if getattr(args, "k", None) is not None:
        over["k_infer"] = args.k
    if getattr(args, "threshold", None) is not None:
        over["threshold"] = args.threshold
    if getattr(args, "min_layers", None) is not None:
        over["min_layers"] = args.min_layers
    if getattr(args, "replicates", None) is not None:
        over["replicates"] = args.replicates
    return replace(cfg, **over)


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(cfg: ExperimentConfig, **extra) -> dict:
    return {"version": __version__, "config_hash": cfg.hash(), "seed": cfg.seed, **extra}


def _dump(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def cmd_generate(args) -> int:
    cfg = _config(args, "fig3")
    if cfg.kind == "fig4":
        spec = cfg.fig4_spec(cfg.gaps[0], cfg.layer_counts[0], cfg.seed)
    else:
        spec = cfg.generator_spec(cfg.seed)
    net, truth = sample_smlsbm(spec)
    out = _out_dir(args, cfg)
    _dump(out / "network.json", {"meta": _meta(cfg), **net.to_dict()})
    write_edge_list(net, out / "network.csv")
    _dump(out / "ground_truth.json", {"meta": _meta(cfg), **truth.to_dict()})
    deg = net.mean_degrees()
    print(f"N={net.n_nodes} L={net.n_layers} S={len(spec.strata)}")
    for l, d in enumerate(deg):
        print(f"  layer {l:3d} stratum {truth.y[l] + 1} mean degree {d:.2f}")
    print(f"wrote {out}/network.json, network.csv, ground_truth.json")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args, None)
    net = load_network(args.network)
    out = _out_dir(args, cfg)
    meta = _meta(cfg, model=args.model, network=str(args.network))
    if args.model == "smlsbm":
        model = fit_smlsbm(net, cfg.strata_config(cfg.seed, jobs=args.jobs))
        doc = {"meta": meta, **model.to_dict(net.layer_labels)}
        print(f"strata: {model.n_strata}  iterations: {model.iterations}  converged: {model.converged}")
        for s, (members, fit) in enumerate(zip(model.assignment.members, model.stratum_fits)):
            print(f"  stratum {s + 1}: {len(members)} layers, J = {fit.bound:.4f}")
    elif args.model == "single-sbm":
        fit = baseline_single_sbm(net, cfg.k_infer, cfg.fit_config(cfg.seed))
        doc = {"meta": meta, **fit.to_dict()}
        print(f"single SBM over {net.n_layers} layers: J = {fit.bound:.4f}")
    else:
        fits = baseline_single_layer_sbm(net, cfg.k_infer, cfg.fit_config(cfg.seed))
        doc = {"meta": meta, "layers": [f.to_dict() for f in fits]}
        print(f"{len(fits)} single-layer fits, total J = {sum(f.bound for f in fits):.4f}")
    path = out / "model.json"
    _dump(path, doc)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args, None if args.config else "fig3")
    if cfg.kind not in ("fig3", "fig4"):
        raise UsageError(f"config kind {cfg.kind!r} is not a sweep (expected fig3 or fig4)")
    rows = run_experiment(cfg, jobs=args.jobs)
    raw, agg = write_results(rows, cfg, _out_dir(args, cfg))
    failed = sum(r.status != "ok" for r in rows)
    print(f"{len(rows)} rows ({failed} failed replicates) -> {raw}, {agg}")
    return EXIT_OK


def cmd_microbiome(args) -> int:
    cfg = _config(args, "microbiome")
    records = []
    for path in args.edges:
        records.extend(parse_edge_list(path, "weighted").records)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EmptyNetworkWarning)
        net = threshold_to_multilayer(WeightedEdgeList(tuple(records)), cfg.threshold)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    net = filter_nodes_by_layer_count(net, cfg.min_layers)
    print(f"L={net.n_layers} layers, N={net.n_nodes} nodes after filtering")
    model = fit_smlsbm(net, cfg.strata_config(cfg.seed, jobs=args.jobs))
    out = _out_dir(args, cfg)
    meta = _meta(cfg, inputs=[str(p) for p in args.edges])
    _dump(out / "model.json", {"meta": meta, **model.to_dict(net.layer_labels)})
    with open(out / "strata.csv", "w") as fh:
        fh.write("layer,stratum\n")
        for label, s in zip(net.layer_labels, model.y):
            fh.write(f"{label},{s + 1}\n")
    _dump(out / "dendrogram.json", {"meta": meta, **layer_dendrogram(net).to_dict()})
    samples = {}
    for s, fit in enumerate(model.stratum_fits):
        a = sample_sbm(fit.pi, fit.hard_partition(), derive_rng(cfg.seed, "stratum-sample", s))
        samples[str(s + 1)] = np.argwhere(np.triu(a)).tolist()
    _dump(out / "stratum_samples.json",
          {"meta": meta, "node_labels": list(net.node_labels), "edges": samples})
    for s, members in enumerate(model.assignment.members):
        print(f"  stratum {s + 1}: " + ", ".join(net.layer_labels[l] for l in members))
    print(f"wrote model.json, strata.csv, dendrogram.json, stratum_samples.json to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="smlsbm", description="Strata multilayer stochastic block models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, jobs=True):
        sp.add_argument("--config", help="preset name or config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir")
        if jobs:
            sp.add_argument("--jobs", type=_positive, default=1)

    g = sub.add_parser("generate", help="sample a synthetic multilayer network")
    common(g, jobs=False)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit a model to a network file")
    f.add_argument("network")
    f.add_argument("--model", choices=("smlsbm", "single-sbm", "single-layer-sbm"), default="smlsbm")
    f.add_argument("--s", type=_s_arg, default=..., help="strata count or 'auto'")
    f.add_argument("--k", type=_positive)
    common(f)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("experiment", help="run a replicated benchmark sweep")
    e.add_argument("--replicates", type=_positive)
    common(e)
    e.set_defaults(func=cmd_experiment)

    m = sub.add_parser("microbiome", help="threshold weighted layers and fit strata")
    m.add_argument("edges", nargs="+", help="layer,node_i,node_j,weight edge lists")
    m.add_argument("--threshold", type=float)
    m.add_argument("--min-layers", type=_positive)
    m.add_argument("--s", type=_s_arg, default=...)
    m.add_argument("--k", type=_positive)
    common(m)
    m.set_defaults(func=cmd_microbiome)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, InfeasibleParameters) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, EdgeListError, DegenerateNetworkError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

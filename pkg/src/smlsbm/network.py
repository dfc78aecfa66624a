"""Multiplex network container and edge-list ingestion.

Layers are stored as a dense ``(L, N, N)`` uint8 stack. Node and layer
identities are string labels; integer indices follow sorted label order.
"""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class EdgeListError(ValueError):
    """Malformed or inconsistent edge-list input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateNetworkError(ValueError):
    pass


class EmptyNetworkWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EdgeRecord:
    layer: str
    i: str
    j: str
    weight: float = 1.0


@dataclass(frozen=True)
class WeightedEdgeList:
    records: tuple[EdgeRecord, ...]

    @property
    def node_labels(self) -> list[str]:
        return sorted({r.i for r in self.records} | {r.j for r in self.records})

    @property
    def layer_labels(self) -> list[str]:
        return sorted({r.layer for r in self.records})

    def __len__(self) -> int:
        return len(self.records)


def validate_adjacency(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {a.shape}")
    if not np.isin(a, (0, 1)).all():
        raise ValueError("adjacency must be binary")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(a) != 0):
        raise ValueError("adjacency must have a zero diagonal")


@dataclass(frozen=True, eq=False)
class MultilayerNetwork:
    """``L`` binary undirected layers over a shared set of ``N`` nodes."""

    layers: np.ndarray
    node_labels: tuple[str, ...] | None = None
    layer_labels: tuple[str, ...] | None = None
    _meta: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        stack = np.asarray(self.layers)
        if stack.ndim == 2:
            stack = stack[None]
        if stack.ndim != 3:
            raise ValueError("layers must be an (L, N, N) stack")
        stack = stack.astype(np.uint8)
        if stack.shape[0] < 1:
            raise ValueError("need at least one layer")
        if stack.shape[1] < 2:
            raise ValueError("need at least two nodes")
        for a in stack:
            validate_adjacency(a)
        stack.setflags(write=False)
        object.__setattr__(self, "layers", stack)
        for name, expected in (("node_labels", stack.shape[1]), ("layer_labels", stack.shape[0])):
            labels = getattr(self, name)
            if labels is None:
                continue
            labels = tuple(str(x) for x in labels)
            if len(labels) != expected:
                raise ValueError(f"{name} has length {len(labels)}, expected {expected}")
            if len(set(labels)) != len(labels):
                raise ValueError(f"{name} entries must be unique")
            object.__setattr__(self, name, labels)

    @property
    def n_nodes(self) -> int:
        return self.layers.shape[1]

    @property
    def n_layers(self) -> int:
        return self.layers.shape[0]

    def __len__(self) -> int:
        return self.n_layers

    def __getitem__(self, l: int) -> np.ndarray:
        return self.layers[l]

    def __eq__(self, other):
        if not isinstance(other, MultilayerNetwork):
            return NotImplemented
        return (
            np.array_equal(self.layers, other.layers)
            and self.node_labels == other.node_labels
            and self.layer_labels == other.layer_labels
        )

    __hash__ = None

    def degrees(self) -> np.ndarray:
        """``(L, N)`` per-layer node degrees."""
        return self.layers.sum(axis=2, dtype=np.int64)

    def mean_degrees(self) -> np.ndarray:
        return self.degrees().mean(axis=1)

    def edges(self, l: int) -> np.ndarray:
        """Sorted ``(E, 2)`` array of ``i < j`` index pairs for layer ``l``."""
        iu, ju = np.nonzero(np.triu(self.layers[l], k=1))
        return np.column_stack([iu, ju])

    def subnetwork(self, nodes: Sequence[int]) -> "MultilayerNetwork":
        nodes = np.asarray(nodes, dtype=int)
        labels = None
        if self.node_labels is not None:
            labels = tuple(self.node_labels[i] for i in nodes)
        return MultilayerNetwork(
            self.layers[:, nodes][:, :, nodes], node_labels=labels, layer_labels=self.layer_labels
        )

    def select_layers(self, idx: Sequence[int]) -> "MultilayerNetwork":
        idx = list(idx)
        labels = None
        if self.layer_labels is not None:
            labels = tuple(self.layer_labels[i] for i in idx)
        return MultilayerNetwork(self.layers[idx], node_labels=self.node_labels, layer_labels=labels)

    def _labels(self):
        nodes = self.node_labels or tuple(str(i) for i in range(self.n_nodes))
        layers = self.layer_labels or tuple(str(l) for l in range(self.n_layers))
        return nodes, layers

    def to_dict(self) -> dict:
        nodes, layers = self._labels()
        return {
            "n_nodes": self.n_nodes,
            "node_labels": list(nodes),
            "layer_labels": list(layers),
            "layers": {
                layers[l]: self.edges(l).tolist() for l in range(self.n_layers)
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MultilayerNetwork":
        n = int(doc["n_nodes"])
        layer_labels = list(doc["layer_labels"])
        stack = np.zeros((len(layer_labels), n, n), dtype=np.uint8)
        for l, name in enumerate(layer_labels):
            e = np.asarray(doc["layers"][name], dtype=int).reshape(-1, 2)
            stack[l, e[:, 0], e[:, 1]] = 1
            stack[l, e[:, 1], e[:, 0]] = 1
        return cls(stack, node_labels=doc.get("node_labels"), layer_labels=layer_labels)

    def to_edge_rows(self) -> list[tuple[str, str, str]]:
        nodes, layers = self._labels()
        rows = []
        for l in range(self.n_layers):
            for i, j in self.edges(l):
                rows.append((layers[l], nodes[i], nodes[j]))
        return rows


def save_network(net: MultilayerNetwork, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(net.to_dict(), fh, indent=1)


def load_network(path: str | Path) -> MultilayerNetwork:
    """Read a network from JSON or from a binary edge-list text file."""
    path = Path(path)
    if path.suffix == ".json":
        with open(path) as fh:
            return MultilayerNetwork.from_dict(json.load(fh))
    return threshold_to_multilayer(parse_edge_list(path, "binary"), 0.0)


def write_edge_list(net: MultilayerNetwork, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# layer,node_i,node_j\n")
        csv.writer(fh, lineterminator="\n").writerows(net.to_edge_rows())


def _split_row(line: str) -> list[str]:
    sep = "\t" if "\t" in line else ","
    return [c.strip() for c in line.split(sep)]


def parse_edge_list(path: str | Path, format: str = "weighted") -> WeightedEdgeList:
    """Parse ``layer,node_i,node_j[,weight]`` rows.

    Comma or tab separated; blank lines and ``#`` comments are skipped. Each
    undirected edge may appear once per layer; its reverse counts as a
    duplicate.
    """
    if format not in ("binary", "weighted"):
        raise ValueError(f"unknown format {format!r}")
    ncol = 3 if format == "binary" else 4
    records = []
    seen: dict[tuple[str, str, str], int] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cols = _split_row(line)
            if len(cols) != ncol:
                raise EdgeListError(f"expected {ncol} columns, got {len(cols)}", lineno)
            layer, i, j = cols[:3]
            if not (layer and i and j):
                raise EdgeListError("empty field", lineno)
            weight = 1.0
            if ncol == 4:
                try:
                    weight = float(cols[3])
                except ValueError:
                    raise EdgeListError(f"non-numeric weight {cols[3]!r}", lineno) from None
                if not np.isfinite(weight):
                    raise EdgeListError(f"non-finite weight {cols[3]!r}", lineno)
            if i == j:
                raise EdgeListError(f"self-loop on node {i!r}", lineno)
            key = (layer, *sorted((i, j)))
            if key in seen:
                raise EdgeListError(
                    f"duplicate edge {i}-{j} in layer {layer!r} (first seen on line {seen[key]})",
                    lineno,
                )
            seen[key] = lineno
            records.append(EdgeRecord(layer, i, j, weight))
    return WeightedEdgeList(tuple(records))


def threshold_to_multilayer(
    edges: WeightedEdgeList,
    threshold: float = 0.2,
    node_labels: Iterable[str] | None = None,
    layer_labels: Iterable[str] | None = None,
) -> MultilayerNetwork:
    """Keep edges with ``weight >= threshold`` (signed, so negatives never pass
    a nonnegative threshold).

    The node and layer universes come from all records, including those that
    fail the threshold, unless given explicitly.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    nodes = sorted(node_labels) if node_labels is not None else edges.node_labels
    layers = sorted(layer_labels) if layer_labels is not None else edges.layer_labels
    if len(nodes) < 2 or not layers:
        raise DegenerateNetworkError("edge list has fewer than two nodes or no layers")
    nidx = {v: k for k, v in enumerate(nodes)}
    lidx = {v: k for k, v in enumerate(layers)}
    stack = np.zeros((len(layers), len(nodes), len(nodes)), dtype=np.uint8)
    for r in edges.records:
        if r.weight >= threshold:
            l, i, j = lidx[r.layer], nidx[r.i], nidx[r.j]
            stack[l, i, j] = stack[l, j, i] = 1
    if not stack.any():
        warnings.warn(
            f"no edge reaches threshold {threshold}; every layer is empty",
            EmptyNetworkWarning,
            stacklevel=2,
        )
    return MultilayerNetwork(stack, node_labels=nodes, layer_labels=layers)


def filter_nodes_by_layer_count(net: MultilayerNetwork, min_layers: int = 2) -> MultilayerNetwork:
    """Keep nodes with nonzero degree in at least ``min_layers`` layers."""
    if min_layers < 1:
        raise ValueError("min_layers must be >= 1")
    occurs = (net.degrees() > 0).sum(axis=0)
    keep = np.flatnonzero(occurs >= min_layers)
    if keep.size < 2:
        raise DegenerateNetworkError(
            f"only {keep.size} node(s) occur in >= {min_layers} layers"
        )
    logger.info("node filter kept %d of %d nodes", keep.size, net.n_nodes)
    return net.subnetwork(keep)

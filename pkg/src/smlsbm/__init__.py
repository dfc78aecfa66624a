"""Strata multilayer stochastic block models.

Layers of a multiplex network are grouped into strata, each stratum being a
set of independent draws from one stochastic block model.
"""
from .clustering import KMeansSettings, gap_statistic, hierarchical_cluster, kmeans
from .evaluation import (
    baseline_kmeans_adjacency,
    baseline_single_layer_sbm,
    baseline_single_sbm,
    nmi,
    pi_error,
)
from .generators import PlantedParams, SmlsbmSpec, StratumSpec, sample_sbm, sample_smlsbm
from .network import (
    MultilayerNetwork,
    filter_nodes_by_layer_count,
    load_network,
    parse_edge_list,
    save_network,
    threshold_to_multilayer,
)
from .sbm import FitConfig, SbmFit, bound_J, fit_sbm, hard_partition, theta_from
from .strata import SmlsbmModel, StrataAssignment, StrataConfig, fit_smlsbm

__version__ = "0.1.0"

__all__ = [
    "FitConfig", "KMeansSettings", "MultilayerNetwork", "PlantedParams", "SbmFit",
    "SmlsbmModel", "SmlsbmSpec", "StrataAssignment", "StrataConfig", "StratumSpec",
    "baseline_kmeans_adjacency", "baseline_single_layer_sbm", "baseline_single_sbm",
    "bound_J", "filter_nodes_by_layer_count", "fit_sbm", "fit_smlsbm", "gap_statistic",
    "hard_partition", "hierarchical_cluster", "kmeans", "load_network", "nmi",
    "parse_edge_list", "pi_error", "sample_sbm", "sample_smlsbm", "save_network",
    "theta_from", "threshold_to_multilayer",
]

"""Doubly latent space joint modelling of binary item response data.

Typical use::

    from dlsjm import ItemResponseMatrix, SamplerConfig, fit_model, cluster_both

    x = ItemResponseMatrix(responses)
    result = cluster_both(fit_model(x, sampler=SamplerConfig(n_iterations=11000, burn_in=1000)))
"""
from .clustering import (ClusterAssignment, build_similarity, choose_k_neighbors, match_clusters,
                         spectral_cluster)
from .data import (DegenerateItemError, InvalidResponseError, ItemResponseMatrix, build_item_networks,
                   build_person_networks, degree_profile, load_matrix, read_csv, write_csv)
from .likelihood import (ModelState, NumericalError, PriorConfig, item_positions, joint_log_likelihood,
                         log_posterior)
from .mixture_rasch import EMConfig, MixtureRaschModel, classify_map, em_fit
from .pipeline import ClusterSettings, ConvergenceGuardError, FitResult, cluster_both, fit_model, fit_to_directory
from .postprocess import align_chain, hpd_interval, posterior_distances, procrustes_align
from .sampler import ChainOutput, SamplerConfig, run_chain
from .simgen import SimDataset, SimDesign, drv_design, simulate
from .study import run_study

__version__ = "0.1.0"

__all__ = [
    "ClusterAssignment", "build_similarity", "choose_k_neighbors", "match_clusters", "spectral_cluster",
    "DegenerateItemError", "InvalidResponseError", "ItemResponseMatrix", "build_item_networks",
    "build_person_networks", "degree_profile", "load_matrix", "read_csv", "write_csv",
    "ModelState", "NumericalError", "PriorConfig", "item_positions", "joint_log_likelihood", "log_posterior",
    "EMConfig", "MixtureRaschModel", "classify_map", "em_fit",
    "ClusterSettings", "ConvergenceGuardError", "FitResult", "cluster_both", "fit_model", "fit_to_directory",
    "align_chain", "hpd_interval", "posterior_distances", "procrustes_align",
    "ChainOutput", "SamplerConfig", "run_chain",
    "SimDataset", "SimDesign", "drv_design", "simulate",
    "run_study",
]

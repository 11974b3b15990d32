"""Geometry-aware noise for answering linear queries under differential privacy.

The package answers d non-adaptive linear queries over a histogram database
with noise shaped to the image of the unit l1 ball under the query matrix,
rather than coordinate-wise output perturbation. It ships the mechanisms, the
matching volume-based lower bounds, samplers and estimators for the convex
bodies involved, density-ratio audits, an optimal-error linear program for
tiny instances, and an experiment harness with a CLI front end.
"""

from .audit import (AuditConfig, AuditReport, greedy_packing, packing_error_check,
                    ratio_audit, transitivity_check)
from .body import (CERT_INSIDE, CERT_OUTSIDE, CERT_TIGHT, CERT_UNRESOLVED,
                   PolytopeHandle, membership, min_distance_batch, minkowski_norm)
from .bounds import (BoundReport, VolBound, bound_report_for, gvol_lb,
                     theory_curves, vol_lb)
from .estimates import (CovarianceSummary, VolumeEstimate, estimate_covariance,
                        estimate_volume_radius, project_query,
                        top_eigenspace_projection)
from .harness import (CSV_COLUMNS, ExperimentConfig, ResultRow, compare_to_theory,
                      load_config, parse_config, rows_to_csv, run_experiment)
from .lp import LP_VARIABLE_CAP, LpSolution, TinyInstance, lp_optimal_error, tiny_instance
from .mechanisms import (MECHANISM_NAMES, NimPlan, NoiseSample, build_nim_plan,
                         gaussian_mechanism, gaussian_many, k_norm_efficient,
                         k_norm_efficient_many, k_norm_many, k_norm_mechanism,
                         laplace_many, laplace_mechanism, nim_many, nim_mechanism,
                         run_mechanism)
from .query import (Database, NeighborPair, QueryMatrix, evaluate, hypercube_query,
                    load_database, load_matrix, random_bernoulli_query,
                    save_database, save_matrix, sensitivity)
from .rng import GammaParams, RngStream, as_generator, gamma_sample, laplace_sample
from .sampling import GridWalkConfig, grid_walk_batch, rejection_sample

__version__ = "0.1.0"

__all__ = [
    "AuditConfig", "AuditReport", "BoundReport", "CERT_INSIDE", "CERT_OUTSIDE",
    "CERT_TIGHT", "CERT_UNRESOLVED", "CSV_COLUMNS", "CovarianceSummary", "Database",
    "ExperimentConfig", "GammaParams", "GridWalkConfig", "LP_VARIABLE_CAP",
    "LpSolution", "MECHANISM_NAMES", "NeighborPair", "NimPlan", "NoiseSample",
    "PolytopeHandle", "QueryMatrix", "ResultRow", "RngStream", "TinyInstance",
    "VolBound", "VolumeEstimate", "as_generator", "bound_report_for",
    "build_nim_plan", "compare_to_theory", "estimate_covariance",
    "estimate_volume_radius", "evaluate", "gamma_sample", "gaussian_mechanism",
    "gaussian_many", "greedy_packing", "grid_walk_batch", "gvol_lb",
    "hypercube_query", "k_norm_efficient", "k_norm_efficient_many", "k_norm_many",
    "k_norm_mechanism", "laplace_many", "laplace_mechanism", "laplace_sample",
    "load_config", "load_database", "load_matrix", "lp_optimal_error",
    "membership", "min_distance_batch", "minkowski_norm", "nim_many", "nim_mechanism",
    "packing_error_check", "parse_config", "project_query", "random_bernoulli_query",
    "ratio_audit", "rejection_sample", "rows_to_csv", "run_experiment",
    "run_mechanism", "save_database", "save_matrix", "sensitivity",
    "theory_curves", "tiny_instance", "top_eigenspace_projection",
    "transitivity_check", "vol_lb",
]

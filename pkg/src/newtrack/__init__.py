"""Decentralized consensus optimization toolkit.

Implements a curvature-tracked second-order method in three equivalent
formulations, first-order baselines (gradient tracking, extra, dlm),
synthetic network topologies with Metropolis mixing, logistic and
quadratic objective families, a numerical linear-rate certificate, and
an experiment harness with CLI entry points.
"""

from .algorithms import (DirectionTrackingState, FirstOrderState,
                         NewtonTrackingState, PrimalDualState,
                         centralized_reference, comm_cost,
                         conservation_residual, dlm_init, dlm_step,
                         extra_init, extra_step, gt_init, gt_step, nt_init,
                         nt_step, pd_init, pd_step, sq_direction, sq_init,
                         sq_step)
from .analysis import (BoundReport, RateCertificate, RateFit,
                       approximation_error, best_certificate,
                       consensus_penalty_matrix, contraction_check,
                       decay_window, dual_optimum, fit_linear_rate,
                       g_norm_error, kkt_residual, lemma_remainder_check,
                       rate_certificate, stationarity_identity_check)
from .harness import (AlgorithmSpec, ConvergenceTrace, DataSpec, RunConfig,
                      RunRecord, TopologySpec, export_csv, load_record,
                      preset, run_checks, run_experiment, save_record,
                      topology_sweep, write_outputs)
from .objectives import (DerivativeReport, LogisticDataset, LogisticFamily,
                         LogisticObjective, ObjectiveBounds, QuadraticFamily,
                         QuadraticObjective, convexity_bounds,
                         derivative_check, generate_logistic_data,
                         generate_quadratic_set, make_logistic,
                         make_quadratic)
from .topology import (Graph, MixingMatrix, SpectralStats, build_topology,
                       laplacian, metropolis_weights, spectral_stats,
                       topology_from_doc, topology_to_doc)

__version__ = "0.1.0"

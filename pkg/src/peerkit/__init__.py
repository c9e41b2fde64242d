"""Deterministic, seedable simulation of top-k peer selection.

The package covers the full loop: noisy ranking generation (Mallows),
cluster construction and balanced review assignment, three selection
mechanisms (vanilla score sum, partition, exact dollar partition) in
single- and two-stage variants, outcome metrics, an analytic model of the
value of extra reviews, and a reproducible experiment harness with a CLI.
"""

from .assign import Assignment, Clustering, assign_reviews, make_clusters
from .errors import InfeasibilityError, InvalidInputError, PeerKitError
from .harness import (
    Cell,
    ExperimentConfig,
    ResultRow,
    config_cells,
    emit_gain_data,
    load_config,
    run_cell,
    run_sweep,
    write_rows_csv,
)
from .mechanisms import (
    SelectionResult,
    cluster_shares,
    edp_select,
    grades_from_ranking,
    normalize_profile,
    partition_select,
    randomized_round,
    randomized_round_batch,
    split_evenly,
    vanilla_select,
)
from .metrics import (
    gain_curve,
    negative_borda,
    positive_borda,
    precision_at_k,
    selection_frequency,
)
from .noise import kendall_tau, mallows_pmf, sample_mallows, sample_mallows_batch
from .rng import seed_sequence, stream
from .theory import (
    DeltaP,
    GainLocation,
    accept_probability,
    argmax_gain,
    default_threshold,
    delta_p,
    mc_accept_probability,
)
from .twostage import (
    MECHANISMS,
    RankingProfile,
    Stage1Plan,
    StageTrace,
    TwoStageParams,
    count_normalized,
    run_single_stage,
    run_two_stage,
    stage1_rank,
)

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "Cell",
    "Clustering",
    "DeltaP",
    "ExperimentConfig",
    "GainLocation",
    "InfeasibilityError",
    "InvalidInputError",
    "MECHANISMS",
    "PeerKitError",
    "RankingProfile",
    "ResultRow",
    "SelectionResult",
    "Stage1Plan",
    "StageTrace",
    "TwoStageParams",
    "accept_probability",
    "argmax_gain",
    "assign_reviews",
    "cluster_shares",
    "config_cells",
    "count_normalized",
    "default_threshold",
    "delta_p",
    "edp_select",
    "emit_gain_data",
    "gain_curve",
    "grades_from_ranking",
    "kendall_tau",
    "load_config",
    "make_clusters",
    "mallows_pmf",
    "mc_accept_probability",
    "negative_borda",
    "normalize_profile",
    "partition_select",
    "positive_borda",
    "precision_at_k",
    "randomized_round",
    "randomized_round_batch",
    "run_cell",
    "run_single_stage",
    "run_sweep",
    "run_two_stage",
    "sample_mallows",
    "sample_mallows_batch",
    "seed_sequence",
    "selection_frequency",
    "split_evenly",
    "stage1_rank",
    "stream",
    "vanilla_select",
    "write_rows_csv",
]

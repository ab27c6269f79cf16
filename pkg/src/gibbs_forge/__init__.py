"""Symmetric Gibbs distributions on sparse factor graphs: generators,
edge-by-edge samplers, and exact verification oracles."""
from __future__ import annotations

from .core_model import (
    FAIL,
    ExactDistribution,
    FactorGraph,
    WeightTable,
    config_key,
    dump_graph,
    edge_marginal,
    exact_conditional,
    gibbs_weight,
    load_graph,
    parse_graph,
    partition_function,
    run_length_decode,
    run_length_encode,
    save_graph,
    total_variation,
)
from .errors import (
    Corrupt,
    DegenerateH,
    DomainError,
    EmptySampleSet,
    GibbsForgeError,
    InfeasibleBoundary,
    InvalidInput,
    InvalidSize,
    InvalidSpec,
    NotInFamilyG,
    SizeExceeded,
    ZeroMass,
    ZeroMeasureCondition,
)
from .harness import (
    ExperimentConfig,
    TvReport,
    build_id,
    estimate_tv,
    run_experiment,
)
from .models import (
    ModelSpec,
    SlackReport,
    b1_slack,
    check_sym1,
    check_sym2,
    closed_form_rate,
    disagreement_rate,
    make_model_spec,
    make_weight,
    model_spec_from_config,
    threshold_beta,
)
from .random_instances import (
    Cycle,
    CycleCensus,
    PlantedPair,
    cycle_census,
    default_threshold,
    enumerate_short_cycles,
    is_balanced,
    sample_null,
    sample_planted,
)
from .rng import ALGORITHM, make_rng
from .sampler import (
    EdgeSequence,
    build_sequence,
    fixsampler_run,
    rsampler_run,
    sample_once,
)
from .unicyclic_dp import (
    HSubgraph,
    boundary_probability,
    build_h_subgraph,
    sample_boundary_of_H,
    sample_Xi_given_boundary,
    sample_tree,
    tree_marginal,
    xi_probability,
)
from .update_processes import (
    ProcessOutcome,
    cycleswitch_run,
    exact_output_law,
    mswitch_run,
    rswitch_run,
    rupdate_run,
    switch_run,
    transition_probability,
)

__version__ = "0.1.0"

"""Gated deep linear networks: dynamics, closed forms, and rectifier imitation."""

from .datasets import (
    SHARED,
    CorrelationPair,
    Dataset,
    LabelBlock,
    build_contextual,
    build_contextual_hierarchy,
    build_hierarchy_labels,
    build_xor_margin,
    check_diagonalizable,
    correlation_stats,
    load_dataset,
    save_dataset,
)
from .graphs import (
    GatedGraph,
    GatingTable,
    GraphEdge,
    LayerNode,
    build_reln_graph,
    contextual_graph,
    depth2_contextual_graph,
    pathway_graph,
    xor_linear_graph,
    xor_pointwise_graph,
)
from .network import (
    GatedLinearNet,
    PathwayStats,
    effective_mode_strengths,
    forward,
    gradient,
    loss,
    pathway_stats,
    predict_outputs,
    spectral_pathway_init,
)
from .relu import ActivationSample, ReluNet, gate_pattern_report
from .trajectory import (
    NOT_REACHED,
    Trajectory,
    count_plateaus,
    l2_curve_distance,
    select_stereotypical_run,
)
from .analytic import (
    ModeParams,
    ModeSpectrum,
    RaceSystem,
    common_pathway_modes,
    common_pathway_residual,
    contextual_closed_form,
    contextual_pathway_modes,
    contextual_race_system,
    coupling_coefficients,
    crossover_delta,
    linear_mode_trajectory,
    race_reduction_integrate,
    time_to_mode_value,
    xor_gdln_loss,
    xor_gating_constants,
    xor_time_to_loss,
)

__version__ = "0.1.0"

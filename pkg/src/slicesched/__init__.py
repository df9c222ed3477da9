"""Two-level MDP scheduler for slice-parallel video decoding on DVFS cores.

The first level solves per-frame Markov decision processes offline (one value
table per frame position in the group-of-pictures schedule, coupled through
dependency-unlock bonuses); the second level turns those tables into per-slot
processor assignments online via earliest-deadline-first tie-breaking, sticky
slice placement and intra-slot slack reclamation.  A trace-driven simulator
replays recorded or synthetic slice complexities under the proposed scheduler,
a shared-clock variant and a worst-case fluid DVFS baseline.
"""

from .cost_model import (
    DEFAULT_FREQUENCIES_MHZ,
    LagrangianParams,
    PowerModel,
    SystemModel,
    default_power_model,
    expected_slice_rate,
    lagrangian_stage_cost,
    processor_power,
    validate_power_model,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    GopError,
    InstanceTooLargeError,
    ModelError,
    PolicyError,
    SliceSchedError,
    TraceError,
)
from .first_level import (
    FramePolicy,
    FramePolicySet,
    FrameValueFunction,
    FrameValueSet,
    decomposition_gap,
    extract_policy,
    frame_value_iteration,
    policy_op_count,
    read_policy_file,
    sub_value_update_first,
    sub_value_update_last,
    sub_value_update_mid,
    vi_op_count,
    write_policy_file,
)
from .mdp_exact import (
    JointAction,
    JointValueFunction,
    enumerate_joint_states,
    finite_horizon_oracle,
    joint_greedy_policy,
    joint_value_iteration,
    write_values_csv,
)
from .second_level import (
    FrameClaim,
    SlackResult,
    ProcessorState,
    SlotAssignment,
    apply_stickiness,
    coordinate_frequencies,
    edf_assign,
    reclaim_slack,
    write_assignment_log,
)
from .simulator import (
    SCHEDULERS,
    SimConfig,
    SimMetrics,
    SliceTraceRecord,
    SlotLog,
    compute_metrics,
    generate_synthetic_trace,
    opt_mems_schedule,
    read_trace,
    run_simulation,
    write_trace,
)
from .stochastic_model import (
    ComplexityModel,
    EmpiricalDistribution,
    decode_prob,
    departure_pmf,
    conditional_decode_prob,
    sample_complexity,
)
from .workload_model import (
    DecodeOutcome,
    FrameRef,
    FrameSpec,
    FrameTiming,
    FrameType,
    GopStructure,
    TrafficState,
    advance_traffic,
    build_gop_schedule,
    canonical_ibpb_frames,
    canonical_ibpb_gop,
    enumerate_traffic_states,
    frame_timing,
    joint_action_space_size,
    per_frame_state_counts,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_FREQUENCIES_MHZ",
    "SCHEDULERS",
    "ComplexityModel",
    "ConfigError",
    "ConvergenceError",
    "DecodeOutcome",
    "EmpiricalDistribution",
    "FrameClaim",
    "FramePolicy",
    "FramePolicySet",
    "FrameRef",
    "FrameSpec",
    "FrameTiming",
    "FrameType",
    "FrameValueFunction",
    "FrameValueSet",
    "GopError",
    "GopStructure",
    "InstanceTooLargeError",
    "JointAction",
    "JointValueFunction",
    "LagrangianParams",
    "ModelError",
    "PolicyError",
    "PowerModel",
    "ProcessorState",
    "SimConfig",
    "SlackResult",
    "SimMetrics",
    "SliceSchedError",
    "SliceTraceRecord",
    "SlotAssignment",
    "SlotLog",
    "SystemModel",
    "TraceError",
    "TrafficState",
    "advance_traffic",
    "apply_stickiness",
    "build_gop_schedule",
    "canonical_ibpb_frames",
    "canonical_ibpb_gop",
    "compute_metrics",
    "coordinate_frequencies",
    "decode_prob",
    "decomposition_gap",
    "default_power_model",
    "departure_pmf",
    "edf_assign",
    "enumerate_traffic_states",
    "expected_slice_rate",
    "extract_policy",
    "finite_horizon_oracle",
    "frame_timing",
    "frame_value_iteration",
    "generate_synthetic_trace",
    "enumerate_joint_states",
    "joint_action_space_size",
    "joint_greedy_policy",
    "joint_value_iteration",
    "lagrangian_stage_cost",
    "opt_mems_schedule",
    "per_frame_state_counts",
    "policy_op_count",
    "processor_power",
    "read_policy_file",
    "read_trace",
    "reclaim_slack",
    "run_simulation",
    "conditional_decode_prob",
    "sample_complexity",
    "sub_value_update_first",
    "sub_value_update_last",
    "sub_value_update_mid",
    "validate_power_model",
    "vi_op_count",
    "write_assignment_log",
    "write_policy_file",
    "write_trace",
    "write_values_csv",
]

"""Desk-scale numerics for Fourier-basis quantum query lower bounds."""

__version__ = "0.1.0"

from .errors import CapExceeded, ConfigError, HierarchyMismatch, QlbError, RankCollapse, SeedParseError
from .fourier import (
    FourierState,
    Measurement,
    PhaseFunction,
    ProblemDims,
    QueryAlgorithm,
    apply_oracle,
    apply_phase_shift,
    apply_unitary,
    fourier_from_inputs,
    project_Xle,
    run_uniform,
    standard_basis_simulate,
)
from .partitions import (
    HighlightedPartition,
    KnowledgeSystem,
    Partition,
    PartitionOrbit,
    build_hierarchy,
    canonical,
    ed_orbit,
    kdist_seed,
    orbit_of,
    parse_seed,
    split_off,
    unhighlight,
)
from .transfer import (
    ResponseSet,
    YState,
    apply_knowledge,
    apply_oracle_Y,
    apply_query_gain,
    apply_transfer,
    apply_xi,
    success_probability,
)

"""Anti-concentration constants, identity and inequality verifiers, trajectories."""

from .framework import framework_bound, gamma_of_span, relaxed_vs_strict
from .gamma import GammaReport, compute_gamma
from .identities import (
    check_commutator,
    verify_ed_alterations,
    verify_inclusion_exclusion,
    verify_query_lemma,
    verify_splitting_bound,
    verify_upsilon1_bound,
    verify_xi_norm,
)
from .trajectory import TrajectoryReport, fit_power_law, knowledge_trajectory

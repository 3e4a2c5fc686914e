"""Cesaro means of Markov operators on [0, 1] and their weak-topology diagnostics."""

from .diagnostics import (
    ConvergenceReport,
    Verdict,
    escape_profile,
    feller_scan,
    fixed_point_search,
    invariance_residual,
    pfa_signature,
    weak_distance,
    witness_gap,
)
from .kernel import (
    DeterministicMap,
    GridStochastic,
    Kernel,
    MapPiece,
    ShrinkingUniform,
    SquaringMap,
    kernel_from_config,
    pushforward_cdf,
    transition,
    transition_prob,
)
from .measure import (
    Grid,
    GridMismatchError,
    HybridMeasure,
    TestFamily,
    TestFunction,
    cosine,
    hat,
    integrate,
    mass_of_interval,
    mix,
    monomial,
)
from .montecarlo import SimConfig, empirical_cesaro, mc_vs_operator, sample_step
from .operator import apply_A, apply_T, cesaro_integrals, duality_gap, iterate

__version__ = "0.1.0"

__all__ = [
    "ConvergenceReport",
    "Verdict",
    "escape_profile",
    "feller_scan",
    "fixed_point_search",
    "invariance_residual",
    "pfa_signature",
    "weak_distance",
    "witness_gap",
    "DeterministicMap",
    "GridStochastic",
    "Kernel",
    "MapPiece",
    "ShrinkingUniform",
    "SquaringMap",
    "kernel_from_config",
    "pushforward_cdf",
    "transition",
    "transition_prob",
    "Grid",
    "GridMismatchError",
    "HybridMeasure",
    "TestFamily",
    "TestFunction",
    "cosine",
    "hat",
    "integrate",
    "mass_of_interval",
    "mix",
    "monomial",
    "SimConfig",
    "empirical_cesaro",
    "mc_vs_operator",
    "sample_step",
    "apply_A",
    "apply_T",
    "cesaro_integrals",
    "duality_gap",
    "iterate",
]

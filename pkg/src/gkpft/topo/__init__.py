"""Topological error-correction simulation on a periodic cubic lattice."""
from .decoder import Decoder, brute_force_pairs, decode_mwpm, matching_graph, min_weight_pairs, qubit_weights
from .lattice import RhgLattice, build_lattice
from .noise import Method, Mode, NoiseConfig, NoiseRecords, sample_qubit_noise
from .trials import (
    CSV_COLUMNS,
    NoCrossing,
    ThresholdEstimate,
    TrialConfig,
    TrialOutcome,
    TrialsResult,
    estimate_threshold,
    run_outcomes,
    run_trials,
    wilson_interval,
    write_csv,
)

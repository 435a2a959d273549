"""Sequential collusion-resistant fingerprinting: codes, channels, scores and stopping rules."""

from .accusation import AccusationEngine, Boundary, EngineConfig, tardos_boundary, wald_thresholds
from .analysis import drift_integrals, expected_termination, kl_divergence, mutual_info_rate
from .channel import CollusionChannel, make_attack, pirate_output
from .encoder import BiasDistribution, LazyCode, generate_code, sample_bias_vector
from .model import CERTAINLY_INNOCENT, BiasVector, CodeMatrix, CoalitionSpec
from .scoring import ScoreFunction, averaged_moments, segment_moments
from .sim import ExperimentConfig, preset, run_experiment, run_trial

__version__ = "0.1.0"

__all__ = [
    "AccusationEngine", "Boundary", "EngineConfig", "tardos_boundary", "wald_thresholds",
    "drift_integrals", "expected_termination", "kl_divergence", "mutual_info_rate",
    "CollusionChannel", "make_attack", "pirate_output",
    "BiasDistribution", "LazyCode", "generate_code", "sample_bias_vector",
    "CERTAINLY_INNOCENT", "BiasVector", "CodeMatrix", "CoalitionSpec",
    "ScoreFunction", "averaged_moments", "segment_moments",
    "ExperimentConfig", "preset", "run_experiment", "run_trial",
]

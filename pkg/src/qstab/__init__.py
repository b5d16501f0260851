"""Quantized and ternary feedback stabilization: synthesis and hybrid simulation."""
from .config import ExperimentConfig
from .lyapunov import LyapunovSpec
from .plants import PlantModel, builtin_demo_plant, chain_demo, normal_form_to_plant
from .quantizer import QuantizerConfig, psi
from .simulator import run_quantized, run_ternary
from .synthesis import GridPlan, SynthesisResult, synthesize

__all__ = [
    "ExperimentConfig", "GridPlan", "LyapunovSpec", "PlantModel", "QuantizerConfig",
    "SynthesisResult", "builtin_demo_plant", "chain_demo", "normal_form_to_plant", "psi",
    "run_quantized", "run_ternary", "synthesize",
]

"""Benchmarks and robustness sweeps for background-knowledge graphs in
graph-classification models."""

__version__ = "0.1.0"

from .graph import BkGraph, build_graph  # noqa: F401
from .synth import SynthDataset, SynthParams, generate_dataset  # noqa: F401
from .perturb import Perturbation, apply_perturbation  # noqa: F401
from .models import ModelSpec, SplitPlan  # noqa: F401
from .sweep import SweepConfig, run_sweep  # noqa: F401

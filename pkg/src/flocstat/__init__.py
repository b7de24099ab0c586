"""Flocculation chemostat: steady states, stability, bifurcations, operating diagrams."""
from __future__ import annotations

__version__ = "0.1.0"

from .config import PRESETS, ConfigError, ScenarioConfig, emit_config, parse_config, preset_params
from .diagrams import (
    OperatingDiagram,
    Region,
    bifurcation_1d,
    flocculation_sweep,
    operating_diagram,
    special_points,
)
from .dynamics import AttractorKind, attractor_probe, homoclinic_locate, integrate
from .equilibria import SteadyKind, SteadyState, break_evens, find_steady_states, fold_locus
from .model import BioParams, DomainError, OperatingPoint, State, jacobian, vector_field
from .stability import classify, eigenvalues, hopf_roots, hopf_s_in, routh_hurwitz

__all__ = [
    "__version__", "BioParams", "OperatingPoint", "State", "DomainError", "vector_field", "jacobian",
    "SteadyKind", "SteadyState", "find_steady_states", "break_evens", "fold_locus",
    "classify", "routh_hurwitz", "eigenvalues", "hopf_roots", "hopf_s_in",
    "integrate", "attractor_probe", "homoclinic_locate", "AttractorKind",
    "operating_diagram", "bifurcation_1d", "special_points", "flocculation_sweep",
    "OperatingDiagram", "Region",
    "ScenarioConfig", "ConfigError", "PRESETS", "preset_params", "parse_config", "emit_config",
]

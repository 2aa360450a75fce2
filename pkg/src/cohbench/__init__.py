"""Deterministic coherence-optics simulator for polarization-path correlated
light: Jones-calculus bench propagation, heterodyne detector readout, gated
joint correlations and a CHSH harness."""

__version__ = "0.1.0"

from .detection import (
    ChshResult,
    CorrelationResult,
    SampledConfig,
    chsh_E,
    chsh_max_search,
    chsh_S,
    correlation_map,
    detector_mean,
    detector_mean_sampled,
    fringe_visibility,
    gated_correlation_analytic,
    gated_correlation_sampled,
)
from .dsl import load, loads, parse, serialize, tokenize
from .field import BenchParams, FieldTerm, JonesVec, PortField
from .graph import BenchGraph, Diagnostic, Element, Link, validate
from .optics import build_fig1, field_report, propagate

__all__ = [
    "BenchGraph", "BenchParams", "ChshResult", "CorrelationResult", "Diagnostic",
    "Element", "FieldTerm", "JonesVec", "Link", "PortField", "SampledConfig",
    "build_fig1", "chsh_E", "chsh_S", "chsh_max_search", "correlation_map",
    "detector_mean", "detector_mean_sampled", "field_report", "fringe_visibility",
    "gated_correlation_analytic", "gated_correlation_sampled", "load", "loads",
    "parse", "propagate", "serialize", "tokenize", "validate",
]

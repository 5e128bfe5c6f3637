"""Graphical models for circular variables on the torus."""

__version__ = "0.1.0"

from .core import (
    AngleMatrix,
    CircularSummary,
    bessel_i0,
    circular_mean,
    circular_summary,
    complex_moments,
    inverse_stereographic,
    log_bessel_i0,
    stereographic,
    wrap_angle,
)
from .errors import (
    AcyclicityError,
    ConvergenceError,
    InvalidArgumentError,
    NumericalError,
    ParseError,
    SingularityError,
    TorographError,
    UndefinedDirectionError,
)
from .graphs import Dag, EdgeReport, UndirectedGraph, dag_validate, emit_graph, markov_blanket, separates

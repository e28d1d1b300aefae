"""Source detection for discrete-time SIR outbreaks on graphs."""

from .detect import DetectionResult, closeness_estimator, random_guess, reverse_infection
from .errors import SourceDetectionError
from .graph import Graph, Snapshot, jordan_infection_centers, load_edge_list
from .samplepath import mle_estimator, optimal_path_prob, sample_path_estimator
from .sir import SirParams, SirTrace, simulate, snapshot, trace_prob

__all__ = [
    "DetectionResult",
    "Graph",
    "SirParams",
    "SirTrace",
    "Snapshot",
    "SourceDetectionError",
    "closeness_estimator",
    "jordan_infection_centers",
    "load_edge_list",
    "mle_estimator",
    "optimal_path_prob",
    "random_guess",
    "reverse_infection",
    "sample_path_estimator",
    "simulate",
    "snapshot",
    "trace_prob",
]

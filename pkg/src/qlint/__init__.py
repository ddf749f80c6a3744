"""qlint: detection of quantum programming problems in Qiskit programs."""

from .problems import ALL_PROBLEMS, CATALOG, ProblemType
from .records import DetectorSource, GroundTruthEntry, LintWarning
from .rules import lint_source, run_detectors

__all__ = [
    "ALL_PROBLEMS",
    "CATALOG",
    "DetectorSource",
    "GroundTruthEntry",
    "LintWarning",
    "ProblemType",
    "lint_source",
    "run_detectors",
]

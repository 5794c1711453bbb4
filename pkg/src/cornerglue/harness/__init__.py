"""CLI orchestration, file formats, scenarios and refinement studies."""

from .io import read_collar, read_f, read_k, read_metric, write_collar, write_metric, write_report
from .refine import refinement_study
from .scenarios import list_scenarios, load_scenario, run_scenario

__all__ = [
    "read_metric",
    "write_metric",
    "read_collar",
    "write_collar",
    "read_f",
    "read_k",
    "write_report",
    "run_scenario",
    "list_scenarios",
    "load_scenario",
    "refinement_study",
]

"""Experiment orchestration: specs, runners, reports and the CLI."""

from .config import ExperimentSpec, load_spec, spec_from_dict
from .experiments import run_experiment
from .report import ExperimentReport, emit, load_report

__all__ = ["ExperimentSpec", "ExperimentReport", "emit", "load_report", "load_spec", "run_experiment", "spec_from_dict"]

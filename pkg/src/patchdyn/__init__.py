"""Planar padded-polytope contact dynamics and switch-detecting optimal control."""

from . import (
    autodiff,
    cli,
    contact,
    errors,
    fesdj,
    geom2d,
    mpcc,
    nlpsolver,
    runtime,
    sampling,
    scenario_io,
)
from .runtime import Scenario, Trajectory, order_study, simulate, solve_ocp
from .scenario_io import load_scenario, write_outputs, write_scenario

__all__ = [
    "autodiff",
    "cli",
    "contact",
    "errors",
    "fesdj",
    "geom2d",
    "mpcc",
    "nlpsolver",
    "runtime",
    "sampling",
    "scenario_io",
    "Scenario",
    "Trajectory",
    "order_study",
    "simulate",
    "solve_ocp",
    "load_scenario",
    "write_outputs",
    "write_scenario",
]

"""Muscle relaxation control for a simulated tendon-driven arm."""

from .control import ControlConfig, Controller, Mode, RelaxationState, mrc_step
from .kinematics import RobotModel, default_model
from .plant import PlantConfig, PlantState, SimulationDiverged
from .qp import QpError, QpProblem, QpWeights, solve_necessary_tension
from .scenarios import ScenarioConfig, build_scenario, run_scenario, scenario_names, summarize

__version__ = "0.1.0"

__all__ = [
    "ControlConfig", "Controller", "Mode", "RelaxationState", "mrc_step",
    "RobotModel", "default_model", "PlantConfig", "PlantState", "SimulationDiverged",
    "QpError", "QpProblem", "QpWeights", "solve_necessary_tension",
    "ScenarioConfig", "build_scenario", "run_scenario", "scenario_names", "summarize",
]

"""Joint scheduling for coupled power, water, and district-heating networks."""

from .model import (
    Scenario,
    ScenarioError,
    ScenarioParseError,
    ScenarioReferenceError,
    ScenarioSchemaError,
    ValidationReport,
    load_scenario,
    parse_scenario,
    scenario_from_dict,
    scenario_to_dict,
    serialize_scenario,
    validate_scenario,
)
from .physics import (
    ResidualReport,
    Solution,
    cost_breakdown,
    eval_residuals,
    simulate_tank,
    temperature_out,
    total_cost,
)

__all__ = [
    "Scenario",
    "ScenarioError",
    "ScenarioParseError",
    "ScenarioReferenceError",
    "ScenarioSchemaError",
    "ValidationReport",
    "load_scenario",
    "parse_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "serialize_scenario",
    "validate_scenario",
    "ResidualReport",
    "Solution",
    "cost_breakdown",
    "eval_residuals",
    "simulate_tank",
    "temperature_out",
    "total_cost",
]

__version__ = "0.1.0"

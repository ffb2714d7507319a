from .builder import (
    grid_program,
    VariableMap,
    add_energy_constraints,
    add_fairness_constraints,
    add_powerflow_constraints,
    add_siting_constraints,
    build_objective,
    build_program,
    create_variables,
    expected_counts,
    loss_cost_per_unit,
)
from .program import Affine, ConicProgram, ProgramBuilder, ProgramError, Row, Sense, SocBlock, Var, VarKind

__all__ = [
    "Affine", "ConicProgram", "ProgramBuilder", "ProgramError", "Row", "Sense", "SocBlock", "Var", "VarKind",
    "VariableMap", "add_energy_constraints", "add_fairness_constraints", "add_powerflow_constraints",
    "add_siting_constraints", "build_objective", "build_program", "create_variables", "expected_counts", "grid_program",
    "loss_cost_per_unit",
]

from .barrier import DenseBarrierSolver
from .base import FEASIBILITY_TOL, ConicSubproblemSolver, Status, SubResult
from .bnb import BnBConfig, NodeRecord, SolveResult, branch_and_bound, relative_gap, result_as_dict
from .clarabel_backend import ClarabelSolver
from .oracle import OracleResult, OracleScaleError, enumerate_oracle

__all__ = [
    "BnBConfig", "ClarabelSolver", "ConicSubproblemSolver", "DenseBarrierSolver", "FEASIBILITY_TOL",
    "NodeRecord", "OracleResult", "OracleScaleError", "SolveResult", "Status", "SubResult",
    "branch_and_bound", "enumerate_oracle", "relative_gap", "result_as_dict",
]

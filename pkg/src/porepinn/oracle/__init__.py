"""Reference finite-volume solvers and dataset plumbing."""

from .energy import energy_audit, solve_energy_ltne
from .flow2d import OracleConvergenceError, darcy_pressure_drop, solve_flow_2d
from .flow3d import solve_flow_3d
from .grid import FIELD_ORDER_2D, FIELD_ORDER_3D, Grid, ReferenceDataset, case_grid
from .io import export_dataset, import_dataset
from .noise import add_noise

__all__ = [
    "FIELD_ORDER_2D",
    "FIELD_ORDER_3D",
    "Grid",
    "OracleConvergenceError",
    "ReferenceDataset",
    "add_noise",
    "case_grid",
    "darcy_pressure_drop",
    "energy_audit",
    "export_dataset",
    "import_dataset",
    "solve_energy_ltne",
    "solve_flow_2d",
    "solve_flow_3d",
]

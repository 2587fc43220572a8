"""Differentiation engine: forward jets, reverse tape, fused kernels."""

from .api import (
    FDCheckReport,
    NonFiniteParameterError,
    eval_jets,
    fd_check,
    forward_eval,
    frozen_trunk_block,
    input_derivatives,
)
from .jets import Jet2, d2_index, d2_pairs, d2_size
from .kernels import backend
from .tape import (
    Tape,
    TapeNaNError,
    TapeNotFinalizedError,
    TapeOverflowError,
    TJet,
    TVar,
    jet_act,
    jet_component,
    jet_linear,
    jet_points,
    param_gradient,
    value_of,
)

__all__ = [
    "FDCheckReport",
    "Jet2",
    "NonFiniteParameterError",
    "Tape",
    "TapeNaNError",
    "TapeNotFinalizedError",
    "TapeOverflowError",
    "TJet",
    "TVar",
    "backend",
    "d2_index",
    "d2_pairs",
    "d2_size",
    "eval_jets",
    "fd_check",
    "forward_eval",
    "frozen_trunk_block",
    "input_derivatives",
    "jet_act",
    "jet_component",
    "jet_linear",
    "jet_points",
    "param_gradient",
    "value_of",
]

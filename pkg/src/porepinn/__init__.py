"""Physics-informed neural networks for porous-media flow and heat transfer.

Forward, inverse, and transfer solvers for steady Darcy flow with
two-temperature (solid/fluid) heat exchange, a finite-difference reference
solver for validation data, and a CLI that runs the whole case matrix.
"""

__version__ = "0.1.0"

from .autodiff import backend as kernel_backend  # noqa: F401

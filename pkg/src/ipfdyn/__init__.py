"""Information-path-functional dynamics: SDE ensembles, entropy functional,
piecewise-linear macro models, information invariants and networks."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]

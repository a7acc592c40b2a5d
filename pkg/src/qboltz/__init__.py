"""qboltz: exact lattice fermion dynamics and the discrete quantum
Boltzmann equation, with the full derivation chain in between."""

from ._kernels import backend as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]

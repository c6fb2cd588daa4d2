"""Ground-state phase diagram of the Ising-Rabi lattice."""

from .model import ModelParams

__version__ = "0.1.0"

__all__ = ["ModelParams", "__version__"]

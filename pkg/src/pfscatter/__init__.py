"""Truncated Pauli-Fierz models and one-photon scattering verification."""

__version__ = "0.1.0"

from .config import ConfigError, RunConfig  # noqa: E402
from .hamiltonian import PauliFierzModel  # noqa: E402
from .modes import ModeGrid, build_grid, make_grid  # noqa: E402
from .scattering import Scattering  # noqa: E402
from .spectral import SolverError, ground_state  # noqa: E402

__all__ = ["ConfigError", "RunConfig", "PauliFierzModel", "ModeGrid", "build_grid", "make_grid",
           "Scattering", "SolverError", "ground_state", "__version__"]

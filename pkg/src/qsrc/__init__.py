"""Numerical toolkit for compressing quantum sources with pure-state signals."""

from .ensembles import Ensemble, decompose, density, entropy, holevo_chi
from .qcore import fidelity, von_neumann_entropy

__version__ = "0.1.0"

__all__ = ["Ensemble", "decompose", "density", "entropy", "holevo_chi", "fidelity",
           "von_neumann_entropy"]

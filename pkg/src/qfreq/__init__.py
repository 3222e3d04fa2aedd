"""Numerical laboratory for Dirichlet-minimizing special Q-valued functions."""
from .qspace import ClassicalQPoint, MultiplicityError, QPoint, eta, g_metric, gs_metric
from .fields import Mesh, SampledField, decompose, dirichlet_energy, read_field, write_field
from .kernels import BACKEND

__all__ = [
    "BACKEND",
    "ClassicalQPoint",
    "Mesh",
    "MultiplicityError",
    "QPoint",
    "SampledField",
    "decompose",
    "dirichlet_energy",
    "eta",
    "g_metric",
    "gs_metric",
    "read_field",
    "write_field",
]

__version__ = "0.1.0"

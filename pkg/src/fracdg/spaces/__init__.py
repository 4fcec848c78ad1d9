"""Staggered discrete spaces, local bases and interpolation operators."""

from .functions import (
    DiscreteFunction,
    interpolate_flux,
    interpolate_fracture,
    interpolate_pressure,
    locate,
)
from .layout import DofLayout, build_layout, local_basis
from .reference import ReferenceElement, reference_element

__all__ = [
    "DiscreteFunction",
    "DofLayout",
    "ReferenceElement",
    "build_layout",
    "interpolate_flux",
    "interpolate_fracture",
    "interpolate_pressure",
    "local_basis",
    "locate",
    "reference_element",
]

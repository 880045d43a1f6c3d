"""Certification of candidate points for constrained min-max problems."""

from .geometry import InfeasiblePointError, PolyhedralSet
from .problems import GridSpec, MinMaxProblem, Point, build_example, envelope_phi

__all__ = ["GridSpec", "InfeasiblePointError", "MinMaxProblem", "Point", "PolyhedralSet",
           "build_example", "envelope_phi"]

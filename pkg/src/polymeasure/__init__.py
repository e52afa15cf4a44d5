"""Polyline measurement toolkit: geometry, matching, losses, mask measurement,
detection/measurement metrics and Vd:Cd grading."""

from .geom import DistanceKind, PolyClass, Polyline, ResamplePolicy

__all__ = ["DistanceKind", "PolyClass", "Polyline", "ResamplePolicy"]
__version__ = "0.1.0"

"""Flows on manifolds with time-dependent metrics.

Geodesic distance and energies under a moving metric, adaptive integration
of first- and second-order flows with blow-up detection, sampled growth
certification with Bihari energy envelopes, Euler-Lagrange mechanics with a
magnetic term, and the Eisenhart lift to a Lorentzian pp-wave metric.
"""

from .bounds import GrowthFunction, bihari_envelope
from .flows import ForceField, Status, Trajectory, integrate_first_order, integrate_second_order
from .manifolds import ChartManifold
from .metric import MetricField, catalog

__all__ = [
    "ChartManifold",
    "ForceField",
    "GrowthFunction",
    "MetricField",
    "Status",
    "Trajectory",
    "bihari_envelope",
    "catalog",
    "integrate_first_order",
    "integrate_second_order",
]
__version__ = "0.1.0"

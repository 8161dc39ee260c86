"""First eigenvalue of the coupled (p,q)-Laplacian along Ricci-harmonic flow."""

from .diffgeo import CoupledState, Grid, MetricField
from .geomflow import EinsteinParams, FlowConfig, evolve
from .kernels import BACKEND
from .monitor import Trace, TraceRecord, Verdict, run_monitor
from .pqeigen import EigenPair, EigenParams, first_eigenpair

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CoupledState", "EigenPair", "EigenParams", "EinsteinParams", "FlowConfig",
    "Grid", "MetricField", "Trace", "TraceRecord", "Verdict", "evolve", "first_eigenpair",
    "run_monitor",
]

"""Capacity of 2-D constrained channels via fully adapted SMC with exact column sampling."""

from rllcap.model import LatticeModel, PairwisePotential, StripView, rll_model, rll_potential, strip_view
from rllcap.oracle import exact_capacity, exact_log2_Z
from rllcap.smc import CapacityEstimate, capacity_from_log2Z, run

__all__ = [
    "CapacityEstimate",
    "LatticeModel",
    "PairwisePotential",
    "StripView",
    "capacity_from_log2Z",
    "exact_capacity",
    "exact_log2_Z",
    "rll_model",
    "rll_potential",
    "run",
    "strip_view",
]

__version__ = "0.1.0"

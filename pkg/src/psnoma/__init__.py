"""Probabilistic constellation shaping for uplink NOMA over IM/DD optical links."""

from .channel import NomaScenario, load_scenario
from .optimizer import SolverConfig, optimize_scenario, optimize_user
from .rates import ShapedConstellation, mutual_information, sdt_rate

__version__ = "0.1.0"

__all__ = ["NomaScenario", "load_scenario", "SolverConfig", "optimize_scenario",
           "optimize_user", "ShapedConstellation", "mutual_information", "sdt_rate"]

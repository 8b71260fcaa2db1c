"""Local-estimation-driven load balancing: simulator, policies and heavy-traffic checks."""
from .core import PolicyConfig, SystemState, apply_slot, step
from .dispatch import Strategy
from .baselines import Baseline
from .engine import simulate
from .metrics import resource_pooled_sim, summarize, zeta
from .stochastic import IntDistribution, RngStream, TrafficConfig
from .update import Pull, Push

__all__ = [
    "Baseline", "IntDistribution", "PolicyConfig", "Pull", "Push", "RngStream", "Strategy",
    "SystemState", "TrafficConfig", "apply_slot", "resource_pooled_sim", "simulate", "step",
    "summarize", "zeta",
]

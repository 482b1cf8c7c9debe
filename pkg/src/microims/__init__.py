"""Micro-service IMS testbed: per-session actors on pouches, rendezvous load
balancing with sharded subscriber caches, and busy-signal autoscaling, all
on a deterministic discrete-event engine."""

from .config import Scenario, preset
from .harness import MetricsReport, emit, run_scenario, simulate

__all__ = ["Scenario", "preset", "MetricsReport", "emit", "run_scenario", "simulate"]
__version__ = "0.1.0"

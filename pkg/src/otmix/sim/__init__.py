"""Discrete-event simulation harness: deterministic clock and queue,
authenticated transports, adversary controller, scenario runners, and
metrics collection."""

from .events import Simulator
from .metrics import EventLog, summarize
from .network import SimNetwork, WorkloadSpec, run_workload
from .adversary import AdversaryPolicy, parse_scenario

__all__ = [
    "Simulator",
    "EventLog",
    "summarize",
    "SimNetwork",
    "WorkloadSpec",
    "run_workload",
    "AdversaryPolicy",
    "parse_scenario",
]

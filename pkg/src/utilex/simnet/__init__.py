"""Deterministic simulated network: scenarios, the message protocol and the runner."""

from .protocol import (
    CANONICAL_SEQUENCE,
    NEGOTIATION_STEPS,
    SECURITY_STEPS,
    Envelope,
    Step,
    canonical_sequence,
    filter_trace,
    respects_canonical_order,
    step_numbers,
    trade_keys,
)
from .runner import SimResult, Simulation, TradeRecord, run
from .scenario import Fault, FaultKind, NodeSpec, Scenario, inject_fault, parse_fault

__all__ = [
    "CANONICAL_SEQUENCE", "Envelope", "Fault", "FaultKind", "NEGOTIATION_STEPS", "NodeSpec",
    "SECURITY_STEPS", "Scenario", "SimResult", "Simulation", "Step", "TradeRecord", "canonical_sequence",
    "filter_trace", "inject_fault", "parse_fault", "respects_canonical_order", "run", "step_numbers",
    "trade_keys",
]

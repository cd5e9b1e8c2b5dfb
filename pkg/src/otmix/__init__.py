"""Three-level mix network with oblivious-transfer message delivery.

A protocol library (group arithmetic, sealed boxes, tag derivation,
1-out-of-n OT, permutation commitments), node and client state machines,
a deterministic discrete-event harness with an adversary controller, an
audit tracer, and closed-form anonymity/latency/storage calculators with
Monte-Carlo validators.
"""

from .params import InvalidConfig, NetworkParams

__version__ = "0.1.0"

__all__ = ["NetworkParams", "InvalidConfig", "__version__"]

"""Adversary controller: the full capability set of the threat model.

The adversary observes every link, may delay, drop, or replay frames,
inject its own traffic, and control subsets of nodes and of clients --
but never all clients at once.  Tampering with an honest frame in
transit is also possible, but authenticated framing turns that into a
drop at the receiver, which is exactly what the model predicts.

Scenario scripts are declarative: one directive per line, fields as
key=value pairs, applied at virtual timestamps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

__all__ = ["AdversaryPolicy", "Rule", "parse_scenario", "ScenarioDirective"]


@dataclass
class Rule:
    """Match predicate plus action for frames in flight."""

    action: str                      # "drop" | "delay" | "tamper" | "duplicate"
    src: Optional[Set[int]] = None   # None matches any
    dst: Optional[Set[int]] = None
    mtype: Optional[Set[int]] = None
    from_ms: int = 0
    until_ms: int = 2**62
    delay_ms: int = 0
    exempt_src: Set[int] = field(default_factory=set)

    def matches(self, now: int, src: int, dst: int, mtype: int) -> bool:
        if not (self.from_ms <= now < self.until_ms):
            return False
        if src in self.exempt_src:
            return False
        if self.src is not None and src not in self.src:
            return False
        if self.dst is not None and dst not in self.dst:
            return False
        if self.mtype is not None and mtype not in self.mtype:
            return False
        return True


class AdversaryPolicy:
    """Frame-level interception plus controlled-party bookkeeping."""

    def __init__(self, all_client_ids: Optional[List[int]] = None):
        self.rules: List[Rule] = []
        self.controlled_nodes: Set[int] = set()
        self.controlled_clients: Set[int] = set()
        self.observed: List[Tuple[int, int, int, int, bytes]] = []
        self.observe_all_links = True
        self._all_clients = set(all_client_ids or [])

    def control_clients(self, ids) -> None:
        self.controlled_clients.update(ids)
        if self._all_clients and self.controlled_clients >= self._all_clients:
            raise ValueError("adversary cannot control all clients at once")

    def control_nodes(self, ids) -> None:
        self.controlled_nodes.update(ids)

    def add_rule(self, rule: Rule) -> None:
        self.rules.append(rule)

    def intercept(
        self, now: int, src: int, dst: int, mtype: int, payload: bytes
    ) -> List[Tuple[int, bytes, bool]]:
        """Returns deliveries as (extra_delay_ms, payload, tampered)
        tuples; an empty list means the frame was dropped."""
        if self.observe_all_links:
            self.observed.append((now, src, dst, mtype, payload))
        out = [(0, payload, False)]
        for rule in self.rules:
            if not rule.matches(now, src, dst, mtype):
                continue
            if rule.action == "drop":
                return []
            if rule.action == "delay":
                out = [(extra + rule.delay_ms, p, t) for extra, p, t in out]
            elif rule.action == "tamper":
                out = [(extra, _flip_byte(p), True) for extra, p, t in out]
            elif rule.action == "duplicate":
                out = out + [(rule.delay_ms, p, t) for _, p, t in out]
        return out


def _flip_byte(payload: bytes) -> bytes:
    if not payload:
        return payload
    b = bytearray(payload)
    b[len(b) // 2] ^= 0x01
    return bytes(b)


@dataclass
class ScenarioDirective:
    at_ms: int
    action: str
    args: Dict[str, str]


def parse_scenario(text: str) -> List[ScenarioDirective]:
    """Parse the declarative scenario format.

    Each non-comment line:  ``at=<ms> action=<name> [key=value ...]``
    """
    directives: List[ScenarioDirective] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields: Dict[str, str] = {}
        for tok in line.split():
            if "=" not in tok:
                raise ValueError(f"scenario line {lineno}: expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            fields[k] = v
        if "action" not in fields:
            raise ValueError(f"scenario line {lineno}: missing action")
        at = int(fields.pop("at", "0"))
        action = fields.pop("action")
        directives.append(ScenarioDirective(at_ms=at, action=action, args=fields))
    return directives

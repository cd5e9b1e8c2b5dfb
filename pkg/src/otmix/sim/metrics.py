"""Event log and derived metrics.

The log is the ground truth of a run: an append-only list of structured
records with virtual timestamps.  Serialization is canonical JSONL
(sorted keys, no whitespace), so two runs with equal seeds serialize to
identical bytes -- the determinism check compares these directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

__all__ = ["EventLog", "Summary", "summarize"]


class EventLog:
    def __init__(self):
        self.records: List[dict] = []

    def log(self, t_ms: int, ev: str, party: int, **fields) -> None:
        rec = {"t": t_ms, "ev": ev, "party": party}
        rec.update(fields)
        self.records.append(rec)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, sort_keys=True, separators=(",", ":")) for r in self.records)

    def write(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl() + "\n")

    def by_ev(self, ev: str) -> List[dict]:
        return [r for r in self.records if r["ev"] == ev]


@dataclass
class Summary:
    """Per-run aggregates used by tests and the CLI."""

    sent: int = 0
    delivered: int = 0
    cross_delivered: int = 0
    duplicates: int = 0
    acked: int = 0
    drops: Dict[str, int] = field(default_factory=dict)
    submit_to_publish_ms: List[int] = field(default_factory=list)
    dwell_ms: List[int] = field(default_factory=list)
    publish_count: int = 0
    dummy_publish_count: int = 0
    ot_sessions: int = 0
    delivered_pairs: List[tuple] = field(default_factory=list)
    send_failed: int = 0

    @property
    def mean_latency_s(self) -> float:
        if not self.submit_to_publish_ms:
            return 0.0
        return sum(self.submit_to_publish_ms) / len(self.submit_to_publish_ms) / 1000.0

    @property
    def max_dwell_s(self) -> float:
        return max(self.dwell_ms) / 1000.0 if self.dwell_ms else 0.0


def summarize(records: List[dict], tracked: Optional[Dict[str, tuple]] = None) -> Summary:
    """Aggregate a run's records.

    ``tracked`` maps unique payload hex -> (sender, receiver); when given,
    delivery and latency are computed only over those messages and
    cross-delivery (data arriving at anyone but the addressee) is counted.
    """
    s = Summary()
    sent_at: Dict[str, int] = {}
    tracked_tags: Dict[str, str] = {}
    delivered_data: Dict[str, List[dict]] = {}
    for r in records:
        ev = r["ev"]
        if ev == "sent":
            s.sent += 1
            sent_at[r["tag"]] = r["t"]
        elif ev == "publish":
            s.publish_count += 1
            if r.get("prefill") or r.get("origin") == 0:
                s.dummy_publish_count += 1
            if r["tag"] in sent_at:
                s.submit_to_publish_ms.append(r["t"] - sent_at.pop(r["tag"]))
            if not r.get("prefill"):
                s.dwell_ms.append(r["dwell_ms"])
        elif ev == "delivered":
            delivered_data.setdefault(r["data"], []).append(r)
        elif ev == "acked" or ev == "acked_implicit":
            s.acked += 1
        elif ev == "drop":
            cause = r.get("cause", "other")
            s.drops[cause] = s.drops.get(cause, 0) + 1
        elif ev == "ot_served":
            s.ot_sessions += 1
        elif ev == "send_failed":
            s.send_failed += 1

    if tracked is not None:
        for data_hex, (sender, receiver) in tracked.items():
            recs = delivered_data.get(data_hex, [])
            hit = False
            for r in recs:
                if r["party"] == receiver and r["peer"] == sender:
                    hit = True
                else:
                    s.cross_delivered += 1
            if hit:
                s.delivered += 1
                s.delivered_pairs.append((sender, receiver))
    else:
        s.delivered = sum(len(v) for v in delivered_data.values())
    s.duplicates = sum(max(0, len(v) - 1) for v in delivered_data.values())
    return s

"""Network harness: builds a full network inside the simulator, drives
client workloads, and exposes the pieces for scenario scripting."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from ..audit import AuditCoordinator
from ..client import ClientApp, ClientConfig
from ..level1 import Level1Node
from ..level2 import Level2Node
from ..level3 import Level3Node
from ..params import NetworkParams
from ..registry import AUDITOR_ID, Topology, build_topology
from .adversary import AdversaryPolicy
from .events import Simulator
from .metrics import EventLog, Summary, summarize
from .transport import PartyEnv, SimTransport

__all__ = ["SimNetwork", "WorkloadSpec", "run_workload"]


def _child_rng(seed: int, label) -> random.Random:
    h = hashlib.sha256(f"otmix/{seed}/{label}".encode()).digest()
    return random.Random(int.from_bytes(h, "big"))


class SimNetwork:
    """One simulated deployment: nodes, clients, auditor, transport."""

    def __init__(
        self,
        params: NetworkParams,
        seed: int,
        clients: Optional[int] = None,
        latency_ms: int = 10,
        jitter_ms: int = 5,
        adversary: Optional[AdversaryPolicy] = None,
        client_config: Optional[ClientConfig] = None,
    ):
        self.params = params
        self.seed = seed
        self.sim = Simulator()
        self.log = EventLog()
        self.topology: Topology = build_topology(params, seed, clients)
        self.registry = self.topology.registry
        self.adversary = adversary
        if adversary is not None and not adversary._all_clients:
            adversary._all_clients = set(self.registry.client_ids)
        self.transport = SimTransport(
            self.sim,
            self.topology,
            self.log,
            _child_rng(seed, "transport"),
            latency_ms=latency_ms,
            jitter_ms=jitter_ms,
            adversary=adversary,
        )
        self.l1: Dict[int, Level1Node] = {}
        self.l2: Dict[int, Level2Node] = {}
        self.l3: Dict[int, Level3Node] = {}
        self.clients: Dict[int, ClientApp] = {}

        def env_for(pid: int) -> PartyEnv:
            return PartyEnv(pid, self.sim, self.transport, self.log, _child_rng(seed, pid))

        self.auditor = AuditCoordinator(AUDITOR_ID, env_for(AUDITOR_ID), self.topology)
        self.transport.attach(self.auditor)
        for pid in self.registry.l1_ids:
            self.l1[pid] = Level1Node(pid, env_for(pid), self.topology)
            self.transport.attach(self.l1[pid])
        for pid in self.registry.l2_ids:
            self.l2[pid] = Level2Node(pid, env_for(pid), self.topology)
            self.transport.attach(self.l2[pid])
        for pid in self.registry.l3_ids:
            self.l3[pid] = Level3Node(pid, env_for(pid), self.topology)
            self.transport.attach(self.l3[pid])
        for pid in self.registry.client_ids:
            self.clients[pid] = ClientApp(pid, env_for(pid), self.topology, config=client_config)
            self.transport.attach(self.clients[pid])
        self._started = False

    # ------------------------------------------------------------------

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for party in list(self.l1.values()) + list(self.l2.values()) + list(self.l3.values()):
            party.start()
        for party in self.clients.values():
            party.start()

    def preshare_all(self, pairs: List[Tuple[int, int]]) -> None:
        """Install pre-established pair secrets, as if handshakes had run."""
        for a, b in pairs:
            sigma = self.topology.pair_secret(a, b)
            self.clients[a].install_pair(b, sigma)
            self.clients[b].install_pair(a, sigma)

    def run_until(self, t_ms: int) -> None:
        self.sim.run_until(t_ms)

    def summary(self, tracked: Optional[Dict[str, Tuple[int, int]]] = None) -> Summary:
        return summarize(self.log.records, tracked)


@dataclass
class WorkloadSpec:
    n_messages: int = 100
    rate_per_s: float = 2.0
    start_ms: int = 2_000
    pairs: Optional[List[Tuple[int, int]]] = None  # default: random distinct pairs
    drain: bool = True
    max_virtual_s: float = 3600.0


def run_workload(
    net: SimNetwork, spec: WorkloadSpec
) -> Tuple[Dict[str, Tuple[int, int]], Summary]:
    """Drive a message workload to completion.

    Returns (tracked, summary): ``tracked`` maps the unique payload hex of
    every workload message to its (sender, receiver) ground truth.  With
    ``drain`` set, background filler traffic keeps batches moving after
    the last workload message so the pipeline empties deterministically.
    """
    rng = _child_rng(net.seed, "workload")
    ids = net.registry.client_ids
    if len(ids) < 2:
        raise ValueError("need at least two clients")

    # choose communicating pairs and pre-share their secrets
    if spec.pairs is None:
        pairs = []
        for i in range(spec.n_messages):
            a, b = rng.sample(ids, 2)
            pairs.append((a, b))
    else:
        pairs = [spec.pairs[i % len(spec.pairs)] for i in range(spec.n_messages)]
    net.preshare_all(sorted({(min(a, b), max(a, b)) for a, b in pairs}))

    tracked: Dict[str, Tuple[int, int]] = {}
    t = float(spec.start_ms)
    for i, (a, b) in enumerate(pairs):
        t += rng.expovariate(spec.rate_per_s) * 1000.0
        data = b"WL" + i.to_bytes(6, "big")
        tracked[data.hex()] = (a, b)
        net.sim.schedule_at(int(t), lambda a=a, b=b, data=data: net.clients[a].send(b, data))
    workload_end = int(t)

    net.start()

    # drain: filler traffic between a rotating set of pairs keeps containers
    # and batches filling until every tracked message is delivered
    filler_pairs = [tuple(rng.sample(ids, 2)) for _ in range(8)]
    net.preshare_all(sorted({(min(a, b), max(a, b)) for a, b in filler_pairs}))
    filler_i = [0]

    seen: set = set()
    scan = [0]

    def delivered_count() -> int:
        records = net.log.records
        while scan[0] < len(records):
            r = records[scan[0]]
            scan[0] += 1
            if r["ev"] == "delivered" and r.get("data", "") in tracked:
                seen.add(r["data"])
        return len(seen)

    deadline_ms = int(spec.max_virtual_s * 1000)
    chunk = 5_000
    now = 0
    interval_ms = max(200, int(1000.0 / spec.rate_per_s))
    while now < deadline_ms:
        now = min(now + chunk, deadline_ms)
        net.run_until(now)
        if delivered_count() >= len(tracked):
            break
        if spec.drain and now >= workload_end:
            for k in range(chunk // interval_ms):
                a, b = filler_pairs[filler_i[0] % len(filler_pairs)]
                filler_i[0] += 1
                data = b"FL" + filler_i[0].to_bytes(6, "big")
                net.sim.schedule_at(now + k * interval_ms, lambda a=a, b=b, d=data: net.clients[a].send(b, d))
    return tracked, net.summary(tracked)

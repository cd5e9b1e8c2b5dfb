"""Static key registry and topology descriptor.

Stands in for a PKI: every party id maps to a public key, node roles are
fixed by the topology, and the global handshake tag is distributed to
all users.  Secrets are held in the Topology object, which only the
harness (acting as each party) touches.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, List, Optional

from .crypto import KeyPair, keygen
from .group import GroupElement
from .params import NetworkParams

__all__ = ["AUDITOR_ID", "PartyInfo", "Registry", "Topology", "build_topology"]

AUDITOR_ID = 0

_L1_BASE = 1
_L2_BASE = 101
_L3_BASE = 201
_CLIENT_BASE = 1001


@dataclass(frozen=True)
class PartyInfo:
    party_id: int
    kind: str  # "l1" | "l2" | "l3" | "client" | "auditor"
    public: GroupElement


class Registry:
    """Public view: ids, kinds, public keys, handshake tag."""

    def __init__(self, params: NetworkParams, infos: Dict[int, PartyInfo], k_hs: bytes):
        self.params = params
        self._infos = infos
        self.k_hs = k_hs
        self.l1_ids = sorted(i for i, p in infos.items() if p.kind == "l1")
        self.l2_ids = sorted(i for i, p in infos.items() if p.kind == "l2")
        self.l3_ids = sorted(i for i, p in infos.items() if p.kind == "l3")
        self.client_ids = sorted(i for i, p in infos.items() if p.kind == "client")

    def pk(self, party_id: int) -> GroupElement:
        return self._infos[party_id].public

    def kind(self, party_id: int) -> str:
        return self._infos[party_id].kind

    def knows(self, party_id: int) -> bool:
        return party_id in self._infos

    @property
    def node_ids(self) -> List[int]:
        return self.l1_ids + self.l2_ids + self.l3_ids


class Topology:
    """Registry plus the secrets of every party (harness-side only)."""

    def __init__(self, registry: Registry, keypairs: Dict[int, KeyPair], seed: int):
        self.registry = registry
        self.keypairs = keypairs
        self.seed = seed

    def keypair(self, party_id: int) -> KeyPair:
        return self.keypairs[party_id]

    def pair_secret(self, a: int, b: int) -> bytes:
        """Pre-shared pair secret, as if a handshake had already run."""
        lo, hi = min(a, b), max(a, b)
        return hashlib.sha256(
            b"otmix/preshared" + self.seed.to_bytes(8, "big") + lo.to_bytes(2, "big") + hi.to_bytes(2, "big")
        ).digest()


def party_ids(params: NetworkParams, clients: Optional[int] = None) -> Dict[str, List[int]]:
    n_clients = params.u if clients is None else clients
    return {
        "l1": [_L1_BASE + i for i in range(params.q1)],
        "l2": [_L2_BASE + i for i in range(params.q2)],
        "l3": [_L3_BASE + i for i in range(params.q3)],
        "client": [_CLIENT_BASE + i for i in range(n_clients)],
    }


def build_topology(params: NetworkParams, seed: int, clients: Optional[int] = None) -> Topology:
    """Deterministic topology: all keys and the handshake tag derive from
    the seed, so two builds with equal inputs are identical."""
    ids = party_ids(params, clients)
    infos: Dict[int, PartyInfo] = {}
    keypairs: Dict[int, KeyPair] = {}
    for kind, id_list in ids.items():
        for party_id in id_list:
            kp = keygen(b"otmix/party" + seed.to_bytes(8, "big") + party_id.to_bytes(2, "big"))
            kp.public.precompute()
            infos[party_id] = PartyInfo(party_id=party_id, kind=kind, public=kp.public)
            keypairs[party_id] = kp
    k_hs = hashlib.sha256(b"otmix/handshake-tag" + seed.to_bytes(8, "big")).digest()
    auditor_kp = keygen(b"otmix/auditor" + seed.to_bytes(8, "big"))
    infos[AUDITOR_ID] = PartyInfo(party_id=AUDITOR_ID, kind="auditor", public=auditor_kp.public)
    keypairs[AUDITOR_ID] = auditor_kp
    registry = Registry(params, infos, k_hs)
    return Topology(registry, keypairs, seed)

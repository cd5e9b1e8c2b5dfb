"""Round machinery shared by Level-2 and Level-3 nodes.

Covers the per-round active/passive division derived from the jointly
generated XOR value, the pseudorandom batch partition, chaff messages
that are byte-indistinguishable from real traffic, and the replay cache.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

from .crypto import SealedBox, TAG_LEN, round_value, sealed_box_size
from .group import random_element
from .params import NetworkParams
from .wire import TaggedMessage, PAYLOAD_BYTES, NONCE_LEN

__all__ = ["RoundDivision", "compute_division", "make_dummy_message", "ReplayCache"]


@dataclass(frozen=True)
class RoundDivision:
    """Who is active this round and which batch slice each active gets."""

    round_no: int
    active_ids: Tuple[int, ...]   # in serving order (sorted by round value)
    passive_ids: Tuple[int, ...]
    partition: Tuple[Tuple[int, ...], ...]  # index blocks, one per active node


def compute_division(
    xor_value: bytes, round_no: int, l3_ids: Sequence[int], params: NetworkParams
) -> RoundDivision:
    """Deterministic division all honest parties compute identically.

    The round value is split into one substring per Level-3 node; nodes
    sort by substring and the first alpha become active.  The batch
    partition is drawn from a generator seeded by the same value, so the
    dispatching Level-2 node and any auditor agree on it exactly.
    """
    q3 = len(l3_ids)
    v = round_value(xor_value, round_no, q3)
    sub = len(v) // q3
    pairs = sorted(
        (v[i * sub : (i + 1) * sub], node_id) for i, node_id in enumerate(sorted(l3_ids))
    )
    ordered = [node_id for _, node_id in pairs]
    active = tuple(ordered[: params.alpha])
    passive = tuple(ordered[params.alpha :])

    prng = random.Random(int.from_bytes(hashlib.sha256(b"otmix/partition" + v).digest(), "big"))
    indices = list(range(params.beta2))
    prng.shuffle(indices)
    size = params.bucket_size
    partition = tuple(
        tuple(indices[i * size : (i + 1) * size]) for i in range(params.alpha)
    )
    return RoundDivision(
        round_no=round_no, active_ids=active, passive_ids=passive, partition=partition
    )


_DUMMY_BOX_CT_LEN = PAYLOAD_BYTES + NONCE_LEN + 1 + 16
_DUMMY_KEY_BLOCK_TAIL = sealed_box_size(0) - 2 - 32 - 4 - 16  # AEAD part minus point


def make_dummy_message(rng: random.Random) -> TaggedMessage:
    """Chaff shaped exactly like a real tagged message.

    The ephemeral-point slot must hold a valid group-element encoding
    (random bytes decode only ~6% of the time, which would give the game
    away), so a fresh random element goes there; everything else is
    uniform random, matching real AEAD output.
    """
    point = random_element(rng).to_bytes()
    key_tail = rng.getrandbits(8 * _DUMMY_KEY_BLOCK_TAIL).to_bytes(_DUMMY_KEY_BLOCK_TAIL, "big")
    body = rng.getrandbits(8 * _DUMMY_BOX_CT_LEN).to_bytes(_DUMMY_BOX_CT_LEN, "big")
    tag = rng.getrandbits(8 * TAG_LEN).to_bytes(TAG_LEN, "big")
    return TaggedMessage(box=SealedBox(key_block=point + key_tail, body=body), tag=tag)


class ReplayCache:
    """Exact (payload-hash, tag) membership over a sliding window.

    Entries older than the window are evicted lazily; within the window
    membership is exact, so a duplicate is always caught and a legitimate
    resend (same payload, new tag) is never caught.
    """

    def __init__(self, window_s: float):
        self.window_s = window_s
        self._seen: Dict[bytes, int] = {}

    @staticmethod
    def key(payload_hash: bytes, tag: bytes) -> bytes:
        return payload_hash + tag

    def seen_recently(self, payload_hash: bytes, tag: bytes, now_s: int) -> bool:
        self._evict(now_s)
        return self.key(payload_hash, tag) in self._seen

    def record(self, payload_hash: bytes, tag: bytes, now_s: int) -> None:
        self._evict(now_s)
        self._seen[self.key(payload_hash, tag)] = now_s

    def _evict(self, now_s: int) -> None:
        if len(self._seen) < 4096:
            return
        cutoff = now_s - self.window_s
        self._seen = {k: t for k, t in self._seen.items() if t >= cutoff}

    def __len__(self) -> int:
        return len(self._seen)

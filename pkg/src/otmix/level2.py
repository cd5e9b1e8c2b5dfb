"""Level-2 node: decrypt, deduplicate, batch, shuffle, dispatch.

Opens each forwarded submission with its own key (detecting any transit
alteration without learning who sent it), enforces timestamp freshness
and replay protection, assembles beta2-message batches, commits to the
batch shuffle, generates chaff, and dispatches real buckets to the
round's active Level-3 nodes and chaff buckets to the passive ones.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from . import messages as m
from .crypto import (
    CryptoError,
    PermOpening,
    commit_perm,
    open_box_unverified,
    reveal_box_dh,
    sign,
    verify,
)
from .level1 import COMMIT_BATCH
from .registry import AUDITOR_ID, Registry, Topology
from .rounds import ReplayCache, RoundDivision, compute_division, make_dummy_message
from .runtime import Env, Party
from .wire import Bucket, EnvelopeInner, SealedBox, TaggedMessage, WireError

__all__ = ["Level2Node", "BatchRecord"]

_SKEW_TOLERANCE_S = 2.0  # senders' clocks may run slightly ahead


@dataclass
class _Pending:
    tm: TaggedMessage
    blob: bytes              # the sealed blob this message came in
    l1_id: int
    container_seq: int
    position: int            # index within the flush


@dataclass
class BatchRecord:
    """Scoped audit log for one dispatched batch."""

    round_no: int
    inputs: List[_Pending]   # pre-shuffle order
    perm: Tuple[int, ...]
    opening: PermOpening
    commitment: bytes
    division: RoundDivision
    bucket_hashes: Dict[int, bytes]  # destination -> sha256(bucket bytes)


class Level2Node(Party):
    def __init__(self, party_id: int, env: Env, topology: Topology):
        super().__init__(party_id, env)
        self.registry: Registry = topology.registry
        self.keys = topology.keypair(party_id)
        self.params = self.registry.params
        self.buffer: List[_Pending] = []
        self.round_no = 0
        self.replay = ReplayCache(self.params.replay_window_s)
        self.xor_value: Optional[bytes] = None
        self.batch_log: Dict[int, BatchRecord] = {}
        self.division_commits: Dict[int, bytes] = {}
        self.division_values: Dict[int, bytes] = {}
        self.flush_evidence: Dict[Tuple[int, int], bytes] = {}  # (l1, seq) -> signed payload
        self.drop_log: Dict[Tuple[int, int, int], str] = {}     # (l1, seq, pos) -> cause
        self.dispatch_index: Dict[bytes, Tuple[int, int]] = {}  # tm hash -> (round, dest node)
        self.tamper_hook = None  # test hook: alter a message between open and dispatch

    # ------------------------------------------------------------------

    def handle(self, src: int, mtype: int, payload: bytes) -> None:
        if mtype == m.FLUSH:
            self._on_flush(src, payload)
        elif mtype == m.DIV_COMMIT:
            value, sig = m.unpack_div_commit(payload)
            if verify(self.registry.pk(src), b"otmix/div-commit" + value, sig):
                self.division_commits[src] = value
        elif mtype == m.DIV_REVEAL:
            self._on_div_reveal(src, payload)
        elif mtype == m.COMMIT:
            pass  # commitments are stored by the audit coordinator
        elif mtype == m.AUDIT_OPEN:
            self._on_audit_open(src, payload)

    def _on_div_reveal(self, src: int, payload: bytes) -> None:
        value, salt, sig = m.unpack_div_reveal(payload)
        if not verify(self.registry.pk(src), b"otmix/div-reveal" + value + salt, sig):
            return
        expect = self.division_commits.get(src)
        if expect is None or hashlib.sha256(value + salt).digest() != expect:
            self.env.log("division_flag", node=src, by=self.party_id)
            return
        self.division_values[src] = value
        if len(self.division_values) == len(self.registry.l3_ids):
            acc = bytes(32)
            for node_id in sorted(self.division_values):
                acc = bytes(a ^ b for a, b in zip(acc, self.division_values[node_id]))
            self.xor_value = acc
            self.env.log("division_ready")
            while len(self.buffer) >= self.params.beta2:
                self._seal_and_dispatch()

    # ------------------------------------------------------------------

    def _on_flush(self, src: int, payload: bytes) -> None:
        if src not in self.registry.l1_ids:
            return
        try:
            seq, blobs, sig, signed = m.unpack_flush(payload)
        except WireError as exc:
            self.env.log("drop", where="l2", cause="malformed_flush", detail=str(exc))
            return
        if not verify(self.registry.pk(src), signed, sig):
            self.env.log("drop", where="l2", cause="bad_flush_sig", l1=src)
            return
        self.flush_evidence[(src, seq)] = payload
        for pos, blob in enumerate(blobs):
            self._ingest(blob, src, seq, pos)
        while len(self.buffer) >= self.params.beta2 and self.xor_value is not None:
            self._seal_and_dispatch()

    def _ingest(self, blob: bytes, l1_id: int, seq: int, pos: int) -> None:
        now = self.now_s
        try:
            box = SealedBox.from_bytes(blob)
            opened = open_box_unverified(self.keys.secret, box)
        except (CryptoError, WireError) as exc:
            # transit alteration: ask the forwarding Level-1 node to justify
            self.drop_log[(l1_id, seq, pos)] = "integrity"
            self.env.log("drop", where="l2", cause="integrity", l1=l1_id, seq=seq, pos=pos)
            self.env.send(
                AUDITOR_ID,
                m.AUDIT_TRIGGER,
                m.pack_json(
                    {
                        "kind": "l2_integrity",
                        "l2": self.party_id,
                        "l1": l1_id,
                        "seq": seq,
                        "pos": pos,
                        "blob": blob.hex(),
                        "detail": str(exc),
                    }
                ),
            )
            return
        try:
            inner = EnvelopeInner.from_bytes(opened.plaintext)
        except WireError:
            self.drop_log[(l1_id, seq, pos)] = "malformed_inner"
            self.env.log("drop", where="l2", cause="malformed_inner", l1=l1_id)
            return
        if inner.l2_id != self.party_id:
            self.drop_log[(l1_id, seq, pos)] = "wrong_node"
            self.env.log("drop", where="l2", cause="wrong_node", embedded=inner.l2_id)
            return
        age = now - inner.ts
        if age > self.params.replay_window_s or age < -_SKEW_TOLERANCE_S:
            self.drop_log[(l1_id, seq, pos)] = "stale_ts"
            self.env.log("drop", where="l2", cause="stale_ts", age=age)
            return
        payload_hash = hashlib.sha256(inner.message.box.to_bytes()).digest()
        if self.replay.seen_recently(payload_hash, inner.message.tag, now):
            self.drop_log[(l1_id, seq, pos)] = "replay"
            self.env.log("drop", where="l2", cause="replay", tag=inner.message.tag.hex()[:16])
            return
        self.replay.record(payload_hash, inner.message.tag, now)
        self.buffer.append(
            _Pending(tm=inner.message, blob=blob, l1_id=l1_id, container_seq=seq, position=pos)
        )
        self.env.log("l2_accept", fill=len(self.buffer))

    # ------------------------------------------------------------------

    def _seal_and_dispatch(self) -> None:
        params = self.params
        inputs = self.buffer[: params.beta2]
        self.buffer = self.buffer[params.beta2 :]
        self.round_no += 1

        perm = list(range(params.beta2))
        self.env.rng.shuffle(perm)
        commitment, opening = commit_perm(perm, self.env.rng)
        shuffled = [inputs[j] for j in perm]
        if self.tamper_hook is not None:
            shuffled = self.tamper_hook(self, self.round_no, shuffled)

        commit_payload = m.pack_commit(
            COMMIT_BATCH,
            self.round_no,
            commitment.to_bytes(),
            sign(
                self.keys.secret,
                b"otmix/commit" + bytes([COMMIT_BATCH]) + self.round_no.to_bytes(8, "big") + commitment.to_bytes(),
            ),
        )
        self.env.send_many(
            self.registry.l2_ids + self.registry.l3_ids + [AUDITOR_ID], m.COMMIT, commit_payload
        )

        division = compute_division(self.xor_value, self.round_no, self.registry.l3_ids, params)
        bucket_hashes: Dict[int, bytes] = {}
        sent_real = 0
        for i, node_id in enumerate(division.active_ids):
            block = division.partition[i]
            tms = tuple(shuffled[j].tm for j in block)
            sent_real += len(tms)
            for tm in tms:
                self.dispatch_index[hashlib.sha256(tm.to_bytes()).digest()] = (self.round_no, node_id)
            bucket_hashes[node_id] = self._send_bucket(node_id, tms, division)
        for node_id in division.passive_ids:
            tms = tuple(make_dummy_message(self.env.rng) for _ in range(params.bucket_size))
            bucket_hashes[node_id] = self._send_bucket(node_id, tms, division)

        self.batch_log[self.round_no] = BatchRecord(
            round_no=self.round_no,
            inputs=inputs,
            perm=tuple(perm),
            opening=opening,
            commitment=commitment.to_bytes(),
            division=division,
            bucket_hashes=bucket_hashes,
        )
        self.env.log(
            "l2_dispatch",
            round=self.round_no,
            active=list(division.active_ids),
            real=sent_real,
            dummies=params.dummies_per_round,
        )

    def _send_bucket(self, node_id: int, tms: Tuple[TaggedMessage, ...], division: RoundDivision) -> bytes:
        bucket = Bucket(round_no=self.round_no, origin_l2=self.party_id, messages=tms)
        raw = bucket.to_bytes()
        payload = m.pack_bucket_msg(raw, sign(self.keys.secret, raw))
        if not self.env.send(node_id, m.BUCKET, payload):
            # node failure: hand the bucket to a substitute Level-3 node
            for sub in division.passive_ids + division.active_ids:
                if sub != node_id and self.env.send(sub, m.BUCKET, payload):
                    self.env.log("l2_failover", down=node_id, substitute=sub, round=self.round_no)
                    break
        return hashlib.sha256(raw).digest()

    # ------------------------------------------------------------------

    def _on_audit_open(self, src: int, payload: bytes) -> None:
        if src != AUDITOR_ID:
            return
        req = m.unpack_json(payload)
        scope = req.get("scope")
        if scope == "batch":
            self._audit_batch(src, req)
        elif scope == "find_blob":
            self._audit_find_blob(src, req)

    def _audit_batch(self, src: int, req: dict) -> None:
        record = self.batch_log.get(req["round"])
        if record is None:
            self.env.send(src, m.AUDIT_RESPOND, m.pack_json({"found": False, "case": req.get("case")}))
            return
        flush_refs = sorted({(p.l1_id, p.container_seq) for p in record.inputs})
        resp = {
            "case": req.get("case"),
            "found": True,
            "round": record.round_no,
            "perm": list(record.perm),
            "blinding": record.opening.blinding.to_bytes().hex(),
            "commitment": record.commitment.hex(),
            "inputs": [
                {
                    "l1": p.l1_id,
                    "seq": p.container_seq,
                    "pos": p.position,
                    "blob": p.blob.hex(),
                    "tm": p.tm.to_bytes().hex(),
                    "dh": reveal_box_dh(self.keys.secret, SealedBox.from_bytes(p.blob)).hex(),
                }
                for p in record.inputs
            ],
            "active": list(record.division.active_ids),
            "partition": [list(b) for b in record.division.partition],
            "buckets": {str(k): v.hex() for k, v in record.bucket_hashes.items()},
            "flushes": {
                f"{l1}:{seq}": self.flush_evidence.get((l1, seq), b"").hex()
                for l1, seq in flush_refs
            },
        }
        self.env.send(src, m.AUDIT_RESPOND, m.pack_json(resp))

    def _audit_find_blob(self, src: int, req: dict) -> None:
        key = (req["l1"], req["seq"], req["pos"])
        cause = self.drop_log.get(key)
        if cause is not None:
            self.env.send(
                src, m.AUDIT_RESPOND, m.pack_json({"case": req.get("case"), "state": "dropped", "cause": cause})
            )
            return
        for record in self.batch_log.values():
            for p in record.inputs:
                if (p.l1_id, p.container_seq, p.position) == key:
                    tm_hash = hashlib.sha256(p.tm.to_bytes()).digest()
                    round_no, dest = self.dispatch_index.get(tm_hash, (record.round_no, 0))
                    self.env.send(
                        src,
                        m.AUDIT_RESPOND,
                        m.pack_json(
                            {
                                "case": req.get("case"),
                                "state": "dispatched",
                                "round": round_no,
                                "dest": dest,
                                "tm_hash": tm_hash.hex(),
                            }
                        ),
                    )
                    return
        for p in self.buffer:
            if (p.l1_id, p.container_seq, p.position) == key:
                self.env.send(
                    src, m.AUDIT_RESPOND, m.pack_json({"case": req.get("case"), "state": "buffered"})
                )
                return
        self.env.send(
            src, m.AUDIT_RESPOND, m.pack_json({"case": req.get("case"), "state": "never_received"})
        )

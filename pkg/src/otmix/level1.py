"""Level-1 node: entry point of the mix cascade.

Accepts sender submissions, strips the sender's transport identity,
accumulates one container per Level-2 node, and at exactly beta1 entries
shuffles the container, broadcasts a commitment to the shuffle, and
forwards the set.  Who sent what is recorded only in a confidential
per-flush log that is opened scope-by-scope during audits.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, List, Tuple

from . import messages as m
from .crypto import PermOpening, commit_perm, sign, verify
from .registry import AUDITOR_ID, Registry, Topology
from .runtime import Env, Party
from .wire import Envelope, WireError

__all__ = ["Level1Node", "FlushRecord"]

COMMIT_CONTAINER = 1
COMMIT_BATCH = 2


@dataclass
class _Entry:
    blob: bytes          # the outer sealed box, hint stripped
    sender_id: int       # confidential; never forwarded
    sender_sig: bytes    # sender's signature over the full envelope
    envelope: bytes      # original submission, kept for audit only


@dataclass
class FlushRecord:
    """Confidential audit log for one flushed container."""

    l2_id: int
    container_seq: int
    entries: List[_Entry]
    perm: Tuple[int, ...]          # outputs[i] = entries[perm[i]]
    opening: PermOpening
    commitment: bytes
    output_hashes: List[bytes]


class Level1Node(Party):
    def __init__(self, party_id: int, env: Env, topology: Topology):
        super().__init__(party_id, env)
        self.registry: Registry = topology.registry
        self.keys = topology.keypair(party_id)
        self.params = self.registry.params
        self.containers: Dict[int, List[_Entry]] = {i: [] for i in self.registry.l2_ids}
        self.flush_seq = 0
        self.flush_log: Dict[int, FlushRecord] = {}
        self.failure_reports = 0
        self.report_threshold = 1  # strictest: any verified non-posting triggers a trace
        self.tamper_hook = None    # test hook: fault injection for audit scenarios

    # ------------------------------------------------------------------

    def handle(self, src: int, mtype: int, payload: bytes) -> None:
        if mtype == m.SUBMIT:
            self._on_submit(src, payload)
        elif mtype == m.SENDER_REPORT:
            self._on_report(src, payload)
        elif mtype == m.AUDIT_OPEN:
            self._on_audit_open(src, payload)

    def _on_submit(self, src: int, payload: bytes) -> None:
        try:
            env_bytes, sig = m.unpack_submit(payload)
            envelope = Envelope.from_bytes(env_bytes)
        except WireError as exc:
            self.env.log("drop", where="l1", cause="malformed", detail=str(exc))
            self.env.send(src, m.SUBMIT_ERR, b"malformed")
            return
        if not verify(self.registry.pk(src), env_bytes, sig):
            self.env.log("drop", where="l1", cause="bad_submit_sig", sender=src)
            self.env.send(src, m.SUBMIT_ERR, b"bad-signature")
            return
        if envelope.l2_hint not in self.containers:
            self.env.log("drop", where="l1", cause="unknown_l2", hint=envelope.l2_hint)
            self.env.send(src, m.SUBMIT_ERR, b"unknown-l2")
            return

        env_hash = hashlib.sha256(env_bytes).digest()
        receipt_sig = sign(
            self.keys.secret,
            b"otmix/receipt" + env_hash + src.to_bytes(2, "big"),
        )
        self.env.send(src, m.SUBMIT_ACK, m.pack_receipt(env_hash, self.now_s, receipt_sig))

        container = self.containers[envelope.l2_hint]
        container.append(
            _Entry(
                blob=envelope.outer.to_bytes(),
                sender_id=src,
                sender_sig=sig,
                envelope=env_bytes,
            )
        )
        self.env.log("l1_accept", l2=envelope.l2_hint, fill=len(container))
        if len(container) == self.params.beta1:
            self._flush(envelope.l2_hint)

    # ------------------------------------------------------------------

    def _flush(self, l2_id: int) -> None:
        entries = self.containers[l2_id]
        assert len(entries) == self.params.beta1
        self.containers[l2_id] = []
        self.flush_seq += 1
        seq = self.flush_seq

        perm = list(range(len(entries)))
        self.env.rng.shuffle(perm)
        commitment, opening = commit_perm(perm, self.env.rng)

        outputs = [entries[j].blob for j in perm]
        if self.tamper_hook is not None:
            outputs = self.tamper_hook(self, l2_id, seq, outputs)

        record = FlushRecord(
            l2_id=l2_id,
            container_seq=seq,
            entries=entries,
            perm=tuple(perm),
            opening=opening,
            commitment=commitment.to_bytes(),
            output_hashes=[hashlib.sha256(b).digest() for b in outputs],
        )
        self.flush_log[seq] = record

        # commitment is broadcast before the set itself is sent
        commit_payload = m.pack_commit(
            COMMIT_CONTAINER,
            seq,
            commitment.to_bytes(),
            sign(self.keys.secret, b"otmix/commit" + bytes([COMMIT_CONTAINER]) + seq.to_bytes(8, "big") + commitment.to_bytes()),
        )
        self.env.send_many(self.registry.l2_ids + self.registry.l3_ids + [AUDITOR_ID], m.COMMIT, commit_payload)

        flush_body = m.pack_flush(seq, outputs, b"")
        flush_sig = sign(self.keys.secret, flush_body)
        self.env.send(l2_id, m.FLUSH, flush_body + flush_sig)
        self.env.log("l1_flush", l2=l2_id, seq=seq, size=len(outputs))

    # ------------------------------------------------------------------

    def _on_report(self, src: int, payload: bytes) -> None:
        try:
            env_hash, posted, envelope, receipt = m.unpack_report(payload)
        except WireError:
            return
        if posted:
            self.env.log("l1_report", sender=src, posted=True)
            return
        # a failure report must carry the envelope and our own receipt
        if (
            not envelope
            or hashlib.sha256(envelope).digest() != env_hash
            or len(receipt) != 32 + 8 + 64
        ):
            self.env.log("l1_report_rejected", sender=src, cause="unverifiable")
            return
        r_hash, _, r_sig = m.unpack_receipt(receipt)
        if r_hash != env_hash or not verify(
            self.keys.public, b"otmix/receipt" + env_hash + src.to_bytes(2, "big"), r_sig
        ):
            self.env.log("l1_report_rejected", sender=src, cause="bad_receipt")
            return
        self.failure_reports += 1
        self.env.log("l1_report", sender=src, posted=False, count=self.failure_reports)
        if self.failure_reports >= self.report_threshold:
            trigger = m.pack_json(
                {
                    "kind": "non_posted",
                    "reporter": src,
                    "l1": self.party_id,
                    "env_hash": env_hash.hex(),
                    "envelope": envelope.hex(),
                }
            )
            self.env.send(AUDITOR_ID, m.AUDIT_TRIGGER, trigger)

    # ------------------------------------------------------------------
    # Audit: open exactly one container's log, nothing more.

    def _on_audit_open(self, src: int, payload: bytes) -> None:
        if src != AUDITOR_ID:
            return
        req = m.unpack_json(payload)
        scope = req.get("scope")
        if scope == "container":
            self._audit_container(src, req)
        elif scope == "find_env":
            self._audit_find_env(src, req)

    def _audit_container(self, src: int, req: dict) -> None:
        record = self.flush_log.get(req["seq"])
        if record is None:
            self.env.send(src, m.AUDIT_RESPOND, m.pack_json({"found": False, "case": req.get("case")}))
            return
        resp = {
            "case": req.get("case"),
            "found": True,
            "l2": record.l2_id,
            "seq": record.container_seq,
            "perm": list(record.perm),
            "blinding": record.opening.blinding.to_bytes().hex(),
            "commitment": record.commitment.hex(),
            "inputs": [
                {
                    "sender": e.sender_id,
                    "envelope": e.envelope.hex(),
                    "sender_sig": e.sender_sig.hex(),
                }
                for e in record.entries
            ],
            "outputs": [h.hex() for h in record.output_hashes],
        }
        self.env.send(src, m.AUDIT_RESPOND, m.pack_json(resp))

    def _audit_find_env(self, src: int, req: dict) -> None:
        env_hash = bytes.fromhex(req["env_hash"])
        for l2_id, entries in self.containers.items():
            for e in entries:
                if hashlib.sha256(e.envelope).digest() == env_hash:
                    self.env.send(
                        src,
                        m.AUDIT_RESPOND,
                        m.pack_json({"case": req.get("case"), "state": "buffered", "l2": l2_id}),
                    )
                    return
        for seq, record in self.flush_log.items():
            for pos_out, j in enumerate(record.perm):
                if hashlib.sha256(record.entries[j].envelope).digest() == env_hash:
                    self.env.send(
                        src,
                        m.AUDIT_RESPOND,
                        m.pack_json(
                            {
                                "case": req.get("case"),
                                "state": "flushed",
                                "l2": record.l2_id,
                                "seq": seq,
                                "pos": pos_out,
                                "blob_hash": record.output_hashes[pos_out].hex(),
                            }
                        ),
                    )
                    return
        self.env.send(src, m.AUDIT_RESPOND, m.pack_json({"case": req.get("case"), "state": "unknown"}))

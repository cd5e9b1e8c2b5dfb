"""Audit coordinator: trace altered messages and attribute blame.

A case opens only on verifiable evidence (a signed blob that fails its
checks, an integrity failure inside a signed forward, or a non-posting
report backed by the entry node's own receipt); bare claims are
rejected, so nobody can trigger tracing games against honest parties.

Tracing walks the committed permutations backward: at every hop the
coordinator checks that the hop's output is exactly the committed
transform of its signed input.  The first hop that cannot justify its
output is blamed; hops that respond consistently are exonerated; pure
transit losses (a Dolev-Yao drop between two honest hops) close as
inconclusive, blaming nobody.  Nothing in a case transcript reveals any
receiver's OT choice: tracing runs sender-side only.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import messages as m
from .crypto import (
    IntegrityError,
    PermCommitment,
    PermOpening,
    open_box_with_dh_unverified,
    confirm_box_sender,
    verify,
    verify_perm,
)
from .group import GroupError, Scalar
from .level1 import COMMIT_BATCH, COMMIT_CONTAINER
from .registry import Registry, Topology
from .runtime import Env, Party
from .wire import Bucket, DeliveryBlob, Envelope, EnvelopeInner, SealedBox, WireError

__all__ = ["AuditCoordinator", "Verdict"]

CASE_TIMEOUT_MS = 30_000


@dataclass
class Verdict:
    case_id: int
    kind: str
    outcome: str            # "node_malicious" | "sender_input_error" | "inconclusive" | "rejected"
    blamed: Optional[int] = None
    detail: str = ""


@dataclass
class _Case:
    case_id: int
    kind: str
    evidence: dict
    stage: str = "open"
    data: dict = field(default_factory=dict)
    closed: bool = False


class AuditCoordinator(Party):
    """Runs the audit protocol over the same transport as everyone else.

    In a deployment this role is a broadcast among the nodes; the
    harness plays it centrally, which changes nothing about what
    evidence is demanded or accepted.
    """

    def __init__(self, party_id: int, env: Env, topology: Topology):
        super().__init__(party_id, env)
        self.registry: Registry = topology.registry
        self.commitments: Dict[Tuple[int, int, int], bytes] = {}  # (issuer, kind, seq)
        self.cases: Dict[int, _Case] = {}
        self.verdicts: List[Verdict] = []
        self._next_case = 0

    # ------------------------------------------------------------------

    def handle(self, src: int, mtype: int, payload: bytes) -> None:
        if mtype == m.COMMIT:
            kind, seq, commitment, sig, signed = m.unpack_commit(payload)
            expected = b"otmix/commit" + bytes([kind]) + seq.to_bytes(8, "big") + commitment
            if verify(self.registry.pk(src), expected, sig):
                self.commitments[(src, kind, seq)] = commitment
        elif mtype == m.AUDIT_TRIGGER:
            self.open_case(src, m.unpack_json(payload))
        elif mtype == m.AUDIT_RESPOND:
            resp = m.unpack_json(payload)
            case = self.cases.get(resp.get("case", -1))
            if case is not None and not case.closed:
                self._advance(case, src, resp)

    # ------------------------------------------------------------------

    def open_case(self, reporter: int, evidence: dict) -> Optional[int]:
        kind = evidence.get("kind")
        if kind not in ("l2_integrity", "client_retrieval", "non_posted"):
            return None
        if not self._evidence_verifiable(kind, reporter, evidence):
            self._record(
                _Case(case_id=self._next_case, kind=kind or "?", evidence=evidence),
                "rejected",
                None,
                "evidence unverifiable",
            )
            self._next_case += 1
            return None
        case = _Case(case_id=self._next_case, kind=kind, evidence=evidence)
        self._next_case += 1
        self.cases[case.case_id] = case
        self.env.log("audit_open", case=case.case_id, kind=kind)
        self.env.schedule(CASE_TIMEOUT_MS, lambda: self._timeout(case))
        if kind == "l2_integrity":
            case.stage = "l1_container"
            self._ask(evidence["l1"], {"scope": "container", "seq": evidence["seq"], "case": case.case_id})
        elif kind == "client_retrieval":
            if self._direct_l3_check(case):
                return case.case_id
            case.stage = "l3_publication"
            self._ask(
                evidence["node"],
                {"scope": "publication", "ordinal": evidence["ordinal"], "case": case.case_id},
            )
        elif kind == "non_posted":
            case.stage = "l1_find"
            self._ask(evidence["l1"], {"scope": "find_env", "env_hash": evidence["env_hash"], "case": case.case_id})
        return case.case_id

    def _evidence_verifiable(self, kind: str, reporter: int, ev: dict) -> bool:
        try:
            if kind == "l2_integrity":
                return reporter == ev["l2"] and len(bytes.fromhex(ev["blob"])) > 0
            if kind == "client_retrieval":
                return reporter == ev["client"] and ev["node"] in self.registry.l3_ids
            if kind == "non_posted":
                if reporter != ev["l1"]:
                    return False
                env_bytes = bytes.fromhex(ev["envelope"])
                return hashlib.sha256(env_bytes).digest() == bytes.fromhex(ev["env_hash"])
        except (KeyError, ValueError):
            return False
        return False

    def _ask(self, node: int, req: dict) -> None:
        self.env.send(node, m.AUDIT_OPEN, m.pack_json(req))

    def _timeout(self, case: _Case) -> None:
        if not case.closed:
            blamed = case.data.get("awaiting")
            self._record(case, "inconclusive", blamed, f"no response at stage {case.stage}")

    def _record(self, case: _Case, outcome: str, blamed: Optional[int], detail: str) -> None:
        case.closed = True
        v = Verdict(case_id=case.case_id, kind=case.kind, outcome=outcome, blamed=blamed, detail=detail)
        self.verdicts.append(v)
        self.env.log("audit_verdict", case=case.case_id, kind=case.kind, outcome=outcome,
                     blamed=blamed if blamed is not None else -1, detail=detail)

    # ------------------------------------------------------------------

    def _direct_l3_check(self, case: _Case) -> bool:
        """A served blob whose publication signature does not verify is
        attributable without any tracing."""
        ev = case.evidence
        node = ev["node"]
        try:
            blob = DeliveryBlob.from_bytes(bytes.fromhex(ev["blob"]))
        except (WireError, ValueError):
            self._record(case, "node_malicious", node, "served bytes are not a delivery blob")
            return True
        if blob.node_id != node or not verify(
            self.registry.pk(node), b"otmix/publication" + blob.signed_content(), blob.signature
        ):
            self._record(case, "node_malicious", node, "publication signature invalid")
            return True
        case.data["blob"] = blob
        return False

    # ------------------------------------------------------------------

    def _advance(self, case: _Case, src: int, resp: dict) -> None:
        handler = {
            "l1_container": self._stage_l1_container,
            "l3_publication": self._stage_l3_publication,
            "l2_batch": self._stage_l2_batch,
            "l1_container_deep": self._stage_l1_container_deep,
            "l1_find": self._stage_l1_find,
            "l2_find": self._stage_l2_find,
            "l3_find": self._stage_l3_find,
        }.get(case.stage)
        if handler is not None:
            handler(case, src, resp)

    # -- case A: integrity failure detected at Level 2 ------------------

    def _check_container(
        self, l1: int, resp: dict
    ) -> Tuple[Optional[str], Optional[List[dict]], Optional[List[bytes]]]:
        """Shared container verification.  Returns (error, inputs,
        recomputed output hashes); error names the inconsistency."""
        if not resp.get("found"):
            return "no container record", None, None
        seq = resp["seq"]
        broadcast = self.commitments.get((l1, COMMIT_CONTAINER, seq))
        commitment = bytes.fromhex(resp["commitment"])
        if broadcast is None or broadcast != commitment:
            return "commitment missing or mismatched", None, None
        try:
            opening = PermOpening(
                perm=tuple(resp["perm"]), blinding=Scalar.from_bytes(bytes.fromhex(resp["blinding"]))
            )
            if not verify_perm(PermCommitment.from_bytes(commitment), opening):
                return "permutation opening invalid", None, None
        except (GroupError, ValueError):
            return "permutation opening malformed", None, None
        inputs = resp["inputs"]
        try:
            outers = []
            for item in inputs:
                env = Envelope.from_bytes(bytes.fromhex(item["envelope"]))
                outers.append(env.outer.to_bytes())
        except (WireError, ValueError):
            return "input envelopes malformed", None, None
        perm = resp["perm"]
        if sorted(perm) != list(range(len(inputs))):
            return "permutation domain mismatch", None, None
        recomputed = [hashlib.sha256(outers[j]).digest() for j in perm]
        return None, inputs, recomputed

    def _stage_l1_container(self, case: _Case, src: int, resp: dict) -> None:
        ev = case.evidence
        l1 = ev["l1"]
        err, inputs, recomputed = self._check_container(l1, resp)
        if err:
            self._record(case, "node_malicious", l1, err)
            return
        pos = ev["pos"]
        if pos >= len(recomputed):
            self._record(case, "node_malicious", l1, "position outside container")
            return
        blob_hash = hashlib.sha256(bytes.fromhex(ev["blob"])).digest()
        if recomputed[pos] != blob_hash:
            self._record(case, "node_malicious", l1, "forwarded set differs from committed transform")
            return
        # the forward matches the sender-signed input: the input itself was bad
        perm = resp["perm"]
        item = inputs[perm[pos]]
        sender = item["sender"]
        env_bytes = bytes.fromhex(item["envelope"])
        if not self.registry.knows(sender) or not verify(
            self.registry.pk(sender), env_bytes, bytes.fromhex(item["sender_sig"])
        ):
            self._record(case, "node_malicious", l1, "accepted input without valid sender signature")
            return
        self._record(case, "sender_input_error", None, f"input from {sender} was in error at entry")

    # -- case B: bad retrieval traced backward ---------------------------

    def _stage_l3_publication(self, case: _Case, src: int, resp: dict) -> None:
        ev = case.evidence
        node = ev["node"]
        if not resp.get("found"):
            self._record(case, "node_malicious", node, "no publication record for served blob")
            return
        if resp.get("prefill") or resp.get("origin_l2", 0) == 0:
            self._record(case, "inconclusive", None, "retrieved entry was chaff")
            return
        blob: DeliveryBlob = case.data["blob"]
        tm_bytes = blob.message.to_bytes()
        bucket_msg = bytes.fromhex(resp.get("bucket_msg", ""))
        origin = resp["origin_l2"]
        try:
            raw, sig = m.unpack_bucket_msg(bucket_msg)
            if not verify(self.registry.pk(origin), raw, sig):
                self._record(case, "node_malicious", node, "bucket evidence not signed by origin")
                return
            bucket = Bucket.from_bytes(raw)
        except (WireError, ValueError):
            self._record(case, "node_malicious", node, "bucket evidence missing or malformed")
            return
        if not any(t.to_bytes() == tm_bytes for t in bucket.messages):
            self._record(case, "node_malicious", node, "published message not in the signed bucket")
            return
        case.data["origin"] = origin
        case.data["round"] = resp["round"]
        case.stage = "l2_batch"
        case.data["awaiting"] = origin
        self._ask(origin, {"scope": "batch", "round": resp["round"], "case": case.case_id})

    def _stage_l2_batch(self, case: _Case, src: int, resp: dict) -> None:
        l2 = case.data["origin"]
        if not resp.get("found"):
            self._record(case, "node_malicious", l2, "no batch record for dispatched round")
            return
        round_no = resp["round"]
        broadcast = self.commitments.get((l2, COMMIT_BATCH, round_no))
        commitment = bytes.fromhex(resp["commitment"])
        if broadcast is None or broadcast != commitment:
            self._record(case, "node_malicious", l2, "batch commitment missing or mismatched")
            return
        try:
            opening = PermOpening(
                perm=tuple(resp["perm"]), blinding=Scalar.from_bytes(bytes.fromhex(resp["blinding"]))
            )
            if not verify_perm(PermCommitment.from_bytes(commitment), opening):
                self._record(case, "node_malicious", l2, "batch permutation opening invalid")
                return
        except (GroupError, ValueError):
            self._record(case, "node_malicious", l2, "batch opening malformed")
            return
        blob: DeliveryBlob = case.data["blob"]
        tm_hex = blob.message.to_bytes().hex()
        perm = resp["perm"]
        inputs = resp["inputs"]
        slot = None
        for k, j in enumerate(perm):
            if j < len(inputs) and inputs[j]["tm"] == tm_hex:
                slot = j
                break
        if slot is None:
            self._record(case, "node_malicious", l2, "published message not derivable from committed batch")
            return
        item = inputs[slot]
        # check the claimed decryption against the revealed DH point
        try:
            box = SealedBox.from_bytes(bytes.fromhex(item["blob"]))
            opened = open_box_with_dh_unverified(
                bytes.fromhex(item["dh"]), self.registry.pk(l2), box
            )
            inner = EnvelopeInner.from_bytes(opened.plaintext)
        except (IntegrityError, GroupError, WireError, ValueError):
            self._record(case, "node_malicious", l2, "cannot justify decryption of claimed input")
            return
        if inner.message.to_bytes() != blob.message.to_bytes():
            self._record(case, "node_malicious", l2, "dispatched message differs from true decryption")
            return
        # provenance must chain to a Level-1 signed flush containing this blob
        flush_hex = resp.get("flushes", {}).get(f"{item['l1']}:{item['seq']}", "")
        try:
            fseq, fblobs, fsig, fsigned = m.unpack_flush(bytes.fromhex(flush_hex))
            if not verify(self.registry.pk(item["l1"]), fsigned, fsig):
                raise WireError("bad flush signature")
            if fseq != item["seq"] or item["pos"] >= len(fblobs) or fblobs[item["pos"]] != bytes.fromhex(item["blob"]):
                raise WireError("flush does not contain claimed blob")
        except (WireError, ValueError):
            self._record(case, "node_malicious", l2, "input provenance not backed by signed flush")
            return
        case.data["l1"] = item["l1"]
        case.data["l1_seq"] = item["seq"]
        case.data["l1_pos"] = item["pos"]
        case.data["l2_blob"] = item["blob"]
        case.data["sender_opened"] = opened
        case.stage = "l1_container_deep"
        case.data["awaiting"] = item["l1"]
        self._ask(item["l1"], {"scope": "container", "seq": item["seq"], "case": case.case_id})

    def _stage_l1_container_deep(self, case: _Case, src: int, resp: dict) -> None:
        l1 = case.data["l1"]
        err, inputs, recomputed = self._check_container(l1, resp)
        if err:
            self._record(case, "node_malicious", l1, err)
            return
        pos = case.data["l1_pos"]
        blob_hash = hashlib.sha256(bytes.fromhex(case.data["l2_blob"])).digest()
        if pos >= len(recomputed) or recomputed[pos] != blob_hash:
            self._record(case, "node_malicious", l1, "forwarded set differs from committed transform")
            return
        perm = resp["perm"]
        item = inputs[perm[pos]]
        sender = item["sender"]
        if not self.registry.knows(sender) or not verify(
            self.registry.pk(sender), bytes.fromhex(item["envelope"]), bytes.fromhex(item["sender_sig"])
        ):
            self._record(case, "node_malicious", l1, "accepted input without valid sender signature")
            return
        opened = case.data["sender_opened"]
        if confirm_box_sender(self.registry.pk(sender), opened):
            # the message traversed every hop intact; the failure originated
            # with the sender's own input
            self._record(case, "sender_input_error", None, f"payload from {sender} was in error at entry")
        else:
            self._record(
                case, "sender_input_error", None, f"input from {sender} carried an invalid inner signature"
            )

    # -- case C: accepted but never posted -------------------------------

    def _stage_l1_find(self, case: _Case, src: int, resp: dict) -> None:
        l1 = case.evidence["l1"]
        state = resp.get("state")
        if state == "unknown":
            self._record(case, "node_malicious", l1, "receipted submission has no record")
        elif state == "buffered":
            self._record(case, "inconclusive", None, "submission still awaiting container fill")
        elif state == "flushed":
            case.data.update(l2=resp["l2"], seq=resp["seq"], pos=resp["pos"])
            case.stage = "l2_find"
            case.data["awaiting"] = resp["l2"]
            self._ask(
                resp["l2"],
                {"scope": "find_blob", "l1": l1, "seq": resp["seq"], "pos": resp["pos"], "case": case.case_id},
            )
        else:
            self._record(case, "inconclusive", l1, "unrecognized response")

    def _stage_l2_find(self, case: _Case, src: int, resp: dict) -> None:
        state = resp.get("state")
        if state == "never_received":
            self._record(case, "inconclusive", None, "forward lost in transit before Level 2")
        elif state == "dropped":
            self._record(case, "inconclusive", None, f"dropped at Level 2: {resp.get('cause')}")
        elif state == "buffered":
            self._record(case, "inconclusive", None, "awaiting batch fill at Level 2")
        elif state == "dispatched":
            dest = resp.get("dest", 0)
            if dest == 0:
                self._record(case, "inconclusive", case.data.get("l2"), "dispatch destination unknown")
                return
            case.data["l3"] = dest
            case.stage = "l3_find"
            case.data["awaiting"] = dest
            self._ask(dest, {"scope": "find_tm", "tm_hash": resp["tm_hash"], "case": case.case_id})
        else:
            self._record(case, "inconclusive", case.data.get("l2"), "unrecognized response")

    def _stage_l3_find(self, case: _Case, src: int, resp: dict) -> None:
        l3 = case.data["l3"]
        state = resp.get("state")
        if state == "published":
            self._record(case, "rejected", None, "message was in fact published; claim unfounded")
        elif state == "in_ring":
            # every arrival must be published within the repository deadline
            limit_ms = int(self.registry.params.tau_s * 1500)
            if self.now_ms - resp.get("arrival_ms", self.now_ms) > limit_ms:
                self._record(case, "node_malicious", l3, "message withheld past the publication deadline")
            else:
                self._record(case, "inconclusive", None, "message still awaiting publication")
        elif state == "never_received":
            self._record(case, "inconclusive", None, "bucket lost in transit before Level 3")
        else:
            self._record(case, "inconclusive", l3, "unrecognized response")

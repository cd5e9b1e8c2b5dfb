"""Level-3 node: repository, publication, bulletin board, OT delivery.

Maintains the ring of the lam most recent buckets, periodically moves a
fixed quota from every bucket into the publication repository (posting
tags on the bulletin board), serves retrievals through 1-out-of-zeta
oblivious transfer over an immutable snapshot of the repository, and
participates in the commit-reveal ceremony that seeds the per-round
active/passive division.  A pool-mode flag switches publication to
uniform draws over the whole repository (higher entropy, no latency
bound).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from . import messages as m
from .crypto import OtSession, ot_sender_init, ot_sender_respond, sign, verify
from .group import GroupElement, GroupError
from .registry import AUDITOR_ID, Registry, Topology
from .rounds import make_dummy_message
from .runtime import Env, Party
from .wire import (
    BoardEntry,
    Bucket,
    DeliveryBlob,
    PublicationEntry,
    TaggedMessage,
    WireError,
)

__all__ = ["Level3Node"]


@dataclass
class _Stored:
    tm_bytes: bytes
    tag: bytes
    origin_l2: int
    round_no: int
    arrival_ms: int
    prefill: bool


@dataclass
class _BucketState:
    entries: List[_Stored]
    origin_l2: int
    round_no: int
    arrival_ms: int


@dataclass
class _OtServe:
    session: OtSession
    strings: List[bytes]
    window_end: int


class Level3Node(Party):
    def __init__(
        self,
        party_id: int,
        env: Env,
        topology: Topology,
        pool_mode: Optional[bool] = None,
        persistence_path: Optional[str] = None,
    ):
        super().__init__(party_id, env)
        self.registry: Registry = topology.registry
        self.keys = topology.keypair(party_id)
        self.params = self.registry.params
        self.pool_mode = self.params.pool_mode if pool_mode is None else pool_mode
        self.persistence_path = persistence_path
        self.ring: List[_BucketState] = []
        self.repo: List[PublicationEntry] = []
        self.board: List[BoardEntry] = []
        self.next_ordinal = 0
        self.publication_no = 0
        self.pub_meta: Dict[int, Tuple[int, int, bool]] = {}  # ordinal -> (origin, round, prefill)
        self.bucket_evidence: Dict[Tuple[int, int], bytes] = {}  # (origin, round) -> signed payload
        self.tm_index: Dict[bytes, int] = {}  # sha256(tm) -> ordinal (or -1 while in the ring)
        self.ot_serves: Dict[Tuple[int, int], _OtServe] = {}
        self._pad_cache: List[bytes] = []
        self.division_value: Optional[bytes] = None
        self.division_salt: Optional[bytes] = None
        self.division_commits: Dict[int, bytes] = {}
        self.division_values: Dict[int, bytes] = {}
        self.xor_value: Optional[bytes] = None
        self.publish_tamper_hook = None  # test hook: alter blobs at publication
        self.serve_tamper_hook = None    # test hook: alter blobs when serving OT
        if self.persistence_path:
            self._restore_publications()

    # ------------------------------------------------------------------

    def start(self) -> None:
        # cold start: the ring is prefilled with chaff so early draws are full
        for _ in range(self.params.lam):
            entries = [
                self._stored_from(make_dummy_message(self.env.rng), 0, 0, prefill=True)
                for _ in range(self.params.bucket_size)
            ]
            self.ring.append(_BucketState(entries=entries, origin_l2=0, round_no=0, arrival_ms=0))
        self.division_initiation()
        self._schedule_publication()

    def _stored_from(self, tm: TaggedMessage, origin: int, round_no: int, prefill: bool) -> _Stored:
        return _Stored(
            tm_bytes=tm.to_bytes(),
            tag=tm.tag,
            origin_l2=origin,
            round_no=round_no,
            arrival_ms=self.now_ms,
            prefill=prefill,
        )

    def _schedule_publication(self) -> None:
        period = max(1, int(self.params.publication_period_s * 1000))

        def step():
            self.publication_step()
            self.env.schedule(period, step)

        self.env.schedule(period, step)

    # ------------------------------------------------------------------
    # Active/passive division: initiation ceremony

    def division_initiation(self) -> None:
        """Commit-then-reveal of this node's random share of the division
        seed; run once at network start."""
        rng = self.env.rng
        self.division_value = rng.getrandbits(256).to_bytes(32, "big")
        self.division_salt = rng.getrandbits(256).to_bytes(32, "big")
        commitment = hashlib.sha256(self.division_value + self.division_salt).digest()
        payload = m.pack_div_commit(
            commitment, sign(self.keys.secret, b"otmix/div-commit" + commitment)
        )
        peers = self.registry.l2_ids + [i for i in self.registry.l3_ids if i != self.party_id]
        self.env.send_many(peers, m.DIV_COMMIT, payload)
        self.division_commits[self.party_id] = commitment
        self.division_values[self.party_id] = self.division_value
        self._maybe_reveal()

    def _maybe_reveal(self) -> None:
        if self.division_value is None or self.xor_value is not None:
            return
        if len(self.division_commits) == len(self.registry.l3_ids):
            payload = m.pack_div_reveal(
                self.division_value,
                self.division_salt,
                sign(self.keys.secret, b"otmix/div-reveal" + self.division_value + self.division_salt),
            )
            peers = self.registry.l2_ids + [i for i in self.registry.l3_ids if i != self.party_id]
            self.env.send_many(peers, m.DIV_REVEAL, payload)
            self._maybe_finish_division()

    def _maybe_finish_division(self) -> None:
        if len(self.division_values) == len(self.registry.l3_ids) and self.xor_value is None:
            acc = bytes(32)
            for node_id in sorted(self.division_values):
                acc = bytes(a ^ b for a, b in zip(acc, self.division_values[node_id]))
            self.xor_value = acc
            self.env.log("division_ready")

    # ------------------------------------------------------------------

    def handle(self, src: int, mtype: int, payload: bytes) -> None:
        if mtype == m.BUCKET:
            self._on_bucket(src, payload)
        elif mtype == m.BOARD_READ:
            self._on_board_read(src, payload)
        elif mtype == m.OT_REQUEST:
            self._on_ot_request(src, payload)
        elif mtype == m.OT_CHOOSE:
            self._on_ot_choose(src, payload)
        elif mtype == m.DIV_COMMIT:
            value, sig = m.unpack_div_commit(payload)
            if verify(self.registry.pk(src), b"otmix/div-commit" + value, sig):
                self.division_commits[src] = value
                self._maybe_reveal()
        elif mtype == m.DIV_REVEAL:
            self._on_div_reveal(src, payload)
        elif mtype == m.COMMIT:
            pass  # broadcast commitments are collected by the audit coordinator
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
        self._maybe_finish_division()

    # ------------------------------------------------------------------

    def _on_bucket(self, src: int, payload: bytes) -> None:
        if src not in self.registry.l2_ids:
            return
        try:
            raw, sig = m.unpack_bucket_msg(payload)
        except WireError:
            self.env.log("drop", where="l3", cause="malformed_bucket")
            return
        if not verify(self.registry.pk(src), raw, sig):
            self.env.log("drop", where="l3", cause="bad_bucket_sig", l2=src)
            return
        try:
            bucket = Bucket.from_bytes(raw)
        except WireError:
            self.env.log("drop", where="l3", cause="malformed_bucket")
            return
        self.bucket_evidence[(bucket.origin_l2, bucket.round_no)] = payload
        entries = [
            self._stored_from(tm, bucket.origin_l2, bucket.round_no, prefill=False)
            for tm in bucket.messages
        ]
        for e in entries:
            self.tm_index[hashlib.sha256(e.tm_bytes).digest()] = -1
        self.ring.append(
            _BucketState(
                entries=entries,
                origin_l2=bucket.origin_l2,
                round_no=bucket.round_no,
                arrival_ms=self.now_ms,
            )
        )
        self.env.log("l3_bucket", l2=src, round=bucket.round_no, ring=len(self.ring))
        if len(self.ring) > self.params.lam:
            evicted = self.ring.pop(0)
            if evicted.entries:
                if self.pool_mode:
                    # the pool keeps a residual: leftovers stay eligible
                    self.ring[0].entries.extend(evicted.entries)
                else:
                    # oldest bucket is fully drained before eviction, so
                    # nothing ever leaves the repository unpublished
                    self._publish(evicted.entries, reason="evict")
                evicted.entries = []

    # ------------------------------------------------------------------

    def publication_step(self) -> None:
        """Move a quota of messages from the repository into the
        publication repository and post their tags."""
        self.publication_no += 1
        chosen: List[_Stored] = []
        if self.pool_mode:
            pool = [(bi, ei) for bi, b in enumerate(self.ring) for ei in range(len(b.entries))]
            count = min(self.params.bucket_size, len(pool))
            for flat in sorted(self.env.rng.sample(range(len(pool)), count), reverse=True):
                bi, ei = pool[flat]
                chosen.append(self.ring[bi].entries.pop(ei))
        else:
            for bucket in self.ring:
                quota = min(self.params.draw_per_bucket, len(bucket.entries))
                if quota == 0:
                    continue
                for ei in sorted(self.env.rng.sample(range(len(bucket.entries)), quota), reverse=True):
                    chosen.append(bucket.entries.pop(ei))
        if chosen:
            self._publish(chosen, reason="step")

    def _publish(self, stored: List[_Stored], reason: str) -> None:
        now = self.now_s
        for s in stored:
            ordinal = self.next_ordinal
            self.next_ordinal += 1
            tm = TaggedMessage.from_bytes(s.tm_bytes)
            if self.publish_tamper_hook is not None:
                tm = self.publish_tamper_hook(self, tm, ordinal)
            sig = sign(
                self.keys.secret,
                b"otmix/publication"
                + tm.to_bytes()
                + self.party_id.to_bytes(2, "big")
                + ordinal.to_bytes(8, "big"),
            )
            blob = DeliveryBlob(message=tm, node_id=self.party_id, ordinal=ordinal, signature=sig)
            entry = PublicationEntry(tag=tm.tag, ordinal=ordinal, published_at=now, blob=blob)
            self.repo.append(entry)
            self.board.append(BoardEntry(ordinal=ordinal, tag=tm.tag, published_at=now))
            self.pub_meta[ordinal] = (s.origin_l2, s.round_no, s.prefill)
            self.tm_index[hashlib.sha256(s.tm_bytes).digest()] = ordinal
            if self.persistence_path:
                self._persist_entry(entry)
            if len(self.repo) > self.params.gamma:
                self.repo.pop(0)  # oldest evicted first
            self.env.log(
                "publish",
                tag=s.tag.hex(),
                ordinal=ordinal,
                dwell_ms=self.now_ms - s.arrival_ms,
                prefill=s.prefill,
                reason=reason,
                origin=s.origin_l2,
                round=s.round_no,
            )

    # ------------------------------------------------------------------
    # Publication persistence: an append-only file of length-prefixed
    # entries, so delivery survives node restarts.

    def _persist_entry(self, entry: PublicationEntry) -> None:
        raw = entry.to_bytes()
        with open(self.persistence_path, "ab") as fh:
            fh.write(len(raw).to_bytes(4, "big") + raw)

    def _restore_publications(self) -> None:
        try:
            blob = open(self.persistence_path, "rb").read()
        except FileNotFoundError:
            return
        off = 0
        while off + 4 <= len(blob):
            n = int.from_bytes(blob[off : off + 4], "big")
            off += 4
            if off + n > len(blob):
                break  # torn tail write: ignore the partial record
            try:
                entry = PublicationEntry.from_bytes(blob[off : off + n])
            except WireError:
                break
            off += n
            self.repo.append(entry)
            self.board.append(
                BoardEntry(ordinal=entry.ordinal, tag=entry.tag, published_at=entry.published_at)
            )
            self.next_ordinal = max(self.next_ordinal, entry.ordinal + 1)
            self.tm_index[hashlib.sha256(entry.blob.message.to_bytes()).digest()] = entry.ordinal
        if len(self.repo) > self.params.gamma:
            self.repo = self.repo[-self.params.gamma :]

    # ------------------------------------------------------------------

    def _on_board_read(self, src: int, payload: bytes) -> None:
        try:
            cursor = m.unpack_board_read(payload)
        except WireError:
            return
        start = 0
        # board ordinals are dense, so index arithmetic beats scanning
        if self.board and cursor > self.board[0].ordinal:
            start = min(len(self.board), cursor - self.board[0].ordinal)
        entries = self.board[start : start + 256]
        next_cursor = entries[-1].ordinal + 1 if entries else cursor
        self.env.send(src, m.BOARD_ENTRIES, m.pack_board_entries(entries, next_cursor))

    # ------------------------------------------------------------------
    # OT delivery

    def _ot_snapshot(self) -> Tuple[List[bytes], int]:
        """The zeta most recent delivery blobs, front-padded with chaff
        blobs while the repository is still young."""
        zeta = self.params.zeta
        entries = self.repo[-zeta:]
        strings = [e.blob.to_bytes() for e in entries]
        need = zeta - len(strings)
        while len(self._pad_cache) < need:
            tm = make_dummy_message(self.env.rng)
            sig = sign(
                self.keys.secret,
                b"otmix/publication" + tm.to_bytes() + self.party_id.to_bytes(2, "big") + bytes(8),
            )
            self._pad_cache.append(
                DeliveryBlob(message=tm, node_id=self.party_id, ordinal=0, signature=sig).to_bytes()
            )
        return self._pad_cache[:need] + strings, self.next_ordinal

    def _on_ot_request(self, src: int, payload: bytes) -> None:
        try:
            sid = m.unpack_ot_request(payload)
        except WireError:
            return
        strings, window_end = self._ot_snapshot()
        if self.serve_tamper_hook is not None:
            strings = self.serve_tamper_hook(self, strings)
        session = ot_sender_init(self.params.zeta, self.env.rng)
        self.ot_serves[(src, sid)] = _OtServe(session=session, strings=strings, window_end=window_end)
        self.env.send(
            src,
            m.OT_INIT,
            m.pack_ot_init(
                sid,
                session.sender_point.to_bytes(),
                window_end,
                self.params.zeta,
                len(strings[0]) if strings else 0,
            ),
        )
        self.env.log("ot_request", client=src, session=sid, window_end=window_end)

    def _on_ot_choose(self, src: int, payload: bytes) -> None:
        try:
            sid, point = m.unpack_ot_choose(payload)
        except WireError:
            return
        serve = self.ot_serves.pop((src, sid), None)
        if serve is None:
            return
        try:
            receiver_point = GroupElement.from_bytes(point)
        except GroupError:
            self.env.log("drop", where="l3", cause="malformed_ot_point", client=src)
            return
        cts = ot_sender_respond(serve.session, receiver_point, serve.strings)
        self.env.send(src, m.OT_RESPOND, m.pack_ot_respond(sid, cts))
        # the transcript records the same fields whatever was retrieved;
        # the node keeps no record of which index decrypts
        self.env.log("ot_served", client=src, session=sid, count=len(cts))

    # ------------------------------------------------------------------

    def _on_audit_open(self, src: int, payload: bytes) -> None:
        if src != AUDITOR_ID:
            return
        req = m.unpack_json(payload)
        scope = req.get("scope")
        if scope == "publication":
            self._audit_publication(src, req)
        elif scope == "find_tm":
            self._audit_find_tm(src, req)

    def _audit_publication(self, src: int, req: dict) -> None:
        ordinal = req["ordinal"]
        meta = self.pub_meta.get(ordinal)
        if meta is None:
            self.env.send(src, m.AUDIT_RESPOND, m.pack_json({"found": False, "case": req.get("case")}))
            return
        origin, round_no, prefill = meta
        entry = next((e for e in self.repo if e.ordinal == ordinal), None)
        evidence = self.bucket_evidence.get((origin, round_no), b"")
        self.env.send(
            src,
            m.AUDIT_RESPOND,
            m.pack_json(
                {
                    "case": req.get("case"),
                    "found": True,
                    "ordinal": ordinal,
                    "blob": entry.blob.to_bytes().hex() if entry else "",
                    "origin_l2": origin,
                    "round": round_no,
                    "prefill": prefill,
                    "bucket_msg": evidence.hex(),
                }
            ),
        )

    def _audit_find_tm(self, src: int, req: dict) -> None:
        tm_hash = bytes.fromhex(req["tm_hash"])
        state = self.tm_index.get(tm_hash)
        if state is None:
            resp = {"case": req.get("case"), "state": "never_received"}
        elif state == -1:
            arrival = 0
            for b in self.ring:
                for e in b.entries:
                    if hashlib.sha256(e.tm_bytes).digest() == tm_hash:
                        arrival = e.arrival_ms
            resp = {"case": req.get("case"), "state": "in_ring", "arrival_ms": arrival}
        else:
            resp = {"case": req.get("case"), "state": "published", "ordinal": state}
        self.env.send(src, m.AUDIT_RESPOND, m.pack_json(resp))

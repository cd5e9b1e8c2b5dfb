"""Trusted user application.

Manages pair secrets and counters, sends messages through random entry
nodes, monitors bulletin boards, retrieves recognized tags by oblivious
transfer, acknowledges, resends on silence, issues dummy requests and
periodic self-verifications, and runs the in-band handshake that
bootstraps a pair secret from nothing but the peer's public key.

Every sent message is watched for publication (the loop check): the only
two outcomes are "own tag observed on a board" or "failure reported to
the entry node" — there is no silent third state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import messages as m
from .crypto import (
    CryptoError,
    IntegrityError,
    WrongKeyError,
    confirm_box_sender,
    kdf_tag,
    open_box,
    open_box_unverified,
    ot_receiver_choose,
    ot_receiver_recover,
    seal,
    sign,
    verify,
)
from .group import GroupElement, GroupError
from .registry import AUDITOR_ID, Registry, Topology
from .runtime import Env, Party
from .wire import (
    DeliveryBlob,
    Envelope,
    EnvelopeInner,
    FLAG_ACK,
    FLAG_HANDSHAKE,
    Payload,
    TaggedMessage,
    WireError,
    build_envelope,
    unpack_payload_data,
)

__all__ = ["ClientApp", "ClientConfig", "NoSharedSecret"]


class NoSharedSecret(Exception):
    """send() to a peer with no established pair secret (handshake first)."""


@dataclass
class ClientConfig:
    poll_interval_s: float = 2.5
    loop_slack_factor: float = 2.0   # deadline = factor * expected publication + poll
    resend_max: int = 3
    dummies_enabled: bool = True
    self_verify_enabled: bool = True
    auto_handshake_reply: bool = True


@dataclass
class _Pending:
    base_counter: int
    attempts: int
    tag: bytes
    ack_tag: bytes
    tm_bytes: bytes          # the recipient-sealed payload, reused on resend
    envelope: bytes
    deadline_ms: int
    msg_id: int
    l1_id: int


@dataclass
class _Watch:
    """Loop-check record: one of our tags awaiting publication."""

    msg_id: int
    envelope: bytes
    l1_id: int
    receipt: bytes
    deadline_ms: int
    tm_bytes: bytes = b""
    reported: bool = False


@dataclass
class _Pair:
    peer_id: int
    sigma: bytes
    my_dir: int
    counter: int = 1
    pending: Dict[int, _Pending] = field(default_factory=dict)


@dataclass
class _OtFlight:
    kind: str                # "message" | "handshake" | "dummy" | "self_verify"
    node: int
    ordinal: int = 0
    tag: bytes = b""
    peer: int = 0
    counter: int = 0
    session: object = None
    discard: bool = False


class ClientApp(Party):
    def __init__(self, party_id: int, env: Env, topology: Topology, config: Optional[ClientConfig] = None):
        super().__init__(party_id, env)
        self.registry: Registry = topology.registry
        self.keys = topology.keypair(party_id)
        self.params = self.registry.params
        self.config = config or ClientConfig(poll_interval_s=self.params.publication_period_s)
        self.pairs: Dict[int, _Pair] = {}
        self.pending_handshakes: Dict[int, bytes] = {}   # peer -> sigma candidate
        self.cursors: Dict[int, int] = {i: 0 for i in self.registry.l3_ids}
        self.candidates: Dict[bytes, Tuple[int, int]] = {}  # tag -> (peer, counter)
        self.watches: Dict[bytes, List[_Watch]] = {}
        self.archive: List[Tuple[int, int, bytes]] = []  # (node, ordinal, tag) of own posted msgs
        self.sent_tms: Dict[bytes, set] = {}  # tag -> authentic payload bytes we sent under it
        self.seen_rows: set = set()
        self.seen_payloads: set = set()
        self.inbox: List[Tuple[int, bytes]] = []
        self.ot_flights: Dict[int, _OtFlight] = {}
        self._next_sid = 0
        self._next_msg_id = 0
        self._started = False

    # ------------------------------------------------------------------
    # Pair management

    def my_direction(self, peer_id: int) -> int:
        """Direction bit: 0 when our key sorts before the peer's."""
        return 0 if self.keys.public.to_bytes() < self.registry.pk(peer_id).to_bytes() else 1

    def install_pair(self, peer_id: int, sigma: bytes, counter: int = 1) -> None:
        """Adopt an externally established pair secret (pre-shared mode)."""
        pair = _Pair(peer_id=peer_id, sigma=sigma, my_dir=self.my_direction(peer_id), counter=counter)
        self.pairs[peer_id] = pair
        self._refresh_candidates(pair)

    def _refresh_candidates(self, pair: _Pair) -> None:
        self.candidates = {
            t: v for t, v in self.candidates.items() if v[0] != pair.peer_id
        }
        peer_dir = 1 - pair.my_dir
        lo = max(1, pair.counter - self.params.counter_window)
        hi = pair.counter + self.params.counter_window
        counters = set(range(lo, hi + 1)) | set(pair.pending.keys())
        for p in pair.pending.values():
            counters.add(p.base_counter + p.attempts)
        for c in counters:
            self.candidates[kdf_tag(pair.sigma, c, peer_dir)] = (pair.peer_id, c)

    # ------------------------------------------------------------------

    def start(self) -> None:
        self._started = True
        rng = self.env.rng
        poll_ms = max(1, int(self.config.poll_interval_s * 1000))
        for i, node in enumerate(self.registry.l3_ids):
            offset = rng.randrange(poll_ms)

            def make_poll(n=node):
                def poll():
                    self._poll_board(n)
                    self.env.schedule(poll_ms, poll)
                return poll

            self.env.schedule(offset + 1, make_poll())
        self.env.schedule(poll_ms, self._deadline_sweep)
        if self.config.dummies_enabled:
            self._schedule_dummy()
        if self.config.self_verify_enabled:
            self._schedule_self_verify()

    def _schedule_dummy(self) -> None:
        delay = self.env.rng.uniform(1.0, max(1.0, self.params.t2_s))
        self.env.schedule(int(delay * 1000), self._dummy_request)

    def _schedule_self_verify(self) -> None:
        delay = self.env.rng.uniform(1.0, max(1.0, self.params.t1_s))
        self.env.schedule(int(delay * 1000), self._self_verify)

    # ------------------------------------------------------------------
    # Sending

    def expected_publication_s(self) -> float:
        p = self.params
        return p.tau_s + p.q2 * p.tau_s / (2 * p.lam)

    def _loop_deadline_ms(self) -> int:
        extra = self.config.loop_slack_factor * self.expected_publication_s()
        return self.now_ms + int((extra + 2 * self.config.poll_interval_s) * 1000)

    def send(self, peer_id: int, data: bytes) -> int:
        """Queue one message to a peer; returns a local message id."""
        pair = self.pairs.get(peer_id)
        if pair is None:
            raise NoSharedSecret(f"no pair secret with {peer_id}")
        c = pair.counter
        tag = kdf_tag(pair.sigma, c, pair.my_dir)
        ack_tag = kdf_tag(pair.sigma, c, 1 - pair.my_dir)
        msg_id = self._alloc_msg_id()
        envelope, tm, _ = self._build(peer_id, data, 0, tag)
        l1 = self._submit(envelope)
        deadline = self._loop_deadline_ms()
        tm_bytes = tm.to_bytes()
        pair.pending[c] = _Pending(
            base_counter=c,
            attempts=0,
            tag=tag,
            ack_tag=ack_tag,
            tm_bytes=tm_bytes,
            envelope=envelope.to_bytes(),
            deadline_ms=deadline,
            msg_id=msg_id,
            l1_id=l1,
        )
        self._watch(tag, msg_id, envelope.to_bytes(), l1, deadline, tm_bytes)
        self._refresh_candidates(pair)
        self.env.log("sent", msg_id=msg_id, peer=peer_id, counter=c, tag=tag.hex(), l1=l1)
        return msg_id

    def _alloc_msg_id(self) -> int:
        self._next_msg_id += 1
        return (self.party_id << 20) | self._next_msg_id

    def _build(self, peer_id: int, data: bytes, flags: int, tag: bytes):
        rng = self.env.rng
        l2 = self.registry.l2_ids[rng.randrange(len(self.registry.l2_ids))]
        return build_envelope(
            self.keys,
            self.registry.pk(peer_id),
            data,
            l2,
            self.registry.pk(l2),
            self.now_s,
            tag=tag,
            flags=flags,
            rng=rng,
        )

    def _submit(self, envelope: Envelope, exclude: Optional[int] = None) -> int:
        rng = self.env.rng
        choices = [i for i in self.registry.l1_ids if i != exclude] or self.registry.l1_ids
        l1 = choices[rng.randrange(len(choices))]
        raw = envelope.to_bytes()
        payload = m.pack_submit(raw, sign(self.keys.secret, raw))
        if not self.env.send(l1, m.SUBMIT, payload):
            # entry node down: resend to another Level-1 node
            for alt in choices:
                if alt != l1 and self.env.send(alt, m.SUBMIT, payload):
                    return alt
        return l1

    def _watch(
        self, tag: bytes, msg_id: int, envelope: bytes, l1: int, deadline_ms: int, tm_bytes: bytes = b""
    ) -> None:
        self.watches.setdefault(tag, []).append(
            _Watch(
                msg_id=msg_id,
                envelope=envelope,
                l1_id=l1,
                receipt=b"",
                deadline_ms=deadline_ms,
                tm_bytes=tm_bytes,
            )
        )
        if tm_bytes:
            self.sent_tms.setdefault(tag, set()).add(tm_bytes)

    def _send_ack(self, pair: _Pair, counter: int) -> None:
        tag = kdf_tag(pair.sigma, counter, pair.my_dir)
        msg_id = self._alloc_msg_id()
        envelope, tm, _ = self._build(pair.peer_id, b"", FLAG_ACK, tag)
        l1 = self._submit(envelope)
        self._watch(tag, msg_id, envelope.to_bytes(), l1, self._loop_deadline_ms(), tm.to_bytes())
        self.env.log("ack_sent", peer=pair.peer_id, counter=counter, tag=tag.hex())

    # ------------------------------------------------------------------
    # Handshake

    def handshake_initiate(self, peer_id: int) -> None:
        """Establish a pair secret in-band: a sealed random value rides a
        normal envelope under the global handshake tag."""
        rng = self.env.rng
        r_a = rng.getrandbits(256).to_bytes(32, "big")
        sigma = hashlib.sha256(b"otmix/hs-secret" + r_a).digest()
        data = (
            peer_id.to_bytes(2, "big")
            + self.party_id.to_bytes(2, "big")
            + self.now_s.to_bytes(8, "big")
            + r_a
        )
        envelope, tm, _ = self._build(peer_id, data, FLAG_HANDSHAKE, self.registry.k_hs)
        l1 = self._submit(envelope)
        msg_id = self._alloc_msg_id()
        self._watch(
            self.registry.k_hs, msg_id, envelope.to_bytes(), l1, self._loop_deadline_ms(), tm.to_bytes()
        )
        self.pending_handshakes[peer_id] = sigma
        # the first reply arrives under counter 1 in the peer's direction
        peer_dir = 1 - self.my_direction(peer_id)
        self.candidates[kdf_tag(sigma, 1, peer_dir)] = (peer_id, 1)
        self.env.log("handshake_sent", peer=peer_id)

    # ------------------------------------------------------------------
    # Board monitoring

    def _poll_board(self, node: int) -> None:
        self.env.send(node, m.BOARD_READ, m.pack_board_read(self.cursors[node]))

    def handle(self, src: int, mtype: int, payload: bytes) -> None:
        if mtype == m.BOARD_ENTRIES:
            self._on_board_entries(src, payload)
        elif mtype == m.OT_INIT:
            self._on_ot_init(src, payload)
        elif mtype == m.OT_RESPOND:
            self._on_ot_respond(src, payload)
        elif mtype == m.SUBMIT_ACK:
            self._on_receipt(src, payload)
        elif mtype == m.SUBMIT_ERR:
            self.env.log("submit_err", l1=src, err=payload.decode(errors="replace"))

    def _on_receipt(self, src: int, payload: bytes) -> None:
        try:
            env_hash, ts, sig = m.unpack_receipt(payload)
        except WireError:
            return
        expected = b"otmix/receipt" + env_hash + self.party_id.to_bytes(2, "big")
        if not verify(self.registry.pk(src), expected, sig):
            return
        for watches in self.watches.values():
            for w in watches:
                if hashlib.sha256(w.envelope).digest() == env_hash and not w.receipt:
                    w.receipt = payload
                    return

    def _on_board_entries(self, src: int, payload: bytes) -> None:
        try:
            entries, cursor = m.unpack_board_entries(payload)
        except WireError:
            return
        self.cursors[src] = max(self.cursors[src], cursor)
        for e in entries:
            key = (src, e.ordinal)
            if key in self.seen_rows:
                continue
            self.seen_rows.add(key)
            self._classify_tag(src, e.ordinal, e.tag)
        if len(entries) == 256:
            self._poll_board(src)

    def _classify_tag(self, node: int, ordinal: int, tag: bytes) -> None:
        if tag == self.registry.k_hs:
            self._begin_ot(_OtFlight(kind="handshake", node=node, ordinal=ordinal, tag=tag))
            return
        watches = self.watches.get(tag)
        if watches:
            w = watches.pop(0)
            if not watches:
                del self.watches[tag]
            if w.tm_bytes:
                self.archive.append((node, ordinal, tag))
            self.env.log("posted_observed", msg_id=w.msg_id, node=node, ordinal=ordinal)
            self.env.send(w.l1_id, m.SENDER_REPORT, m.pack_report(hashlib.sha256(w.envelope).digest(), True))
            return
        hit = self.candidates.get(tag)
        if hit:
            peer, counter = hit
            self._begin_ot(
                _OtFlight(kind="message", node=node, ordinal=ordinal, tag=tag, peer=peer, counter=counter)
            )

    # ------------------------------------------------------------------
    # OT retrieval

    def _begin_ot(self, flight: _OtFlight) -> None:
        self._next_sid += 1
        sid = self._next_sid
        self.ot_flights[sid] = flight
        self.env.send(flight.node, m.OT_REQUEST, m.pack_ot_request(sid))

    def _on_ot_init(self, src: int, payload: bytes) -> None:
        try:
            sid, point_bytes, window_end, zeta, _ = m.unpack_ot_init(payload)
        except WireError:
            return
        flight = self.ot_flights.get(sid)
        if flight is None or flight.node != src:
            return
        rng = self.env.rng
        if flight.kind == "dummy":
            choice = rng.randint(1, zeta)
        else:
            slot = flight.ordinal - (window_end - zeta) + 1
            if 1 <= slot <= zeta:
                choice = slot
            else:
                # slid out of the window: keep the session alive as chaff
                choice = rng.randint(1, zeta)
                flight.discard = True
        try:
            sender_point = GroupElement.from_bytes(point_bytes)
            receiver_point, session = ot_receiver_choose(zeta, sender_point, choice, rng)
        except (GroupError, CryptoError):
            del self.ot_flights[sid]
            return
        flight.session = session
        self.env.send(src, m.OT_CHOOSE, m.pack_ot_choose(sid, receiver_point.to_bytes()))

    def _on_ot_respond(self, src: int, payload: bytes) -> None:
        try:
            sid, cts = m.unpack_ot_respond(payload)
        except WireError:
            return
        flight = self.ot_flights.pop(sid, None)
        if flight is None or flight.session is None:
            return
        try:
            recovered = ot_receiver_recover(flight.session, cts)
        except (CryptoError, IntegrityError):
            self.env.log("retrieve_fail", node=src, cause="ot_transport", kind=flight.kind)
            return
        self.env.log("ot_done", node=src, kind=flight.kind)
        if flight.kind == "dummy" or flight.discard:
            return
        try:
            blob = DeliveryBlob.from_bytes(recovered)
        except WireError:
            self._integrity_event(flight, src, "malformed_blob", recovered)
            return
        signed = b"otmix/publication" + blob.signed_content()
        if not verify(self.registry.pk(src), signed, blob.signature) or blob.node_id != src:
            self._integrity_event(flight, src, "mac", recovered)
            return
        if blob.ordinal != flight.ordinal or (flight.tag and blob.message.tag != flight.tag):
            self._integrity_event(flight, src, "slot_mismatch", recovered)
            return
        if flight.kind == "handshake":
            self._finish_handshake(flight, blob)
        elif flight.kind == "self_verify":
            self._finish_self_verify(flight, blob)
        else:
            self._finish_message(flight, blob)

    def _integrity_event(self, flight: _OtFlight, node: int, cause: str, blob: bytes) -> None:
        self.env.log("retrieve_fail", node=node, cause=cause, kind=flight.kind)
        self.env.send(
            AUDITOR_ID,
            m.AUDIT_TRIGGER,
            m.pack_json(
                {
                    "kind": "client_retrieval",
                    "client": self.party_id,
                    "node": node,
                    "ordinal": flight.ordinal,
                    "cause": cause,
                    "blob": blob.hex(),
                }
            ),
        )

    # ------------------------------------------------------------------

    def _finish_message(self, flight: _OtFlight, blob: DeliveryBlob) -> None:
        pair = self.pairs.get(flight.peer)
        if pair is None:
            sigma = self.pending_handshakes.get(flight.peer)
            if sigma is None:
                return
            pair = _Pair(
                peer_id=flight.peer,
                sigma=sigma,
                my_dir=self.my_direction(flight.peer),
                counter=1,
            )
        try:
            plaintext = open_box(self.keys.secret, self.registry.pk(flight.peer), blob.message.box)
            payload = Payload.from_bytes(plaintext)
            data, flags = unpack_payload_data(payload.x)
        except (CryptoError, WireError) as exc:
            kind = "open_integrity" if isinstance(exc, IntegrityError) else "open_fail"
            self._integrity_event(flight, flight.node, kind, blob.to_bytes())
            return

        c = flight.counter
        if flags & FLAG_ACK:
            pending = pair.pending.pop(c, None)
            if pending is not None:
                self.env.log("acked", msg_id=pending.msg_id, peer=flight.peer, counter=c)
            if flight.peer in self.pending_handshakes:
                del self.pending_handshakes[flight.peer]
                self.pairs[flight.peer] = pair
                self.env.log("handshake_established", peer=flight.peer, role="initiator")
            pair.counter = max(pair.counter, c + 1)
            self._refresh_candidates(pair)
            return

        if flight.peer in self.pending_handshakes:
            # a content reply also completes the handshake
            del self.pending_handshakes[flight.peer]
            self.pairs[flight.peer] = pair
            self.env.log("handshake_established", peer=flight.peer, role="initiator")
        payload_hash = hashlib.sha256(blob.message.box.to_bytes()).digest()
        fresh = payload_hash not in self.seen_payloads
        if fresh:
            self.seen_payloads.add(payload_hash)
            self.inbox.append((flight.peer, data))
            self.env.log("delivered", peer=flight.peer, counter=c, data=data.hex())
        # the peer's own traffic at this counter is NOT an acknowledgment
        # of ours (simultaneous sends share counter values); pending sends
        # are cleared only by explicit acks, at worst costing a redundant
        # resend that the receiver deduplicates
        self._send_ack(pair, c)
        pair.counter = max(pair.counter, c + 1)
        self._refresh_candidates(pair)

    def _finish_handshake(self, flight: _OtFlight, blob: DeliveryBlob) -> None:
        try:
            opened = open_box_unverified(self.keys.secret, blob.message.box)
        except WrongKeyError:
            return  # not addressed to us; every client tries every handshake blob
        except (CryptoError, WireError):
            self._integrity_event(flight, flight.node, "handshake_integrity", blob.to_bytes())
            return
        try:
            payload = Payload.from_bytes(opened.plaintext)
            data, flags = unpack_payload_data(payload.x)
        except WireError:
            return
        if not flags & FLAG_HANDSHAKE or len(data) != 44:
            return
        b_id = int.from_bytes(data[:2], "big")
        a_id = int.from_bytes(data[2:4], "big")
        r_a = data[12:44]
        if b_id != self.party_id or not self.registry.knows(a_id):
            return
        if not confirm_box_sender(self.registry.pk(a_id), opened):
            self.env.log("handshake_bad_sig", claimed=a_id)
            return
        if a_id in self.pairs:
            return
        sigma = hashlib.sha256(b"otmix/hs-secret" + r_a).digest()
        pair = _Pair(peer_id=a_id, sigma=sigma, my_dir=self.my_direction(a_id), counter=1)
        self.pairs[a_id] = pair
        self.env.log("handshake_established", peer=a_id, role="responder")
        if self.config.auto_handshake_reply:
            # reply under the session key at counter 1
            self._send_ack(pair, 1)
            pair.counter = 2
        self._refresh_candidates(pair)

    def _finish_self_verify(self, flight: _OtFlight, blob: DeliveryBlob) -> None:
        # a tag value can cover several of our messages (acks share the
        # counter of what they acknowledge), so the check is membership
        # in everything we authentically sent under this tag
        if blob.message.to_bytes() in self.sent_tms.get(flight.tag, set()):
            self.env.log("self_verify_ok", node=flight.node, ordinal=flight.ordinal)
            return
        self.env.log("self_verify_fail", node=flight.node, ordinal=flight.ordinal)
        self._integrity_event(flight, flight.node, "self_verify_mismatch", blob.to_bytes())

    # ------------------------------------------------------------------
    # Timers

    def _deadline_sweep(self) -> None:
        now = self.now_ms
        for pair in list(self.pairs.values()):
            for c, p in list(pair.pending.items()):
                if now < p.deadline_ms:
                    continue
                if p.attempts >= self.config.resend_max:
                    pair.pending.pop(c)
                    self.env.log("send_failed", msg_id=p.msg_id, peer=pair.peer_id, counter=c)
                    continue
                self._resend(pair, c, p)
        for tag, watches in list(self.watches.items()):
            for w in list(watches):
                if now < w.deadline_ms or w.reported:
                    continue
                w.reported = True
                self.env.log("loop_check_failed", msg_id=w.msg_id)
                self.env.send(
                    w.l1_id,
                    m.SENDER_REPORT,
                    m.pack_report(
                        hashlib.sha256(w.envelope).digest(), False, w.envelope, w.receipt
                    ),
                )
                watches.remove(w)
            if not watches:
                self.watches.pop(tag, None)
        self.env.schedule(max(1, int(self.config.poll_interval_s * 1000)), self._deadline_sweep)

    def _resend(self, pair: _Pair, old_key: int, p: _Pending) -> None:
        """Same encrypted payload, new tag (next counter), new timestamp."""
        pair.pending.pop(old_key, None)
        p.attempts += 1
        c_eff = p.base_counter + p.attempts
        tag = kdf_tag(pair.sigma, c_eff, pair.my_dir)
        p.tag = tag
        p.ack_tag = kdf_tag(pair.sigma, c_eff, 1 - pair.my_dir)
        tm = TaggedMessage.from_bytes(p.tm_bytes)
        tm = TaggedMessage(box=tm.box, tag=tag)
        rng = self.env.rng
        l2 = self.registry.l2_ids[rng.randrange(len(self.registry.l2_ids))]
        inner = EnvelopeInner(message=tm, l2_id=l2, ts=self.now_s)
        outer = seal(self.keys.secret, self.registry.pk(l2), inner.to_bytes(), rng=rng)
        envelope = Envelope(l2_hint=l2, outer=outer)
        p.envelope = envelope.to_bytes()
        p.tm_bytes = tm.to_bytes()
        p.deadline_ms = self._loop_deadline_ms()
        l1 = self._submit(envelope)
        p.l1_id = l1
        pair.pending[c_eff] = p
        self._watch(tag, p.msg_id, p.envelope, l1, p.deadline_ms, p.tm_bytes)
        self._refresh_candidates(pair)
        self.env.log("resend", msg_id=p.msg_id, peer=pair.peer_id, counter=c_eff, attempt=p.attempts)

    def _dummy_request(self) -> None:
        rng = self.env.rng
        node = self.registry.l3_ids[rng.randrange(len(self.registry.l3_ids))]
        self._begin_ot(_OtFlight(kind="dummy", node=node))
        self.env.log("dummy_request", node=node)
        self._schedule_dummy()

    def _self_verify(self) -> None:
        rng = self.env.rng
        if self.archive:
            node, ordinal, tag = self.archive[rng.randrange(len(self.archive))]
            flight = _OtFlight(kind="self_verify", node=node, ordinal=ordinal, tag=tag)
            self._begin_ot(flight)
            self.env.log("self_verify_request", node=node, ordinal=ordinal)
        self._schedule_self_verify()

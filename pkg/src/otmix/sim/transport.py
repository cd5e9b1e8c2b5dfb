"""Transports: in-process simulated links and a socket implementation.

Both speak the same authenticated framing: every frame carries source,
destination, a per-link sequence number, and an HMAC under a pairwise
link key derived by Diffie-Hellman from the registry keys (the stand-in
for TLS).  Receivers verify the MAC and reject stale sequence numbers,
so in-flight tampering and frame replay surface as drops, exactly as an
authenticated channel promises.
"""

from __future__ import annotations

import hashlib
import hmac as _hmac
import socket
import struct
import threading
from typing import Callable, Dict, Optional, Tuple

from ..registry import Topology
from ..runtime import Env, Party
from .adversary import AdversaryPolicy
from .events import PRIORITY_DELIVERY, Simulator
from .metrics import EventLog

__all__ = ["SimTransport", "PartyEnv", "frame_pack", "frame_unpack", "SocketTransport"]


def _link_key(topology: Topology, a: int, b: int) -> bytes:
    lo, hi = (a, b) if a < b else (b, a)
    dh = topology.keypair(lo).secret * topology.registry.pk(hi)
    return hashlib.sha256(b"otmix/link" + dh.to_bytes()).digest()


def frame_pack(key: bytes, src: int, dst: int, seq: int, mtype: int, payload: bytes) -> bytes:
    head = struct.pack(">HHQB", src, dst, seq, mtype)
    tag = _hmac.new(key, head + payload, hashlib.sha256).digest()
    return head + tag + payload


def frame_unpack(key: bytes, frame: bytes) -> Optional[Tuple[int, int, int, int, bytes]]:
    if len(frame) < 13 + 32:
        return None
    head, tag, payload = frame[:13], frame[13:45], frame[45:]
    if not _hmac.compare_digest(tag, _hmac.new(key, head + payload, hashlib.sha256).digest()):
        return None
    src, dst, seq, mtype = struct.unpack(">HHQB", head)
    return src, dst, seq, mtype, payload


class SimTransport:
    """In-process links with per-link latency, jitter, and FIFO order."""

    def __init__(
        self,
        sim: Simulator,
        topology: Topology,
        log: EventLog,
        rng,
        latency_ms: int = 10,
        jitter_ms: int = 5,
        adversary: Optional[AdversaryPolicy] = None,
    ):
        self.sim = sim
        self.topology = topology
        self.log = log
        self.rng = rng
        self.latency_ms = latency_ms
        self.jitter_ms = jitter_ms
        self.adversary = adversary
        self.parties: Dict[int, Party] = {}
        self.down: set = set()
        self._keys: Dict[Tuple[int, int], bytes] = {}
        self._send_seq: Dict[Tuple[int, int], int] = {}
        self._recv_seq: Dict[Tuple[int, int], int] = {}
        self._last_delivery: Dict[Tuple[int, int], int] = {}
        self.frames_sent = 0

    def attach(self, party: Party) -> None:
        self.parties[party.party_id] = party

    def key_for(self, a: int, b: int) -> bytes:
        pair = (a, b) if a < b else (b, a)
        k = self._keys.get(pair)
        if k is None:
            k = _link_key(self.topology, a, b)
            self._keys[pair] = k
        return k

    def send(self, src: int, dst: int, mtype: int, payload: bytes) -> bool:
        if dst in self.down or dst not in self.parties:
            return False
        self.frames_sent += 1
        link = (src, dst)
        self._send_seq[link] = self._send_seq.get(link, 0) + 1
        seq = self._send_seq[link]
        key = self.key_for(src, dst)
        frame = frame_pack(key, src, dst, seq, mtype, payload)

        deliveries = [(0, frame, False)]
        if self.adversary is not None:
            plans = self.adversary.intercept(self.sim.now_ms, src, dst, mtype, payload)
            deliveries = []
            for extra, p, tampered in plans:
                f = frame if not tampered and p == payload else frame_pack(key, src, dst, seq, mtype, p)
                if tampered:
                    f = f[:-1] + bytes([f[-1] ^ 1])  # break the MAC, as real tampering would
                deliveries.append((extra, f, tampered))

        for extra, f, tampered in deliveries:
            jitter = self.rng.randint(-self.jitter_ms, self.jitter_ms) if self.jitter_ms else 0
            at = self.sim.now_ms + max(1, self.latency_ms + jitter) + extra
            at = max(at, self._last_delivery.get(link, 0) + 1)  # per-link FIFO
            self._last_delivery[link] = at
            self.sim.schedule_at(at, lambda f=f, dst=dst, src=src: self._deliver(src, dst, f), PRIORITY_DELIVERY)
        return True

    def _deliver(self, src: int, dst: int, frame: bytes) -> None:
        if dst in self.down:
            return
        key = self.key_for(src, dst)
        parsed = frame_unpack(key, frame)
        if parsed is None:
            self.log.log(self.sim.now_ms, "frame_auth_fail", dst, src=src)
            return
        fsrc, fdst, seq, mtype, payload = parsed
        link = (fsrc, fdst)
        if seq <= self._recv_seq.get(link, 0):
            self.log.log(self.sim.now_ms, "frame_replay_dropped", dst, src=fsrc)
            return
        self._recv_seq[link] = seq
        party = self.parties.get(dst)
        if party is not None:
            party.handle(fsrc, mtype, payload)


class PartyEnv(Env):
    """Env implementation binding one party to the simulator."""

    def __init__(self, party_id: int, sim: Simulator, transport: SimTransport, log: EventLog, rng):
        self.party_id = party_id
        self.sim = sim
        self.transport = transport
        self._log = log
        self.rng = rng

    def now_ms(self) -> int:
        return self.sim.now_ms

    def send(self, dst: int, mtype: int, payload: bytes) -> bool:
        return self.transport.send(self.party_id, dst, mtype, payload)

    def schedule(self, delay_ms: int, fn: Callable[[], None]) -> None:
        self.sim.schedule_in(delay_ms, fn)

    def log(self, ev: str, **fields) -> None:
        self._log.log(self.sim.now_ms, ev, self.party_id, **fields)


class SocketTransport:
    """TCP loopback transport speaking the identical framing.

    One listener per party; sends open short-lived connections.  Used to
    demonstrate the protocol stack is not bound to the simulator: the
    same Party objects run against real sockets and wall-clock timers.
    """

    def __init__(self, topology: Topology, log: EventLog, rng, base_port: int = 0):
        self.topology = topology
        self.log = log
        self.rng = rng
        self.parties: Dict[int, Party] = {}
        self.ports: Dict[int, int] = {}
        self._servers: Dict[int, socket.socket] = {}
        self._threads: list = []
        self._send_seq: Dict[Tuple[int, int], int] = {}
        self._recv_seq: Dict[Tuple[int, int], int] = {}
        self._keys: Dict[Tuple[int, int], bytes] = {}
        self._lock = threading.RLock()  # handlers send while being handled
        self._t0 = None
        self.down: set = set()
        self.running = False

    def key_for(self, a: int, b: int) -> bytes:
        pair = (a, b) if a < b else (b, a)
        with self._lock:
            k = self._keys.get(pair)
            if k is None:
                k = _link_key(self.topology, a, b)
                self._keys[pair] = k
        return k

    def attach(self, party: Party) -> None:
        self.parties[party.party_id] = party
        srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind(("127.0.0.1", 0))
        srv.listen(64)
        self._servers[party.party_id] = srv
        self.ports[party.party_id] = srv.getsockname()[1]

    def start(self) -> None:
        import time

        self._t0 = time.monotonic()
        self.running = True
        for pid, srv in self._servers.items():
            th = threading.Thread(target=self._serve, args=(pid, srv), daemon=True)
            th.start()
            self._threads.append(th)
        for party in list(self.parties.values()):
            party.start()

    def stop(self) -> None:
        self.running = False
        for srv in self._servers.values():
            try:
                srv.close()
            except OSError:
                pass

    def now_ms(self) -> int:
        import time

        return int((time.monotonic() - (self._t0 or time.monotonic())) * 1000)

    def _serve(self, pid: int, srv: socket.socket) -> None:
        while self.running:
            try:
                conn, _ = srv.accept()
            except OSError:
                return
            with conn:
                chunks = []
                while True:
                    data = conn.recv(65536)
                    if not data:
                        break
                    chunks.append(data)
            frame = b"".join(chunks)
            if len(frame) < 13:
                continue
            src = struct.unpack(">HHQB", frame[:13])[0]
            parsed = frame_unpack(self.key_for(src, pid), frame)
            if parsed is None:
                self.log.log(self.now_ms(), "frame_auth_fail", pid, src=src)
                continue
            fsrc, _, seq, mtype, payload = parsed
            with self._lock:
                if seq <= self._recv_seq.get((fsrc, pid), 0):
                    continue
                self._recv_seq[(fsrc, pid)] = seq
            party = self.parties.get(pid)
            if party is not None:
                with self._lock:
                    party.handle(fsrc, mtype, payload)

    def send(self, src: int, dst: int, mtype: int, payload: bytes) -> bool:
        if dst in self.down or dst not in self.ports:
            return False
        with self._lock:
            self._send_seq[(src, dst)] = self._send_seq.get((src, dst), 0) + 1
            seq = self._send_seq[(src, dst)]
        frame = frame_pack(self.key_for(src, dst), src, dst, seq, mtype, payload)
        try:
            with socket.create_connection(("127.0.0.1", self.ports[dst]), timeout=5) as conn:
                conn.sendall(frame)
        except OSError:
            return False
        return True


class SocketEnv(Env):
    """Env over the socket transport: wall-clock timers, same parties."""

    def __init__(self, party_id: int, transport: SocketTransport, log: EventLog, rng):
        self.party_id = party_id
        self.transport = transport
        self._log = log
        self.rng = rng

    def now_ms(self) -> int:
        return self.transport.now_ms()

    def send(self, dst: int, mtype: int, payload: bytes) -> bool:
        return self.transport.send(self.party_id, dst, mtype, payload)

    def schedule(self, delay_ms: int, fn: Callable[[], None]) -> None:
        t = threading.Timer(max(0.001, delay_ms / 1000.0), self._guarded, args=(fn,))
        t.daemon = True
        t.start()

    def _guarded(self, fn) -> None:
        if self.transport.running:
            with self.transport._lock:
                fn()

    def log(self, ev: str, **fields) -> None:
        self._log.log(self.now_ms(), ev, self.party_id, **fields)

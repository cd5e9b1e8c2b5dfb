"""Transport message types and their encodings.

Frames themselves are authenticated by the transport layer; the payload
formats here are the protocol-level contents.  Audit messages use a
canonical JSON encoding (they are rare and structurally rich); everything
on the hot path is fixed binary.
"""

from __future__ import annotations

import json
from typing import List, Tuple

from .wire import BoardEntry, WireError

__all__ = [
    "SUBMIT", "SUBMIT_ACK", "SUBMIT_ERR", "FLUSH", "COMMIT", "BUCKET",
    "BOARD_READ", "BOARD_ENTRIES", "OT_REQUEST", "OT_INIT", "OT_CHOOSE",
    "OT_RESPOND", "DIV_COMMIT", "DIV_REVEAL", "SENDER_REPORT",
    "AUDIT_OPEN", "AUDIT_RESPOND", "AUDIT_TRIGGER", "MSG_NAMES",
    "pack_submit", "unpack_submit",
    "pack_receipt", "unpack_receipt",
    "pack_flush", "unpack_flush",
    "pack_commit", "unpack_commit",
    "pack_bucket_msg", "unpack_bucket_msg",
    "pack_board_read", "unpack_board_read",
    "pack_board_entries", "unpack_board_entries",
    "pack_ot_request", "unpack_ot_request",
    "pack_ot_init", "unpack_ot_init",
    "pack_ot_choose", "unpack_ot_choose",
    "pack_ot_respond", "unpack_ot_respond",
    "pack_div_commit", "unpack_div_commit",
    "pack_div_reveal", "unpack_div_reveal",
    "pack_report", "unpack_report",
    "pack_json", "unpack_json",
]

SUBMIT = 1
SUBMIT_ACK = 2
SUBMIT_ERR = 3
FLUSH = 4
COMMIT = 5
BUCKET = 6
BOARD_READ = 7
BOARD_ENTRIES = 8
OT_REQUEST = 9
OT_INIT = 10
OT_CHOOSE = 11
OT_RESPOND = 12
DIV_COMMIT = 13
DIV_REVEAL = 14
SENDER_REPORT = 15
AUDIT_OPEN = 16
AUDIT_RESPOND = 17
AUDIT_TRIGGER = 18

MSG_NAMES = {
    1: "submit", 2: "submit_ack", 3: "submit_err", 4: "flush", 5: "commit",
    6: "bucket", 7: "board_read", 8: "board_entries", 9: "ot_request",
    10: "ot_init", 11: "ot_choose", 12: "ot_respond", 13: "div_commit",
    14: "div_reveal", 15: "sender_report", 16: "audit_open",
    17: "audit_respond", 18: "audit_trigger",
}

_SIG = 64


def _u16(v: int) -> bytes:
    return v.to_bytes(2, "big")


def _u64(v: int) -> bytes:
    return v.to_bytes(8, "big")


def pack_submit(envelope: bytes, sig: bytes) -> bytes:
    return _u16(len(envelope)) + envelope + sig


def unpack_submit(data: bytes) -> Tuple[bytes, bytes]:
    n = int.from_bytes(data[:2], "big")
    env, sig = data[2 : 2 + n], data[2 + n :]
    if len(env) != n or len(sig) != _SIG:
        raise WireError("malformed submit")
    return env, sig


def pack_receipt(env_hash: bytes, ts: int, sig: bytes) -> bytes:
    return env_hash + _u64(ts) + sig


def unpack_receipt(data: bytes) -> Tuple[bytes, int, bytes]:
    if len(data) != 32 + 8 + _SIG:
        raise WireError("malformed receipt")
    return data[:32], int.from_bytes(data[32:40], "big"), data[40:]


def pack_flush(container_seq: int, blobs: List[bytes], sig: bytes) -> bytes:
    out = _u64(container_seq) + _u16(len(blobs))
    for b in blobs:
        out += _u16(len(b)) + b
    return out + sig


def unpack_flush(data: bytes) -> Tuple[int, List[bytes], bytes, bytes]:
    """Returns (container_seq, blobs, sig, signed_content)."""
    seq = int.from_bytes(data[:8], "big")
    count = int.from_bytes(data[8:10], "big")
    off = 10
    blobs = []
    for _ in range(count):
        n = int.from_bytes(data[off : off + 2], "big")
        off += 2
        blobs.append(data[off : off + n])
        off += n
    sig = data[off:]
    if len(sig) != _SIG:
        raise WireError("malformed flush")
    return seq, blobs, sig, data[:off]


def pack_commit(kind: int, seq: int, commitment: bytes, sig: bytes) -> bytes:
    return bytes([kind]) + _u64(seq) + _u16(len(commitment)) + commitment + sig


def unpack_commit(data: bytes) -> Tuple[int, int, bytes, bytes, bytes]:
    kind = data[0]
    seq = int.from_bytes(data[1:9], "big")
    n = int.from_bytes(data[9:11], "big")
    commitment = data[11 : 11 + n]
    sig = data[11 + n :]
    if len(sig) != _SIG:
        raise WireError("malformed commit")
    return kind, seq, commitment, sig, data[: 11 + n]


def pack_bucket_msg(bucket: bytes, sig: bytes) -> bytes:
    return _u16(len(bucket) >> 16) + _u16(len(bucket) & 0xFFFF) + bucket + sig


def unpack_bucket_msg(data: bytes) -> Tuple[bytes, bytes]:
    n = (int.from_bytes(data[:2], "big") << 16) | int.from_bytes(data[2:4], "big")
    bucket, sig = data[4 : 4 + n], data[4 + n :]
    if len(bucket) != n or len(sig) != _SIG:
        raise WireError("malformed bucket message")
    return bucket, sig


def pack_board_read(from_ordinal: int) -> bytes:
    return _u64(from_ordinal)


def unpack_board_read(data: bytes) -> int:
    if len(data) != 8:
        raise WireError("malformed board read")
    return int.from_bytes(data, "big")


def pack_board_entries(entries: List[BoardEntry], next_cursor: int) -> bytes:
    out = _u64(next_cursor) + _u16(len(entries))
    for e in entries:
        out += e.to_bytes()
    return out


def unpack_board_entries(data: bytes) -> Tuple[List[BoardEntry], int]:
    cursor = int.from_bytes(data[:8], "big")
    count = int.from_bytes(data[8:10], "big")
    off = 10
    entries = []
    row = 1 + 8 + 32 + 8
    if len(data) != off + count * row:
        raise WireError("malformed board entries")
    for _ in range(count):
        if data[off] != 0x01:
            raise WireError("unsupported version byte in board entry")
        entries.append(
            BoardEntry(
                ordinal=int.from_bytes(data[off + 1 : off + 9], "big"),
                tag=data[off + 9 : off + 41],
                published_at=int.from_bytes(data[off + 41 : off + 49], "big"),
            )
        )
        off += row
    return entries, cursor


def pack_ot_request(session: int) -> bytes:
    return _u64(session)


def unpack_ot_request(data: bytes) -> int:
    if len(data) != 8:
        raise WireError("malformed OT request")
    return int.from_bytes(data, "big")


def pack_ot_init(session: int, sender_point: bytes, window_end: int, zeta: int, string_len: int) -> bytes:
    return _u64(session) + sender_point + _u64(window_end) + _u16(zeta) + _u16(string_len)


def unpack_ot_init(data: bytes) -> Tuple[int, bytes, int, int, int]:
    if len(data) != 8 + 32 + 8 + 2 + 2:
        raise WireError("malformed OT init")
    return (
        int.from_bytes(data[:8], "big"),
        data[8:40],
        int.from_bytes(data[40:48], "big"),
        int.from_bytes(data[48:50], "big"),
        int.from_bytes(data[50:52], "big"),
    )


def pack_ot_choose(session: int, receiver_point: bytes) -> bytes:
    return _u64(session) + receiver_point


def unpack_ot_choose(data: bytes) -> Tuple[int, bytes]:
    if len(data) != 40:
        raise WireError("malformed OT choose")
    return int.from_bytes(data[:8], "big"), data[8:]


def pack_ot_respond(session: int, cts: List[bytes]) -> bytes:
    out = _u64(session) + _u16(len(cts))
    for ct in cts:
        out += _u16(len(ct)) + ct
    return out


def unpack_ot_respond(data: bytes) -> Tuple[int, List[bytes]]:
    session = int.from_bytes(data[:8], "big")
    count = int.from_bytes(data[8:10], "big")
    off = 10
    cts = []
    for _ in range(count):
        n = int.from_bytes(data[off : off + 2], "big")
        off += 2
        cts.append(data[off : off + n])
        off += n
    if off != len(data):
        raise WireError("malformed OT response")
    return session, cts


def pack_div_commit(commitment: bytes, sig: bytes) -> bytes:
    return commitment + sig


def unpack_div_commit(data: bytes) -> Tuple[bytes, bytes]:
    if len(data) != 32 + _SIG:
        raise WireError("malformed division commit")
    return data[:32], data[32:]


def pack_div_reveal(value: bytes, salt: bytes, sig: bytes) -> bytes:
    return value + salt + sig


def unpack_div_reveal(data: bytes) -> Tuple[bytes, bytes, bytes]:
    if len(data) != 32 + 32 + _SIG:
        raise WireError("malformed division reveal")
    return data[:32], data[32:64], data[64:]


def pack_report(env_hash: bytes, posted: bool, envelope: bytes = b"", receipt: bytes = b"") -> bytes:
    return (
        env_hash
        + bytes([1 if posted else 0])
        + _u16(len(envelope))
        + envelope
        + _u16(len(receipt))
        + receipt
    )


def unpack_report(data: bytes) -> Tuple[bytes, bool, bytes, bytes]:
    env_hash = data[:32]
    posted = data[32] == 1
    n = int.from_bytes(data[33:35], "big")
    envelope = data[35 : 35 + n]
    off = 35 + n
    m = int.from_bytes(data[off : off + 2], "big")
    receipt = data[off + 2 : off + 2 + m]
    if len(data) != off + 2 + m:
        raise WireError("malformed report")
    return env_hash, posted, envelope, receipt


def pack_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def unpack_json(data: bytes):
    return json.loads(data.decode())

"""Domain types and bit-exact wire formats.

Every message that crosses a trust boundary has a length-delimited,
versioned, canonical encoding.  The version byte is 0x01 everywhere; any
other value is rejected.  All envelopes on the wire have identical
length, as do all tagged messages, so sizes leak nothing about content
or direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .crypto import (
    KeyPair,
    SealedBox,
    kdf_tag,
    seal,
    sealed_box_size,
    TAG_LEN,
)
from .group import GroupElement

__all__ = [
    "WireError",
    "VersionError",
    "PayloadTooLong",
    "Payload",
    "TaggedMessage",
    "Envelope",
    "Batch",
    "Bucket",
    "PublicationEntry",
    "DeliveryBlob",
    "BoardEntry",
    "PairState",
    "PendingSend",
    "build_envelope",
    "pack_payload_data",
    "unpack_payload_data",
    "VERSION",
    "PAYLOAD_BYTES",
    "MAX_DATA_BYTES",
    "NONCE_LEN",
    "FLAG_ACK",
    "FLAG_HANDSHAKE",
    "TAGGED_MESSAGE_LEN",
    "ENVELOPE_LEN",
    "DELIVERY_BLOB_LEN",
]

VERSION = 0x01
PAYLOAD_BYTES = 256          # padded application payload, constant for all messages
NONCE_LEN = 24
MAX_DATA_BYTES = PAYLOAD_BYTES - 3

FLAG_ACK = 0x01
FLAG_HANDSHAKE = 0x02

_PAYLOAD_PLAINTEXT_LEN = 1 + PAYLOAD_BYTES + NONCE_LEN
_INNER_BOX_LEN = sealed_box_size(_PAYLOAD_PLAINTEXT_LEN)
TAGGED_MESSAGE_LEN = 1 + _INNER_BOX_LEN + TAG_LEN
_ENVELOPE_PLAINTEXT_LEN = 1 + TAGGED_MESSAGE_LEN + 2 + 8
_OUTER_BOX_LEN = sealed_box_size(_ENVELOPE_PLAINTEXT_LEN)
ENVELOPE_LEN = 1 + 2 + _OUTER_BOX_LEN
DELIVERY_BLOB_LEN = TAGGED_MESSAGE_LEN + 2 + 8 + 64


class WireError(ValueError):
    """Malformed or truncated encoding."""


class VersionError(WireError):
    """Unsupported version byte."""


class PayloadTooLong(WireError):
    """Application data exceeds the fixed padded payload size."""


class _Reader:
    __slots__ = ("data", "off")

    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise WireError("truncated encoding")
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self.take(2), "big")

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def done(self) -> None:
        if self.off != len(self.data):
            raise WireError("length mismatch: trailing bytes")


def _check_version(r: _Reader) -> None:
    v = r.u8()
    if v != VERSION:
        raise VersionError(f"unsupported version byte {v:#04x}")


def _u16(v: int) -> bytes:
    return v.to_bytes(2, "big")


def _u64(v: int) -> bytes:
    return v.to_bytes(8, "big")


# ---------------------------------------------------------------------------
# Payload
# ---------------------------------------------------------------------------


def pack_payload_data(data: bytes, flags: int = 0) -> bytes:
    """Pad application data into the fixed-size payload container."""
    if len(data) > MAX_DATA_BYTES:
        raise PayloadTooLong(f"data is {len(data)} bytes, max {MAX_DATA_BYTES}")
    return _u16(len(data)) + bytes([flags]) + data + bytes(MAX_DATA_BYTES - len(data))


def unpack_payload_data(container: bytes) -> Tuple[bytes, int]:
    """Inverse of pack_payload_data: returns (data, flags)."""
    if len(container) != PAYLOAD_BYTES:
        raise WireError("payload container has wrong size")
    n = int.from_bytes(container[:2], "big")
    if n > MAX_DATA_BYTES:
        raise WireError("payload length field out of range")
    return container[3 : 3 + n], container[2]


@dataclass(frozen=True)
class Payload:
    """Fixed-size padded application payload plus a per-message nonce."""

    x: bytes  # padded container, exactly PAYLOAD_BYTES
    nonce: bytes

    def to_bytes(self) -> bytes:
        if len(self.x) != PAYLOAD_BYTES or len(self.nonce) != NONCE_LEN:
            raise WireError("payload fields have wrong sizes")
        return bytes([VERSION]) + self.x + self.nonce

    @classmethod
    def from_bytes(cls, data: bytes) -> "Payload":
        r = _Reader(data)
        _check_version(r)
        x = r.take(PAYLOAD_BYTES)
        nonce = r.take(NONCE_LEN)
        r.done()
        return cls(x=x, nonce=nonce)


# ---------------------------------------------------------------------------
# TaggedMessage / Envelope
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaggedMessage:
    """(encrypted payload, tag) pair as stored, bucketed, and published."""

    box: SealedBox
    tag: bytes

    def to_bytes(self) -> bytes:
        if len(self.tag) != TAG_LEN:
            raise WireError("tag must be 32 bytes")
        out = bytes([VERSION]) + self.box.to_bytes() + self.tag
        if len(out) != TAGGED_MESSAGE_LEN:
            raise WireError("tagged message has non-standard length")
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "TaggedMessage":
        if len(data) != TAGGED_MESSAGE_LEN:
            raise WireError("tagged message has wrong length")
        r = _Reader(data)
        _check_version(r)
        box = SealedBox.from_bytes(r.take(_INNER_BOX_LEN))
        tag = r.take(TAG_LEN)
        r.done()
        return cls(box=box, tag=tag)


@dataclass(frozen=True)
class EnvelopeInner:
    """Plaintext the sender seals to the Level-2 node."""

    message: TaggedMessage
    l2_id: int
    ts: int  # seconds since epoch (virtual)

    def to_bytes(self) -> bytes:
        return bytes([VERSION]) + self.message.to_bytes() + _u16(self.l2_id) + _u64(self.ts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EnvelopeInner":
        r = _Reader(data)
        _check_version(r)
        tm = TaggedMessage.from_bytes(r.take(TAGGED_MESSAGE_LEN))
        l2_id = r.u16()
        ts = r.u64()
        r.done()
        return cls(message=tm, l2_id=l2_id, ts=ts)


@dataclass(frozen=True)
class Envelope:
    """Outer message a sender submits to a Level-1 node.

    The sender's transport identity travels only in the authenticated
    submission frame, never inside the envelope, so stripping it at
    Level 1 is dropping the frame, not rewriting the envelope.
    """

    l2_hint: int
    outer: SealedBox

    def to_bytes(self) -> bytes:
        out = bytes([VERSION]) + _u16(self.l2_hint) + self.outer.to_bytes()
        if len(out) != ENVELOPE_LEN:
            raise WireError("envelope has non-standard length")
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        if len(data) != ENVELOPE_LEN:
            raise WireError("envelope has wrong length")
        r = _Reader(data)
        _check_version(r)
        hint = r.u16()
        outer = SealedBox.from_bytes(r.take(_OUTER_BOX_LEN))
        r.done()
        return cls(l2_hint=hint, outer=outer)


# ---------------------------------------------------------------------------
# Batch / Bucket / publication rows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Batch:
    round_no: int
    messages: Tuple[TaggedMessage, ...]
    commitment: bytes  # Pedersen commitment to the applied permutation

    def to_bytes(self) -> bytes:
        out = bytes([VERSION]) + _u64(self.round_no) + _u16(len(self.messages))
        for tm in self.messages:
            out += tm.to_bytes()
        out += _u16(len(self.commitment)) + self.commitment
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "Batch":
        r = _Reader(data)
        _check_version(r)
        round_no = r.u64()
        count = r.u16()
        msgs = tuple(TaggedMessage.from_bytes(r.take(TAGGED_MESSAGE_LEN)) for _ in range(count))
        clen = r.u16()
        commitment = r.take(clen)
        r.done()
        return cls(round_no=round_no, messages=msgs, commitment=commitment)


@dataclass(frozen=True)
class Bucket:
    """beta2/alpha messages bound for one Level-3 node.  Whether they are
    real or dummies is known only to the origin Level-2 node and is not
    part of the encoding."""

    round_no: int
    origin_l2: int
    messages: Tuple[TaggedMessage, ...]

    def to_bytes(self) -> bytes:
        out = bytes([VERSION]) + _u64(self.round_no) + _u16(self.origin_l2)
        out += _u16(len(self.messages))
        for tm in self.messages:
            out += tm.to_bytes()
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bucket":
        r = _Reader(data)
        _check_version(r)
        round_no = r.u64()
        origin = r.u16()
        count = r.u16()
        msgs = tuple(TaggedMessage.from_bytes(r.take(TAGGED_MESSAGE_LEN)) for _ in range(count))
        r.done()
        return cls(round_no=round_no, origin_l2=origin, messages=msgs)


@dataclass(frozen=True)
class DeliveryBlob:
    """What a Level-3 node hands over in OT: the tagged message plus the
    node's signature binding it to this publication slot."""

    message: TaggedMessage
    node_id: int
    ordinal: int
    signature: bytes

    def to_bytes(self) -> bytes:
        out = self.message.to_bytes() + _u16(self.node_id) + _u64(self.ordinal) + self.signature
        if len(out) != DELIVERY_BLOB_LEN:
            raise WireError("delivery blob has non-standard length")
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "DeliveryBlob":
        if len(data) != DELIVERY_BLOB_LEN:
            raise WireError("delivery blob has wrong length")
        r = _Reader(data)
        tm = TaggedMessage.from_bytes(r.take(TAGGED_MESSAGE_LEN))
        node_id = r.u16()
        ordinal = r.u64()
        sig = r.take(64)
        r.done()
        return cls(message=tm, node_id=node_id, ordinal=ordinal, signature=sig)

    def signed_content(self) -> bytes:
        return self.message.to_bytes() + _u16(self.node_id) + _u64(self.ordinal)


@dataclass(frozen=True)
class PublicationEntry:
    tag: bytes
    ordinal: int
    published_at: int  # seconds
    blob: DeliveryBlob

    def to_bytes(self) -> bytes:
        return (
            bytes([VERSION])
            + self.tag
            + _u64(self.ordinal)
            + _u64(self.published_at)
            + self.blob.to_bytes()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicationEntry":
        r = _Reader(data)
        _check_version(r)
        tag = r.take(TAG_LEN)
        ordinal = r.u64()
        published_at = r.u64()
        blob = DeliveryBlob.from_bytes(r.take(DELIVERY_BLOB_LEN))
        r.done()
        return cls(tag=tag, ordinal=ordinal, published_at=published_at, blob=blob)


@dataclass(frozen=True)
class BoardEntry:
    """Bulletin-board row: the tag is public, the payload is not."""

    ordinal: int
    tag: bytes
    published_at: int

    def to_bytes(self) -> bytes:
        return bytes([VERSION]) + _u64(self.ordinal) + self.tag + _u64(self.published_at)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BoardEntry":
        r = _Reader(data)
        _check_version(r)
        ordinal = r.u64()
        tag = r.take(TAG_LEN)
        published_at = r.u64()
        r.done()
        return cls(ordinal=ordinal, tag=tag, published_at=published_at)


# ---------------------------------------------------------------------------
# Pair state
# ---------------------------------------------------------------------------


@dataclass
class PendingSend:
    tag: bytes
    envelope: bytes
    deadline: int


@dataclass
class PairState:
    """Per-communicant state: shared secret, counter, direction, and the
    sends awaiting acknowledgment.  The counter never decreases and the
    secret never changes once set."""

    peer_pk: GroupElement
    sigma: bytes
    counter: int = 1
    direction: int = 0  # my sending direction within this pair
    pending: List[PendingSend] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        out = bytes([VERSION]) + self.peer_pk.to_bytes() + self.sigma
        out += _u64(self.counter) + bytes([self.direction]) + _u16(len(self.pending))
        for p in self.pending:
            out += p.tag + _u16(len(p.envelope)) + p.envelope + _u64(p.deadline)
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> "PairState":
        r = _Reader(data)
        _check_version(r)
        peer_pk = GroupElement.from_bytes(r.take(32))
        sigma = r.take(32)
        counter = r.u64()
        direction = r.u8()
        if direction not in (0, 1):
            raise WireError("direction must be 0 or 1")
        count = r.u16()
        pending = []
        for _ in range(count):
            tag = r.take(TAG_LEN)
            elen = r.u16()
            env = r.take(elen)
            deadline = r.u64()
            pending.append(PendingSend(tag=tag, envelope=env, deadline=deadline))
        r.done()
        return cls(
            peer_pk=peer_pk, sigma=sigma, counter=counter, direction=direction, pending=pending
        )


# ---------------------------------------------------------------------------
# Envelope construction
# ---------------------------------------------------------------------------


def build_envelope(
    sender: KeyPair,
    recipient_pk: GroupElement,
    data: bytes,
    l2_id: int,
    l2_pk: GroupElement,
    now: int,
    *,
    tag: Optional[bytes] = None,
    sigma: Optional[bytes] = None,
    counter: Optional[int] = None,
    direction: Optional[int] = None,
    flags: int = 0,
    rng=None,
) -> Tuple[Envelope, TaggedMessage, bytes]:
    """Seal application data for ``recipient_pk`` and wrap it for the
    Level-2 node.  The tag is either given explicitly (handshakes) or
    derived from (sigma, counter, direction)."""
    if tag is None:
        if sigma is None or counter is None or direction is None:
            raise WireError("either tag or (sigma, counter, direction) required")
        tag = kdf_tag(sigma, counter, direction)
    if len(tag) != TAG_LEN:
        raise WireError("tag must be 32 bytes")
    container = pack_payload_data(data, flags)
    nonce = (
        rng.getrandbits(NONCE_LEN * 8).to_bytes(NONCE_LEN, "little")
        if rng is not None
        else __import__("secrets").token_bytes(NONCE_LEN)
    )
    payload = Payload(x=container, nonce=nonce)
    inner_box = seal(sender.secret, recipient_pk, payload.to_bytes(), rng=rng)
    tm = TaggedMessage(box=inner_box, tag=tag)
    inner = EnvelopeInner(message=tm, l2_id=l2_id, ts=now)
    outer = seal(sender.secret, l2_pk, inner.to_bytes(), rng=rng)
    return Envelope(l2_hint=l2_id, outer=outer), tm, tag

"""Cryptographic primitives for the mix network.

Provides key generation, signed public-key encryption with ciphertext
integrity (sealed boxes), the pair-secret tag KDF, the per-round value
derivation, 1-out-of-n oblivious transfer, perfectly hiding commitments
to permutations, Schnorr signatures, and MACs.

All operations are pure functions of their inputs plus an explicit RNG
handle (any object with ``getrandbits``); omitting the RNG falls back to
the system CSPRNG.
"""

from __future__ import annotations

import hashlib
import hmac as _hmac
import secrets
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from cryptography.exceptions import InvalidTag as _AeadInvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from .group import (
    BASEPOINT,
    GroupElement,
    GroupError,
    Scalar,
    hash_to_element,
    hash_to_scalar,
)

__all__ = [
    "CryptoError",
    "IntegrityError",
    "WrongKeyError",
    "OtError",
    "KeyPair",
    "SealedBox",
    "OtSession",
    "PermCommitment",
    "PermOpening",
    "keygen",
    "seal",
    "open_box",
    "open_box_unverified",
    "confirm_box_sender",
    "kdf_tag",
    "round_value",
    "sign",
    "verify",
    "mac",
    "ot_sender_init",
    "ot_receiver_choose",
    "ot_sender_respond",
    "ot_receiver_recover",
    "commit_perm",
    "verify_perm",
    "sealed_box_size",
    "TAG_LEN",
]

TAG_LEN = 32
_SYM_KEY_LEN = 32
_HASH_LEN = 32
_SIG_LEN = 64
_ZERO_NONCE = bytes(12)

# Second Pedersen generator; derived by hashing, so its discrete log
# relative to the basepoint is unknown to everyone.
PEDERSEN_H = hash_to_element(b"otmix/v1/pedersen-generator").precompute()


class CryptoError(Exception):
    """Base class for cryptographic failures."""


class IntegrityError(CryptoError):
    """Ciphertext, signature, or hash check failed: the bytes were altered."""


class WrongKeyError(CryptoError):
    """Decryption failed at the key-unwrap stage (wrong recipient key)."""


class OtError(CryptoError):
    """Malformed oblivious-transfer input."""


def _rand_scalar(rng) -> Scalar:
    return Scalar.random(rng)


def _sha256(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


def _hkdf(key: bytes, salt: bytes, info: bytes, length: int) -> bytes:
    """HKDF-SHA256 (extract-then-expand)."""
    prk = _hmac.new(salt, key, hashlib.sha256).digest()
    out = b""
    block = b""
    counter = 1
    while len(out) < length:
        block = _hmac.new(prk, block + info + bytes([counter]), hashlib.sha256).digest()
        out += block
        counter += 1
    return out[:length]


# ---------------------------------------------------------------------------
# Keys and signatures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KeyPair:
    public: GroupElement
    secret: Scalar


def keygen(seed: bytes) -> KeyPair:
    """Deterministic keypair from a seed (>= 32 bytes of entropy, or a
    test seed).  ``public == secret * basepoint`` always holds."""
    sk = hash_to_scalar(b"otmix/v1/keygen", seed)
    if sk.value == 0:
        sk = Scalar(1)
    pk = sk * BASEPOINT
    pk.to_bytes()
    return KeyPair(public=pk, secret=sk)


def decode_public(data: bytes) -> GroupElement:
    """Decode a public key; the identity element is rejected."""
    e = GroupElement.from_bytes(data)
    if e.is_identity():
        raise GroupError("identity element is not a valid public key")
    return e


def sign(sk: Scalar, msg: bytes) -> bytes:
    """Schnorr signature (64 bytes); the nonce is derived from the key
    and message, so signing is deterministic."""
    k = hash_to_scalar(b"otmix/v1/schnorr-nonce", sk.to_bytes(), msg)
    R = k * BASEPOINT
    pk = sk * BASEPOINT
    c = hash_to_scalar(b"otmix/v1/schnorr-chal", R.to_bytes(), pk.to_bytes(), msg)
    s = k + c * sk
    return R.to_bytes() + s.to_bytes()


def verify(pk: GroupElement, msg: bytes, sig: bytes) -> bool:
    if len(sig) != _SIG_LEN:
        return False
    try:
        R = GroupElement.from_bytes(sig[:32])
        s = Scalar.from_bytes(sig[32:])
    except GroupError:
        return False
    c = hash_to_scalar(b"otmix/v1/schnorr-chal", sig[:32], pk.to_bytes(), msg)
    return s * BASEPOINT == R + c * pk


def mac(key: bytes, msg: bytes) -> bytes:
    return _hmac.new(key, msg, hashlib.sha256).digest()


# ---------------------------------------------------------------------------
# Sealed boxes: signed public-key encryption with ciphertext integrity
# ---------------------------------------------------------------------------
#
# seal() builds the box in six steps: generate a random symmetric key;
# encrypt the plaintext under it; hash the resulting ciphertext; sign the
# hash with the sender's secret; encrypt (key, hash, signature) to the
# recipient's public key via an ephemeral DH; concatenate key block and
# body.  Flipping any byte of either part makes open_box() fail.


@dataclass(frozen=True)
class SealedBox:
    key_block: bytes  # eph_pub(32) || AEAD(sym_key || hash || signature)
    body: bytes       # AEAD(sym_key; plaintext)

    def to_bytes(self) -> bytes:
        return (
            len(self.key_block).to_bytes(2, "big")
            + self.key_block
            + len(self.body).to_bytes(4, "big")
            + self.body
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedBox":
        if len(data) < 6:
            raise IntegrityError("sealed box too short")
        kb_len = int.from_bytes(data[:2], "big")
        off = 2 + kb_len
        if len(data) < off + 4:
            raise IntegrityError("sealed box truncated")
        body_len = int.from_bytes(data[off : off + 4], "big")
        end = off + 4 + body_len
        if len(data) != end:
            raise IntegrityError("sealed box length mismatch")
        return cls(key_block=data[2:off], body=data[off + 4 : end])


_KEY_BLOCK_LEN = 32 + _SYM_KEY_LEN + _HASH_LEN + _SIG_LEN + 16


def sealed_box_size(plaintext_len: int) -> int:
    """Total wire size of a sealed box over a plaintext of given length."""
    return 2 + _KEY_BLOCK_LEN + 4 + plaintext_len + 16


def _wrap_key(dh: GroupElement, eph_pub: bytes, recipient_pub: bytes) -> bytes:
    return _sha256(b"otmix/v1/box-wrap", dh.to_bytes(), eph_pub, recipient_pub)


def seal(
    sender_sk: Scalar,
    recipient_pk: GroupElement,
    plaintext: bytes,
    rng=None,
    max_plaintext: Optional[int] = None,
) -> SealedBox:
    if max_plaintext is not None and len(plaintext) > max_plaintext:
        raise CryptoError("payload too long")
    sym_key = (
        rng.getrandbits(256).to_bytes(32, "little") if rng is not None else secrets.token_bytes(32)
    )
    body = ChaCha20Poly1305(sym_key).encrypt(_ZERO_NONCE, plaintext, b"")
    digest = _sha256(b"otmix/v1/box-hash", body)
    sig = sign(sender_sk, digest)
    eph = _rand_scalar(rng)
    eph_pub = (eph * BASEPOINT).to_bytes()
    wrap = _wrap_key(eph * recipient_pk, eph_pub, recipient_pk.to_bytes())
    key_ct = ChaCha20Poly1305(wrap).encrypt(_ZERO_NONCE, sym_key + digest + sig, b"")
    return SealedBox(key_block=eph_pub + key_ct, body=body)


def _unwrap(recipient_sk: Scalar, box: SealedBox) -> Tuple[bytes, bytes, bytes, bytes]:
    """Return (plaintext, digest, signature, dh_point_bytes)."""
    if len(box.key_block) != _KEY_BLOCK_LEN:
        raise IntegrityError("key block has wrong length")
    try:
        eph_pub = GroupElement.from_bytes(box.key_block[:32])
    except GroupError as exc:
        raise IntegrityError(f"bad ephemeral point: {exc}") from exc
    dh = recipient_sk * eph_pub
    recipient_pub = (recipient_sk * BASEPOINT).to_bytes()
    wrap = _wrap_key(dh, box.key_block[:32], recipient_pub)
    try:
        blob = ChaCha20Poly1305(wrap).decrypt(_ZERO_NONCE, box.key_block[32:], b"")
    except _AeadInvalidTag as exc:
        raise WrongKeyError("key unwrap failed") from exc
    sym_key, digest, sig = (
        blob[:_SYM_KEY_LEN],
        blob[_SYM_KEY_LEN : _SYM_KEY_LEN + _HASH_LEN],
        blob[_SYM_KEY_LEN + _HASH_LEN :],
    )
    if _sha256(b"otmix/v1/box-hash", box.body) != digest:
        raise IntegrityError("body hash mismatch")
    try:
        plaintext = ChaCha20Poly1305(sym_key).decrypt(_ZERO_NONCE, box.body, b"")
    except _AeadInvalidTag as exc:
        raise IntegrityError("body decryption failed") from exc
    return plaintext, digest, sig, dh.to_bytes()


def open_box(recipient_sk: Scalar, sender_pk: GroupElement, box: SealedBox) -> bytes:
    """Open a sealed box; raises IntegrityError / WrongKeyError when any
    byte was altered or the keys do not match."""
    plaintext, digest, sig, _ = _unwrap(recipient_sk, box)
    if not verify(sender_pk, digest, sig):
        raise IntegrityError("sender signature invalid")
    return plaintext


@dataclass(frozen=True)
class UnverifiedOpen:
    """Decrypted box whose sender signature has NOT been checked yet.

    Callers must pass this through confirm_box_sender() once they know the
    claimed sender (used when the plaintext itself names the sender)."""

    plaintext: bytes
    digest: bytes
    signature: bytes


def open_box_unverified(recipient_sk: Scalar, box: SealedBox) -> UnverifiedOpen:
    plaintext, digest, sig, _ = _unwrap(recipient_sk, box)
    return UnverifiedOpen(plaintext=plaintext, digest=digest, signature=sig)


def confirm_box_sender(sender_pk: GroupElement, opened: UnverifiedOpen) -> bool:
    return verify(sender_pk, opened.digest, opened.signature)


def reveal_box_dh(recipient_sk: Scalar, box: SealedBox) -> bytes:
    """Disclose the DH point of one box so a third party can check the
    recipient's claimed decryption without learning the recipient key.
    Used only by the audit protocol, scoped to the audited message."""
    eph_pub = GroupElement.from_bytes(box.key_block[:32])
    return (recipient_sk * eph_pub).to_bytes()


def open_box_with_dh_unverified(
    dh_point: bytes, recipient_pk: GroupElement, box: SealedBox
) -> UnverifiedOpen:
    """Audit-side counterpart of reveal_box_dh(); the sender signature is
    returned for checking once the origin is established."""
    try:
        dh = GroupElement.from_bytes(dh_point)
    except GroupError as exc:
        raise IntegrityError(f"revealed DH point malformed: {exc}") from exc
    wrap = _wrap_key(dh, box.key_block[:32], recipient_pk.to_bytes())
    try:
        blob = ChaCha20Poly1305(wrap).decrypt(_ZERO_NONCE, box.key_block[32:], b"")
    except _AeadInvalidTag as exc:
        raise IntegrityError("revealed DH point does not open the key block") from exc
    sym_key, digest, sig = blob[:32], blob[32:64], blob[64:]
    if _sha256(b"otmix/v1/box-hash", box.body) != digest:
        raise IntegrityError("body hash mismatch")
    try:
        plaintext = ChaCha20Poly1305(sym_key).decrypt(_ZERO_NONCE, box.body, b"")
    except _AeadInvalidTag as exc:
        raise IntegrityError("body decryption failed") from exc
    return UnverifiedOpen(plaintext=plaintext, digest=digest, signature=sig)


def open_box_with_dh(
    dh_point: bytes, recipient_pk: GroupElement, sender_pk: GroupElement, box: SealedBox
) -> bytes:
    """Audit-side counterpart of reveal_box_dh()."""
    opened = open_box_with_dh_unverified(dh_point, recipient_pk, box)
    if not verify(sender_pk, opened.digest, opened.signature):
        raise IntegrityError("sender signature invalid")
    return opened.plaintext


# ---------------------------------------------------------------------------
# Tag and round-value derivation
# ---------------------------------------------------------------------------


def kdf_tag(secret: bytes, counter: int, direction: int) -> bytes:
    """32-byte message tag from a pair secret, counter, and direction bit.

    Distinct (counter, direction) inputs give independent-looking tags;
    without the secret the output is indistinguishable from random.
    """
    if not secret:
        raise CryptoError("empty pair secret")
    if direction not in (0, 1):
        raise CryptoError("direction must be 0 or 1")
    info = counter.to_bytes(8, "big") + bytes([direction])
    return _hkdf(secret, b"otmix/v1/tag", info, TAG_LEN)


def round_value(xor_of_node_values: bytes, round_no: int, q3: int, sub_len: int = 8) -> bytes:
    """Per-round value V, q3 equal substrings of sub_len bytes each.

    8-byte substrings keep the chance of two equal substrings below
    q3^2 * 2^-64, negligible for any realistic node count.
    """
    return _hkdf(
        xor_of_node_values,
        b"otmix/v1/round-value",
        round_no.to_bytes(8, "big"),
        q3 * sub_len,
    )


# ---------------------------------------------------------------------------
# 1-out-of-n oblivious transfer
# ---------------------------------------------------------------------------
#
# Direct 1-of-n in the two-round DH style: the sender publishes A = a*G;
# the receiver with choice c sends B = c*A + b*G and keys H(b*A); the
# sender encrypts string i under H(a*B - i*a*A).  Only index c matches.
# String encryption is an AEAD, so "cannot decrypt" is a clean
# authentication failure rather than garbage plaintext.


@dataclass(frozen=True)
class OtSession:
    role: str                       # "sender" | "receiver"
    n: int
    sender_point: GroupElement      # A
    receiver_point: Optional[GroupElement] = None  # B
    choice: Optional[int] = None    # receiver only
    key: Optional[bytes] = None     # receiver's derived point bytes
    secret: Optional[Scalar] = None # sender's a


def ot_sender_init(n: int, rng=None) -> OtSession:
    if n < 1:
        raise OtError("n must be >= 1")
    a = _rand_scalar(rng)
    return OtSession(role="sender", n=n, sender_point=a * BASEPOINT, secret=a)


def _ot_string_key(point: GroupElement, a_pub: bytes, b_pub: bytes, index: int) -> bytes:
    return _sha256(b"otmix/v1/ot-key", point.to_bytes(), a_pub, b_pub, index.to_bytes(4, "big"))


def ot_receiver_choose(
    n: int, sender_point: GroupElement, choice: int, rng=None
) -> Tuple[GroupElement, OtSession]:
    """Pick index ``choice`` (1-based); the returned receiver point is a
    uniformly random group element whatever the choice."""
    if n < 1:
        raise OtError("n must be >= 1")
    if not 1 <= choice <= n:
        raise OtError(f"choice {choice} out of range 1..{n}")
    if sender_point.is_identity():
        raise OtError("sender point must not be the identity")
    b = _rand_scalar(rng)
    receiver_point = choice * sender_point + b * BASEPOINT
    key = _ot_string_key(
        b * sender_point, sender_point.to_bytes(), receiver_point.to_bytes(), choice
    )
    session = OtSession(
        role="receiver",
        n=n,
        sender_point=sender_point,
        receiver_point=receiver_point,
        choice=choice,
        key=key,
    )
    return receiver_point, session


def ot_sender_respond(
    session: OtSession, receiver_point: GroupElement, strings: Sequence[bytes]
) -> List[bytes]:
    """Encrypt all n strings; exactly the receiver's chosen index will
    authenticate on the other side."""
    if session.role != "sender" or session.secret is None:
        raise OtError("not a sender session")
    if len(strings) != session.n:
        raise OtError("string count does not match session")
    if len({len(s) for s in strings}) > 1:
        raise OtError("strings must all have equal length")
    a = session.secret
    a_pub = session.sender_point.to_bytes()
    b_pub = receiver_point.to_bytes()
    aB = a * receiver_point
    aA = (a * a) * BASEPOINT  # == a * sender_point, one fixed-base multiply
    cts = []
    point = aB
    for i, s in enumerate(strings, start=1):
        point = point - aA  # a*B - i*a*A, built incrementally
        key = _ot_string_key(point, a_pub, b_pub, i)
        cts.append(ChaCha20Poly1305(key).encrypt(_ZERO_NONCE, s, b""))
    return cts


def ot_receiver_recover(session: OtSession, ciphertexts: Sequence[bytes]) -> bytes:
    if session.role != "receiver" or session.key is None or session.choice is None:
        raise OtError("not a receiver session")
    if len(ciphertexts) != session.n:
        raise OtError("ciphertext count does not match session")
    try:
        return ChaCha20Poly1305(session.key).decrypt(
            _ZERO_NONCE, ciphertexts[session.choice - 1], b""
        )
    except _AeadInvalidTag as exc:
        raise IntegrityError("chosen ciphertext failed to authenticate") from exc


# ---------------------------------------------------------------------------
# Perfectly hiding commitments to permutations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PermOpening:
    perm: Tuple[int, ...]
    blinding: Scalar


@dataclass(frozen=True)
class PermCommitment:
    commitment: GroupElement

    def to_bytes(self) -> bytes:
        return self.commitment.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PermCommitment":
        return cls(GroupElement.from_bytes(data))


def _perm_message(perm: Sequence[int]) -> Scalar:
    # the permutation is committed as the byte string of its image sequence
    encoded = b"".join(i.to_bytes(4, "big") for i in perm)
    return hash_to_scalar(b"otmix/v1/perm-encode", len(perm).to_bytes(4, "big"), encoded)


def commit_perm(perm: Sequence[int], rng=None) -> Tuple[PermCommitment, PermOpening]:
    """Pedersen commitment m*G + r*H to a permutation.  Hiding is perfect
    (the commitment is uniform whatever the permutation); binding holds
    unless someone can take discrete logs."""
    if sorted(perm) != list(range(len(perm))):
        raise CryptoError("not a permutation of 0..n-1")
    r = _rand_scalar(rng)
    m = _perm_message(perm)
    c = m * BASEPOINT + r * PEDERSEN_H
    return PermCommitment(commitment=c), PermOpening(perm=tuple(perm), blinding=r)


def verify_perm(commitment: PermCommitment, opening: PermOpening) -> bool:
    try:
        if sorted(opening.perm) != list(range(len(opening.perm))):
            return False
        m = _perm_message(opening.perm)
        return commitment.commitment == m * BASEPOINT + opening.blinding * PEDERSEN_H
    except (CryptoError, GroupError):
        return False

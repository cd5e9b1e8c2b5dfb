"""Wire formats: canonical encodings, fixed sizes, envelope construction."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from otmix import crypto as c
from otmix import wire as w


@pytest.fixture(scope="module")
def keys():
    return c.keygen(b"a" * 32), c.keygen(b"b" * 32), c.keygen(b"n" * 32)


def build(keys, rng, data=b"hi bob", flags=0, counter=1):
    alice, bob, l2 = keys
    return w.build_envelope(
        alice, bob.public, data, 7, l2.public, 1000,
        sigma=b"\x05" * 32, counter=counter, direction=0, flags=flags, rng=rng,
    )


def test_envelope_roundtrip(keys, rng):
    env, tm, tag = build(keys, rng)
    assert w.Envelope.from_bytes(env.to_bytes()) == env
    assert w.TaggedMessage.from_bytes(tm.to_bytes()) == tm


def test_all_envelopes_identical_length(keys, rng):
    # forward content, returns, and acknowledgments share one wire shape
    sizes = set()
    tm_sizes = set()
    cases = [(b"", 0), (b"x", 0), (b"y" * w.MAX_DATA_BYTES, 0), (b"", w.FLAG_ACK),
             (b"reply", w.FLAG_ACK)]
    for i, (data, flags) in enumerate(cases):
        env, tm, _ = build(keys, rng, data=data, counter=i + 1, flags=flags)
        sizes.add(len(env.to_bytes()))
        tm_sizes.add(len(tm.to_bytes()))
    assert sizes == {w.ENVELOPE_LEN}
    assert tm_sizes == {w.TAGGED_MESSAGE_LEN}


def test_payload_too_long(keys, rng):
    with pytest.raises(w.PayloadTooLong):
        build(keys, rng, data=b"z" * (w.MAX_DATA_BYTES + 1))


def test_envelope_opens_at_l2_then_recipient(keys, rng):
    alice, bob, l2 = keys
    env, tm, tag = build(keys, rng)
    inner = w.EnvelopeInner.from_bytes(c.open_box(l2.secret, alice.public, env.outer))
    assert inner.l2_id == 7 == env.l2_hint
    assert inner.ts == 1000
    assert inner.message.tag == tag == c.kdf_tag(b"\x05" * 32, 1, 0)
    payload = w.Payload.from_bytes(c.open_box(bob.secret, alice.public, inner.message.box))
    data, flags = w.unpack_payload_data(payload.x)
    assert data == b"hi bob" and flags == 0


def test_envelope_wrong_l2_key(keys, rng):
    alice, _, _ = keys
    env, _, _ = build(keys, rng)
    other = c.keygen(b"z" * 32)
    with pytest.raises(c.WrongKeyError):
        c.open_box(other.secret, alice.public, env.outer)


def test_version_byte_rejected_everywhere(keys, rng):
    env, tm, _ = build(keys, rng)
    for cls, raw in (
        (w.Envelope, env.to_bytes()),
        (w.TaggedMessage, tm.to_bytes()),
    ):
        bad = bytearray(raw)
        bad[0] = 0x02
        with pytest.raises(w.VersionError):
            cls.from_bytes(bytes(bad))


def test_truncation_rejected(keys, rng):
    env, tm, _ = build(keys, rng)
    with pytest.raises(w.WireError):
        w.Envelope.from_bytes(env.to_bytes()[:-3])
    with pytest.raises(w.WireError):
        w.TaggedMessage.from_bytes(tm.to_bytes() + b"\x00")


def test_fresh_randomness_every_build(keys, rng):
    # the same (peer, counter) built twice shares no ciphertext bytes
    # beyond chance: positions where bytes agree should be ~1/256
    env1, _, _ = build(keys, rng)
    env2, _, _ = build(keys, rng)
    a, b = env1.outer.to_bytes(), env2.outer.to_bytes()
    agree = sum(1 for x, y in zip(a, b) if x == y)
    assert agree < len(a) * 0.05


def test_statistical_distinctness_100_builds(keys, rng):
    seen = set()
    for _ in range(100):
        env, _, _ = build(keys, rng)
        seen.add(env.to_bytes())
    assert len(seen) == 100


def test_batch_bucket_roundtrip(keys, rng):
    _, _, _ = keys
    tms = []
    for i in range(4):
        _, tm, _ = build(keys, rng, counter=i + 1)
        tms.append(tm)
    batch = w.Batch(round_no=3, messages=tuple(tms), commitment=b"\x11" * 32)
    assert w.Batch.from_bytes(batch.to_bytes()) == batch
    bucket = w.Bucket(round_no=3, origin_l2=101, messages=tuple(tms[:2]))
    assert w.Bucket.from_bytes(bucket.to_bytes()) == bucket


def test_publication_entry_and_blob_roundtrip(keys, rng):
    _, tm, tag = build(keys, rng)
    blob = w.DeliveryBlob(message=tm, node_id=201, ordinal=9, signature=b"\x07" * 64)
    assert w.DeliveryBlob.from_bytes(blob.to_bytes()) == blob
    assert len(blob.to_bytes()) == w.DELIVERY_BLOB_LEN
    entry = w.PublicationEntry(tag=tag, ordinal=9, published_at=55, blob=blob)
    assert w.PublicationEntry.from_bytes(entry.to_bytes()) == entry
    row = w.BoardEntry(ordinal=9, tag=tag, published_at=55)
    assert w.BoardEntry.from_bytes(row.to_bytes()) == row


def test_pair_state_roundtrip(keys, rng):
    alice, bob, _ = keys
    env, _, tag = build(keys, rng)
    ps = w.PairState(
        peer_pk=bob.public,
        sigma=b"\x05" * 32,
        counter=9,
        direction=1,
        pending=[w.PendingSend(tag=tag, envelope=env.to_bytes(), deadline=123)],
    )
    decoded = w.PairState.from_bytes(ps.to_bytes())
    assert decoded.peer_pk == ps.peer_pk
    assert decoded.sigma == ps.sigma
    assert decoded.counter == 9 and decoded.direction == 1
    assert decoded.pending[0].tag == tag and decoded.pending[0].deadline == 123


def test_envelope_golden(golden):
    env = w.Envelope.from_bytes(golden["wire.envelope"])
    assert env.l2_hint == 7
    alice = c.keygen(b"alice-golden-seed".ljust(32, b"\0"))
    bob = c.keygen(b"bob-golden-seed".ljust(32, b"\0"))
    l2 = c.keygen(b"l2-golden-seed".ljust(32, b"\0"))
    inner = w.EnvelopeInner.from_bytes(c.open_box(l2.secret, alice.public, env.outer))
    assert inner.ts == 1_700_000_000
    assert inner.message.tag == golden["wire.envelope.tag"]
    assert inner.message.to_bytes() == golden["wire.envelope.tm"]
    payload = w.Payload.from_bytes(c.open_box(bob.secret, alice.public, inner.message.box))
    data, flags = w.unpack_payload_data(payload.x)
    assert data == b"golden envelope data" and flags == 0


@settings(max_examples=30, deadline=None)
@given(st.binary(min_size=0, max_size=w.MAX_DATA_BYTES), st.integers(0, 255))
def test_payload_container_roundtrip(data, flags):
    container = w.pack_payload_data(data, flags)
    assert len(container) == w.PAYLOAD_BYTES
    out, f = w.unpack_payload_data(container)
    assert out == data and f == flags

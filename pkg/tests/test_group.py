"""Group layer: canonical encodings, algebra, and the uniform map."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from otmix import group as g

# the one encoding everyone on earth agrees on
BASEPOINT_HEX = "e2f2ae0a6abc4e71a884a961c500515f58e30b6aa582dd8db6a65945e08d2d76"


def test_basepoint_encoding():
    assert g.BASEPOINT.to_bytes().hex() == BASEPOINT_HEX


def test_identity_and_order():
    assert g.IDENTITY.to_bytes() == bytes(32)
    assert (g.GROUP_ORDER * g.BASEPOINT).is_identity()
    assert not g.BASEPOINT.is_identity()


def test_decode_encode_roundtrip(rng):
    for _ in range(30):
        e = g.Scalar.random(rng) * g.BASEPOINT
        assert g.GroupElement.from_bytes(e.to_bytes()) == e


def test_canonicality():
    # only one byte string per element: re-encoding a decode is identity
    for k in range(1, 40):
        enc = (g.Scalar(k) * g.BASEPOINT).to_bytes()
        assert g.GroupElement.from_bytes(enc).to_bytes() == enc
    # a non-canonical field encoding is rejected
    with pytest.raises(g.GroupError):
        g.GroupElement.from_bytes(b"\xff" * 32)
    with pytest.raises(g.GroupError):
        g.GroupElement.from_bytes(bytes(31))


def test_algebra(rng):
    a, b = g.Scalar.random(rng), g.Scalar.random(rng)
    A, B = a * g.BASEPOINT, b * g.BASEPOINT
    assert A + B == B + A
    assert (a + b) * g.BASEPOINT == A + B
    assert (a * b) * g.BASEPOINT == a * B == b * A
    assert A - A == g.IDENTITY
    assert -(-A) == A
    assert a.inverse() * A == g.BASEPOINT


def test_precompute_agrees(rng):
    a, b = g.Scalar.random(rng), g.Scalar.random(rng)
    B = b * g.BASEPOINT
    tabled = g.GroupElement.from_bytes(B.to_bytes()).precompute()
    assert a * tabled == a * B


def test_small_scalar_multiples():
    acc = g.IDENTITY
    for k in range(1, 20):
        acc = acc + g.BASEPOINT
        assert g.Scalar(k) * g.BASEPOINT == acc
        assert k * g.BASEPOINT == acc


def test_scalar_encoding():
    s = g.Scalar(12345)
    assert g.Scalar.from_bytes(s.to_bytes()) == s
    with pytest.raises(g.GroupError):
        g.Scalar.from_bytes((g.GROUP_ORDER).to_bytes(32, "little"))
    wide = g.Scalar.from_bytes_wide(b"\xff" * 64)
    assert 0 <= wide.value < g.GROUP_ORDER


def test_uniform_map_valid_and_distinct():
    seen = set()
    for i in range(40):
        e = g.element_from_uniform(i.to_bytes(1, "big") * 64)
        # output always decodes canonically
        assert g.GroupElement.from_bytes(e.to_bytes()) == e
        seen.add(e.to_bytes())
    assert len(seen) == 40


def test_hash_to_element_domain_separation():
    assert g.hash_to_element(b"d1", b"x") != g.hash_to_element(b"d2", b"x")
    assert g.hash_to_element(b"d1", b"x") == g.hash_to_element(b"d1", b"x")


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=g.GROUP_ORDER - 1),
       st.integers(min_value=0, max_value=g.GROUP_ORDER - 1))
def test_scalar_ring_properties(x, y):
    sx, sy = g.Scalar(x), g.Scalar(y)
    assert (sx + sy).value == (x + y) % g.GROUP_ORDER
    assert (sx * sy).value == (x * y) % g.GROUP_ORDER
    assert (sx - sy).value == (x - y) % g.GROUP_ORDER


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=1, max_value=g.GROUP_ORDER - 1),
       st.integers(min_value=1, max_value=g.GROUP_ORDER - 1))
def test_scalar_mult_distributes(x, y):
    assert (g.Scalar(x) + g.Scalar(y)) * g.BASEPOINT == (
        g.Scalar(x) * g.BASEPOINT + g.Scalar(y) * g.BASEPOINT
    )


def test_golden_vectors(golden):
    assert golden["group.basepoint"] == g.BASEPOINT.to_bytes()
    assert golden["group.scalar7_base"] == (g.Scalar(7) * g.BASEPOINT).to_bytes()

"""Prime-order group with canonical 32-byte encodings (ristretto255).

The group is the quotient of the edwards25519 curve that removes the
cofactor, giving a group of prime order in which DDH is assumed hard.
Elements and scalars both encode canonically to 32 bytes: every element
accepts exactly one byte string, and ``decode(encode(x)) == x``.

Everything here is plain-integer arithmetic; no constant-time guarantees
are made (or needed for the simulation harness built on top).
"""

from __future__ import annotations

import hashlib
import secrets
from typing import Iterable, Optional, Sequence, Tuple

try:  # big win on 255-bit modular products; plain ints work fine without
    from gmpy2 import mpz as _mpz
except ImportError:  # pragma: no cover
    def _mpz(x):
        return x

__all__ = [
    "GroupError",
    "Scalar",
    "GroupElement",
    "GROUP_ORDER",
    "BASEPOINT",
    "IDENTITY",
    "element_from_uniform",
    "hash_to_element",
    "hash_to_scalar",
]

# ---------------------------------------------------------------------------
# Field GF(2^255 - 19)
# ---------------------------------------------------------------------------

P = _mpz(2**255 - 19)
L = 2**252 + 27742317777372353535851937790883648493  # group order

D = (-121665 * pow(121666, P - 2, P)) % P
SQRT_M1 = pow(_mpz(2), (P - 1) // 4, P)
if SQRT_M1 * SQRT_M1 % P != P - 1:  # pick the other root of -1
    SQRT_M1 = P - SQRT_M1


def _is_negative(x: int) -> bool:
    return x & 1 == 1


def _abs(x: int) -> int:
    return P - x if _is_negative(x) else x


def _sqrt_ratio_m1(u: int, v: int) -> Tuple[bool, int]:
    """Return (was_square, r) with r = sqrt(u/v), or sqrt(i*u/v) if u/v
    is not square.  r is always the non-negative root."""
    v3 = v * v % P * v % P
    v7 = v3 * v3 % P * v % P
    r = u * v3 % P * pow(u * v7 % P, (P - 5) // 8, P) % P
    check = v * r % P * r % P
    u_neg = (P - u) % P
    correct = check == u % P
    flipped = check == u_neg
    flipped_i = check == u_neg * SQRT_M1 % P
    if flipped or flipped_i:
        r = r * SQRT_M1 % P
    return (correct or flipped, _abs(r))


# Derived curve constants used by the encoding and the element map.
_ok, INVSQRT_A_MINUS_D = _sqrt_ratio_m1(1, (-1 - D) % P)
assert _ok, "1/(a-d) must be square"
ONE_MINUS_D_SQ = (1 - D * D) % P
D_MINUS_ONE_SQ = (D - 1) * (D - 1) % P
_ok, SQRT_AD_MINUS_ONE = _sqrt_ratio_m1((-D - 1) % P, 1)
assert _ok, "a*d-1 must be square"

# ---------------------------------------------------------------------------
# edwards25519 in extended (X, Y, Z, T) coordinates with a = -1
# ---------------------------------------------------------------------------

_Point = Tuple[int, int, int, int]

_ID: _Point = (0, 1, 1, 0)
_2D = 2 * D % P


def _pt_add(p: _Point, q: _Point) -> _Point:
    X1, Y1, Z1, T1 = p
    X2, Y2, Z2, T2 = q
    A = (Y1 - X1) * (Y2 - X2) % P
    B = (Y1 + X1) * (Y2 + X2) % P
    C = T1 * _2D % P * T2 % P
    Dd = 2 * Z1 * Z2 % P
    E = B - A
    F = Dd - C
    G = Dd + C
    H = B + A
    return (E * F % P, G * H % P, F * G % P, E * H % P)


def _pt_double(p: _Point) -> _Point:
    X1, Y1, Z1, _ = p
    A = X1 * X1 % P
    B = Y1 * Y1 % P
    C = 2 * Z1 * Z1 % P
    H = (A + B) % P
    E = (H - (X1 + Y1) ** 2) % P
    G = (A - B) % P
    F = (C + G) % P
    return (E * F % P, G * H % P, F * G % P, E * H % P)


def _pt_neg(p: _Point) -> _Point:
    X, Y, Z, T = p
    return ((P - X) % P, Y, Z, (P - T) % P)


def _pt_window(p: _Point) -> list:
    # tbl[i] = i*p for i in 1..15
    tbl = [p]
    for _ in range(14):
        tbl.append(_pt_add(tbl[-1], p))
    return tbl


def _pt_mul_window(k: int, tbl: Sequence[_Point]) -> _Point:
    q = _ID
    nibbles = []
    while k:
        nibbles.append(k & 15)
        k >>= 4
    for nib in reversed(nibbles):
        q = _pt_double(_pt_double(_pt_double(_pt_double(q))))
        if nib:
            q = _pt_add(q, tbl[nib - 1])
    return q


def _pt_comb(p: _Point) -> list:
    # comb[w][m-1] = (16^w * m) * p: 64 radix-16 digit rows, no doublings
    # needed at multiplication time
    comb = []
    cur = p
    for _ in range(64):
        row = [cur]
        for _ in range(14):
            row.append(_pt_add(row[-1], cur))
        comb.append(row)
        cur = _pt_add(row[-1], cur)
    return comb


def _pt_mul_comb(k: int, comb: Sequence[Sequence[_Point]]) -> _Point:
    q = _ID
    w = 0
    while k:
        nib = k & 15
        if nib:
            q = _pt_add(q, comb[w][nib - 1])
        k >>= 4
        w += 1
    return q


def _pt_mul(k: int, p: _Point) -> _Point:
    if k == 0:
        return _ID
    if k < 16:  # small multiples come up in the OT key schedule
        q = p
        for bit in bin(k)[3:]:
            q = _pt_double(q)
            if bit == "1":
                q = _pt_add(q, p)
        return q
    return _pt_mul_window(k, _pt_window(p))


# Basepoint: y = 4/5, x the even root.
_By = 4 * pow(5, P - 2, P) % P
_Bxx = (_By * _By - 1) * pow(D * _By * _By + 1, P - 2, P) % P
_Bx = pow(_Bxx, (P + 3) // 8, P)
if (_Bx * _Bx - _Bxx) % P != 0:
    _Bx = _Bx * SQRT_M1 % P
if _is_negative(_Bx):
    _Bx = P - _Bx
_B: _Point = (_Bx, _By, 1, _Bx * _By % P)

# Fixed-base comb over radix-256 digits: _COMB[w][m-1] = (256^w * m) * B.
# Costs ~8k additions once at import; basepoint multiplies then need at
# most 32 additions and no doublings.
_COMB: list = []
_cur = _B
for _w in range(32):
    _row = [_cur]
    for _m in range(254):
        _row.append(_pt_add(_row[-1], _cur))
    _COMB.append(_row)
    _cur = _pt_add(_row[-1], _cur)  # 256 * _cur


def _pt_mul_base(k: int) -> _Point:
    q = _ID
    w = 0
    while k:
        byte = k & 255
        if byte:
            q = _pt_add(q, _COMB[w][byte - 1])
        k >>= 8
        w += 1
    return q


# ---------------------------------------------------------------------------
# ristretto255 encode / decode / equality / element map
# ---------------------------------------------------------------------------


class GroupError(ValueError):
    """Invalid encoding or out-of-range value for the group."""


def _decode(data: bytes) -> _Point:
    if len(data) != 32:
        raise GroupError("element encoding must be 32 bytes")
    s = _mpz(int.from_bytes(data, "little"))
    if s >= P or _is_negative(s):
        raise GroupError("non-canonical element encoding")
    ss = s * s % P
    u1 = (1 - ss) % P
    u2 = (1 + ss) % P
    u2_sqr = u2 * u2 % P
    v = (-(D * u1 % P * u1) - u2_sqr) % P
    was_square, invsqrt = _sqrt_ratio_m1(1, v * u2_sqr % P)
    den_x = invsqrt * u2 % P
    den_y = invsqrt * den_x % P * v % P
    x = _abs(2 * s % P * den_x % P)
    y = u1 * den_y % P
    t = x * y % P
    if not was_square or _is_negative(t) or y == 0:
        raise GroupError("encoding is not a valid group element")
    return (x, y, 1, t)


def _encode(p: _Point) -> bytes:
    X, Y, Z, T = p
    u1 = (Z + Y) * (Z - Y) % P
    u2 = X * Y % P
    _, invsqrt = _sqrt_ratio_m1(1, u1 * u2 % P * u2 % P)
    den1 = invsqrt * u1 % P
    den2 = invsqrt * u2 % P
    z_inv = den1 * den2 % P * T % P
    if _is_negative(T * z_inv % P):
        x, y = Y * SQRT_M1 % P, X * SQRT_M1 % P
        den_inv = den1 * INVSQRT_A_MINUS_D % P
    else:
        x, y = X, Y
        den_inv = den2
    if _is_negative(x * z_inv % P):
        y = (P - y) % P
    s = _abs(den_inv * ((Z - y) % P) % P)
    return int(s).to_bytes(32, "little")


def _equal(p: _Point, q: _Point) -> bool:
    X1, Y1, _, _ = p
    X2, Y2, _, _ = q
    return (X1 * Y2 - Y1 * X2) % P == 0 or (Y1 * Y2 - X1 * X2) % P == 0


def _map(t: int) -> _Point:
    """The one-way map from a field element onto the group (Elligator)."""
    r = SQRT_M1 * t % P * t % P
    u = (r + 1) * ONE_MINUS_D_SQ % P
    v = (-1 - r * D) % P * ((r + D) % P) % P
    was_square, s = _sqrt_ratio_m1(u, v)
    if was_square:
        c = P - 1
    else:
        s = (P - _abs(s * t % P)) % P
        c = r
    n = (c * ((r - 1) % P) % P * D_MINUS_ONE_SQ - v) % P
    w0 = 2 * s * v % P
    w1 = n * SQRT_AD_MINUS_ONE % P
    w2 = (1 - s * s) % P
    w3 = (1 + s * s) % P
    return (w0 * w3 % P, w2 * w1 % P, w1 * w3 % P, w0 * w2 % P)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

GROUP_ORDER = L


class Scalar:
    """Scalar modulo the group order, canonically encoded in 32 bytes."""

    __slots__ = ("value",)

    def __init__(self, value: int):
        self.value = value % L

    @classmethod
    def random(cls, rng=None) -> "Scalar":
        bits = rng.getrandbits(512) if rng is not None else secrets.randbits(512)
        return cls(bits % L)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Scalar":
        if len(data) != 32:
            raise GroupError("scalar encoding must be 32 bytes")
        v = int.from_bytes(data, "little")
        if v >= L:
            raise GroupError("non-canonical scalar encoding")
        return cls(v)

    @classmethod
    def from_bytes_wide(cls, data: bytes) -> "Scalar":
        return cls(int.from_bytes(data, "little"))

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(32, "little")

    def inverse(self) -> "Scalar":
        return Scalar(pow(self.value, L - 2, L))

    def __add__(self, other: "Scalar") -> "Scalar":
        return Scalar(self.value + other.value)

    def __sub__(self, other: "Scalar") -> "Scalar":
        return Scalar(self.value - other.value)

    def __mul__(self, other):
        if isinstance(other, Scalar):
            return Scalar(self.value * other.value)
        if isinstance(other, GroupElement):
            return other._mul(self.value)
        return NotImplemented

    def __neg__(self) -> "Scalar":
        return Scalar(-self.value)

    def __eq__(self, other) -> bool:
        return isinstance(other, Scalar) and self.value == other.value

    def __hash__(self) -> int:
        return hash(("Scalar", self.value))

    def __repr__(self) -> str:
        return f"Scalar({self.value:#x})"


class GroupElement:
    """Group element; supports +, -, unary -, and scalar multiplication."""

    __slots__ = ("_pt", "_enc", "_tbl")

    def __init__(self, pt: _Point, enc: Optional[bytes] = None):
        self._pt = pt
        self._enc = enc
        self._tbl = None

    @classmethod
    def from_bytes(cls, data: bytes) -> "GroupElement":
        return cls(_decode(data), bytes(data))

    def to_bytes(self) -> bytes:
        if self._enc is None:
            self._enc = _encode(self._pt)
        return self._enc

    def is_identity(self) -> bool:
        return _equal(self._pt, _ID)

    def precompute(self) -> "GroupElement":
        """Build a comb table; worthwhile for long-lived keys (one-time
        cost of ~1000 additions, then ~60 additions per multiply)."""
        if self._tbl is None:
            self._tbl = _pt_comb(self._pt)
        return self

    def _mul(self, k: int) -> "GroupElement":
        k %= L
        if self._enc is not None and self._enc == _BASE_ENC:
            return GroupElement(_pt_mul_base(k))
        if self._tbl is not None and k >= 16:
            return GroupElement(_pt_mul_comb(k, self._tbl))
        return GroupElement(_pt_mul(k, self._pt))

    def __add__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(_pt_add(self._pt, other._pt))

    def __sub__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(_pt_add(self._pt, _pt_neg(other._pt)))

    def __neg__(self) -> "GroupElement":
        return GroupElement(_pt_neg(self._pt))

    def __rmul__(self, k) -> "GroupElement":
        if isinstance(k, Scalar):
            return self._mul(k.value)
        if isinstance(k, int):
            return self._mul(k)
        return NotImplemented

    def __mul__(self, k) -> "GroupElement":
        return self.__rmul__(k)

    def __eq__(self, other) -> bool:
        return isinstance(other, GroupElement) and _equal(self._pt, other._pt)

    def __hash__(self) -> int:
        return hash(("GroupElement", self.to_bytes()))

    def __repr__(self) -> str:
        return f"GroupElement({self.to_bytes().hex()})"


_BASE_ENC = _encode(_B)
BASEPOINT = GroupElement(_B, _BASE_ENC)
IDENTITY = GroupElement(_ID)


def element_from_uniform(data: bytes) -> GroupElement:
    """Map 64 uniform bytes onto the group (uniform output distribution)."""
    if len(data) != 64:
        raise GroupError("uniform element derivation needs 64 bytes")
    mask = (1 << 255) - 1
    t1 = _mpz(int.from_bytes(data[:32], "little") & mask)
    t2 = _mpz(int.from_bytes(data[32:], "little") & mask)
    return GroupElement(_pt_add(_map(t1 % P), _map(t2 % P)))


def hash_to_element(domain: bytes, *parts: bytes) -> GroupElement:
    h = hashlib.sha512(domain)
    for part in parts:
        h.update(part)
    return element_from_uniform(h.digest())


def hash_to_scalar(domain: bytes, *parts: Iterable) -> Scalar:
    h = hashlib.sha512(domain)
    for part in parts:
        h.update(part)
    return Scalar.from_bytes_wide(h.digest())


def random_element(rng=None) -> GroupElement:
    """A uniformly random element (used for chaff that must parse)."""
    return Scalar.random(rng) * BASEPOINT

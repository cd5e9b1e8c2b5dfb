#!/usr/bin/env python3
"""Generate the frozen golden-vector file used by the test suite.

Run once; the output is committed.  Layout of golden_vectors.bin:

    repeated records until EOF:
        u16  name length (big endian)
        name bytes (ascii)
        u32  data length (big endian)
        data bytes

Every vector is produced with fixed seeds / fixed RNGs, so regenerating
with an unchanged implementation reproduces the file byte for byte.
"""

import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from otmix import crypto, wire
from otmix.group import BASEPOINT, Scalar


def records():
    out = []

    kp0 = crypto.keygen(bytes(32))
    out.append(("keygen.zero_seed.public", kp0.public.to_bytes()))
    out.append(("keygen.zero_seed.secret", kp0.secret.to_bytes()))

    alice = crypto.keygen(b"alice-golden-seed".ljust(32, b"\0"))
    bob = crypto.keygen(b"bob-golden-seed".ljust(32, b"\0"))
    rng = random.Random(1207)  # fixed
    box = crypto.seal(alice.secret, bob.public, b"golden sealed box payload", rng=rng)
    out.append(("sealedbox.alice_to_bob", box.to_bytes()))
    out.append(("sealedbox.plaintext", b"golden sealed box payload"))
    out.append(("sealedbox.alice.public", alice.public.to_bytes()))
    out.append(("sealedbox.bob.public", bob.public.to_bytes()))

    out.append(("kdf_tag.ones_1_0", crypto.kdf_tag(b"\x01" * 32, 1, 0)))
    out.append(("kdf_tag.ones_1_1", crypto.kdf_tag(b"\x01" * 32, 1, 1)))
    out.append(("kdf_tag.ones_2_0", crypto.kdf_tag(b"\x01" * 32, 2, 0)))

    out.append(("round_value.ab_1_5", crypto.round_value(b"\xab" * 32, 1, 5)))

    sig = crypto.sign(alice.secret, b"golden message")
    out.append(("schnorr.alice_golden_message", sig))
    out.append(("mac.key01_msg", crypto.mac(b"\x01" * 32, b"golden mac message")))

    rng = random.Random(1234)
    com, opening = crypto.commit_perm(list(range(8)), rng)
    out.append(("perm_commit.identity8", com.to_bytes()))
    out.append(("perm_commit.identity8.blinding", opening.blinding.to_bytes()))

    # OT transcript: n=5, choice=3, deterministic randomness
    rng = random.Random(777)
    sender = crypto.ot_sender_init(5, rng)
    point, recv = crypto.ot_receiver_choose(5, sender.sender_point, 3, rng)
    strings = [f"golden-string-{i}".encode().ljust(24, b".") for i in range(1, 6)]
    cts = crypto.ot_sender_respond(sender, point, strings)
    out.append(("ot.n5c3.sender_point", sender.sender_point.to_bytes()))
    out.append(("ot.n5c3.receiver_point", point.to_bytes()))
    for i, ct in enumerate(cts, start=1):
        out.append((f"ot.n5c3.ct{i}", ct))
    out.append(("ot.n5c3.recovered", crypto.ot_receiver_recover(recv, cts)))

    # wire golden envelope
    rng = random.Random(31337)
    l2 = crypto.keygen(b"l2-golden-seed".ljust(32, b"\0"))
    env, tm, tag = wire.build_envelope(
        alice, bob.public, b"golden envelope data", 7, l2.public, 1_700_000_000,
        sigma=b"\x05" * 32, counter=3, direction=1, rng=rng,
    )
    out.append(("wire.envelope", env.to_bytes()))
    out.append(("wire.envelope.tag", tag))
    out.append(("wire.envelope.tm", tm.to_bytes()))
    out.append(("wire.l2.public", l2.public.to_bytes()))

    out.append(("group.basepoint", BASEPOINT.to_bytes()))
    out.append(("group.scalar7_base", (Scalar(7) * BASEPOINT).to_bytes()))
    return out


def main():
    path = Path(__file__).resolve().parent.parent / "tests" / "vectors" / "golden_vectors.bin"
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = b""
    for name, data in records():
        nb = name.encode()
        blob += len(nb).to_bytes(2, "big") + nb + len(data).to_bytes(4, "big") + data
    path.write_bytes(blob)
    print(f"wrote {path} ({len(blob)} bytes)")


if __name__ == "__main__":
    main()

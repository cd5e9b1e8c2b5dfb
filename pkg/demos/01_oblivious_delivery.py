#!/usr/bin/env python3
"""Oblivious message delivery, piece by piece.

Walks the primitive layer end to end: a pair secret turns into a tag,
the payload is sealed twice (once for the recipient, once for the mix
node), and retrieval runs over 1-out-of-n oblivious transfer so the
serving node cannot tell which message was fetched.
"""

import random

from otmix import crypto, wire

rng = random.Random(2024)

print("== keys ==")
alice = crypto.keygen(b"alice-demo-seed".ljust(32, b"\0"))
bob = crypto.keygen(b"bob-demo-seed".ljust(32, b"\0"))
node = crypto.keygen(b"mix-node-demo-seed".ljust(32, b"\0"))
print("alice pk:", alice.public.to_bytes().hex()[:32], "...")
print("bob   pk:", bob.public.to_bytes().hex()[:32], "...")

print("\n== tags from a pair secret ==")
sigma = b"\x42" * 32  # normally h(R_A) after a handshake
for counter in (1, 2, 3):
    print(f"tag(counter={counter}):", crypto.kdf_tag(sigma, counter, 0).hex()[:32], "...")

print("\n== sealing ==")
envelope, tagged, tag = wire.build_envelope(
    alice, bob.public, b"meet at the library, 6pm", 7, node.public, now=1_700_000_000,
    sigma=sigma, counter=1, direction=0, rng=rng,
)
print(f"envelope bytes: {len(envelope.to_bytes())} (constant for every message)")
print(f"inner (payload, tag) bytes: {len(tagged.to_bytes())}")

print("\n== the mix node opens only its own layer ==")
inner = wire.EnvelopeInner.from_bytes(crypto.open_box_unverified(node.secret, envelope.outer).plaintext)
print("node sees: tag =", inner.message.tag.hex()[:32], "..., timestamp =", inner.ts)
print("node cannot read the payload (sealed to bob)")

print("\n== delivery via 1-out-of-n oblivious transfer ==")
# the node's publication window: bob's message hidden among others
window = [tagged.to_bytes()]
for i in range(7):
    window.append(wire.TaggedMessage(
        box=crypto.seal(alice.secret, crypto.keygen(bytes([i]) * 32).public,
                        wire.Payload(x=wire.pack_payload_data(b"decoy %d" % i), nonce=bytes(24)).to_bytes(),
                        rng=rng),
        tag=rng.getrandbits(256).to_bytes(32, "big"),
    ).to_bytes())
window = [w.ljust(max(len(x) for x in window), b"\0") for w in window]

sender_session = crypto.ot_sender_init(len(window), rng)
choice = 1  # bob recognized his tag at position 1
point, recv_session = crypto.ot_receiver_choose(len(window), sender_session.sender_point, choice, rng)
cts = crypto.ot_sender_respond(sender_session, point, window)
retrieved = crypto.ot_receiver_recover(recv_session, cts)
print(f"node served {len(cts)} ciphertexts; it cannot tell which one decrypted")

got = wire.TaggedMessage.from_bytes(retrieved[: wire.TAGGED_MESSAGE_LEN])
payload = wire.Payload.from_bytes(crypto.open_box(bob.secret, alice.public, got.box))
data, flags = wire.unpack_payload_data(payload.x)
print("bob decrypted:", data.decode())

print("\n== tampering is always visible ==")
corrupt = bytearray(got.box.body)
corrupt[5] ^= 1
try:
    crypto.open_box(bob.secret, alice.public, crypto.SealedBox(got.box.key_block, bytes(corrupt)))
except crypto.IntegrityError as exc:
    print("altered ciphertext detected:", exc)

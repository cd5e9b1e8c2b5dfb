"""Round division, chaff generation, replay cache."""

import random

import numpy as np
import pytest
from scipy.stats import chi2

from otmix.params import NetworkParams
from otmix.rounds import ReplayCache, compute_division, make_dummy_message
from otmix.wire import TAGGED_MESSAGE_LEN, TaggedMessage


@pytest.fixture(scope="module")
def params():
    return NetworkParams(q1=2, q2=2, q3=5, alpha=2, rho=3, beta1=4, lam=4)


L3 = [201, 202, 203, 204, 205]


def test_division_deterministic(params):
    a = compute_division(b"\x11" * 32, 5, L3, params)
    b = compute_division(b"\x11" * 32, 5, L3, params)
    assert a == b
    assert compute_division(b"\x11" * 32, 6, L3, params) != a


def test_division_shape(params):
    d = compute_division(b"\x22" * 32, 1, L3, params)
    assert len(d.active_ids) == params.alpha
    assert len(d.passive_ids) == params.rho
    assert set(d.active_ids) | set(d.passive_ids) == set(L3)
    # partition: disjoint blocks covering all indices, equal size
    flat = [i for block in d.partition for i in block]
    assert sorted(flat) == list(range(params.beta2))
    assert all(len(b) == params.bucket_size for b in d.partition)


def test_division_fairness_chi_square(params):
    # each node active with frequency alpha/q3 over many rounds
    rounds = 10_000
    counts = {n: 0 for n in L3}
    xor = b"\x5a" * 32
    for r in range(1, rounds + 1):
        for n in compute_division(xor, r, L3, params).active_ids:
            counts[n] += 1
    expected = rounds * params.alpha / params.q3
    stat = sum((c - expected) ** 2 / expected for c in counts.values())
    assert stat < chi2.ppf(0.99, df=len(L3) - 1), counts


def test_dummy_message_shape(rng):
    d = make_dummy_message(rng)
    raw = d.to_bytes()
    assert len(raw) == TAGGED_MESSAGE_LEN
    assert TaggedMessage.from_bytes(raw) == d


def test_dummy_tags_no_collision_with_real_set(rng):
    # birthday check at test scale: 10^5 dummy tags vs 10^5 "real" tags
    real = {random.Random(1).getrandbits(256).to_bytes(32, "big") for _ in range(100_000)}
    hits = 0
    for _ in range(100_000):
        t = rng.getrandbits(256).to_bytes(32, "big")
        if t in real:
            hits += 1
    assert hits == 0


def test_dummy_bytes_look_uniform(rng):
    # frequency test on body byte histogram vs uniform
    counts = np.zeros(256, dtype=np.int64)
    n = 200
    for _ in range(n):
        d = make_dummy_message(rng)
        for b in d.box.body:
            counts[b] += 1
    total = counts.sum()
    expected = total / 256
    stat = float(((counts - expected) ** 2 / expected).sum())
    assert stat < chi2.ppf(0.999, df=255)


def test_replay_cache_window():
    rc = ReplayCache(window_s=60.0)
    rc.record(b"p" * 32, b"t" * 32, now_s=100)
    assert rc.seen_recently(b"p" * 32, b"t" * 32, now_s=100)
    assert rc.seen_recently(b"p" * 32, b"t" * 32, now_s=159)
    # same payload, new tag: not a replay
    assert not rc.seen_recently(b"p" * 32, b"u" * 32, now_s=101)


def test_replay_cache_eviction():
    rc = ReplayCache(window_s=10.0)
    for i in range(5000):
        rc.record(i.to_bytes(32, "big"), b"t" * 32, now_s=i)
    # old entries evicted once the cache sweeps
    assert len(rc) < 5000

"""Closed-form calculators for the quantitative behavior of the design,
plus Monte-Carlo validators that check the formulas against mechanism
simulations.

Conventions: entropies are in bits (log base 2); times in seconds unless
a name says otherwise; "steps" are publication steps.  A dwell is the
number of publication steps a message spends in a Level-3 repository,
counting the step in which its bucket arrives as step 1.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .params import NetworkParams

__all__ = [
    "sender_anonymity_set",
    "receiver_anonymity_bound",
    "expected_dummy_requests",
    "expected_distinct_dummy_requesters",
    "pool_entropy",
    "effective_set",
    "pool_conversion_gain",
    "pool_conversion_factor",
    "pool_mode_entropy",
    "storage_requirement",
    "expected_publication_latency",
    "standard_dwell_stats",
    "pool_dwell_stats",
    "simulate_standard_dwell",
    "simulate_pool_dwell",
    "empirical_pool_entropy",
]


# ---------------------------------------------------------------------------
# Anonymity sets
# ---------------------------------------------------------------------------


def sender_anonymity_set(p: NetworkParams) -> float:
    """Expected sender anonymity set: lam * beta1 * q1 * q2 / 2.

    Non-integral for degenerate parameters; interpret as an expected
    pipeline population, not a literal user count.
    """
    return p.lam * p.beta1 * p.q1 * p.q2 / 2


def expected_dummy_requests(p: NetworkParams, rate_factor: float = 1.0) -> float:
    """Dummy requests one node sees while an entry sits in its
    publication repository: H*U/(T2*q3), times the scheduler's rate
    factor (the uniform [1, T2] scheduler issues ~2 requests per T2, so
    its factor is 2)."""
    h_s = p.h_hours * 3600.0
    return rate_factor * h_s * p.u / (p.t2_s * p.q3)


def expected_distinct_dummy_requesters(p: NetworkParams, rate_factor: float = 2.0) -> float:
    """Distinct clients among those requests (Poisson thinning of U
    users each hitting this node ~rate_factor*H/(T2*q3) times)."""
    h_s = p.h_hours * 3600.0
    per_client = rate_factor * h_s / (p.t2_s * p.q3)
    return p.u * (1.0 - math.exp(-per_client))


def receiver_anonymity_bound(p: NetworkParams, overlap: float = 0.0) -> float:
    """Upper bound on the receiver anonymity set per node: the
    publication-list size plus expected dummy requests during the
    retention window, minus the (unknown, default zero) overlap between
    real and dummy requesters."""
    return p.gamma + expected_dummy_requests(p) - overlap


# ---------------------------------------------------------------------------
# Pool-mix entropy
# ---------------------------------------------------------------------------


def pool_entropy(omega: float, big_omega: float) -> float:
    """Stationary entropy of a pool mix with residual pool omega and
    big_omega messages in/out per round:

        E = (1 + omega/big_omega) * log2(omega + big_omega)
            - (omega/big_omega) * log2(omega)

    omega = 0 degenerates to log2(big_omega), the threshold mix.
    """
    if big_omega < 1:
        raise ValueError("big_omega must be >= 1")
    if omega < 0:
        raise ValueError("omega must be >= 0")
    if omega == 0:
        return math.log2(big_omega)
    r = omega / big_omega
    return (1 + r) * math.log2(omega + big_omega) - r * math.log2(omega)


def effective_set(omega: float, big_omega: float) -> float:
    """Effective anonymity-set size 2^E."""
    return 2.0 ** pool_entropy(omega, big_omega)


def pool_conversion_gain(lam: int) -> float:
    """Entropy gained by removing the latency bound (uniform per-bucket
    draws -> uniform draws over the whole repository):

        log2( (lam+1)^((lam+1)/2) / (2*lam*(lam-1)^((lam-1)/2)) )
    """
    if lam < 2:
        raise ValueError("lam must be >= 2 for the pool conversion")
    num = (lam + 1) / 2 * math.log2(lam + 1)
    den = math.log2(2 * lam) + (lam - 1) / 2 * math.log2(lam - 1)
    return num - den


def pool_conversion_factor(lam: int) -> float:
    """Multiplicative anonymity-set factor 2^gain."""
    return 2.0 ** pool_conversion_gain(lam)


def pool_mode_entropy(p: NetworkParams) -> float:
    """Per-node stationary entropy of the pool-converted design:
    log2(lam*beta2/alpha) plus the conversion gain.  Equals
    pool_entropy(omega, big_omega) at omega = beta2*(lam-1)/(2*alpha),
    big_omega = beta2/alpha."""
    return math.log2(p.lam * p.beta2 / p.alpha) + pool_conversion_gain(p.lam)


def pool_parameters(p: NetworkParams) -> Tuple[float, float]:
    """(omega, big_omega) equivalent to the repository in pool mode."""
    return p.beta2 * (p.lam - 1) / (2 * p.alpha), p.beta2 / p.alpha


# ---------------------------------------------------------------------------
# Dwell distributions
# ---------------------------------------------------------------------------


def standard_dwell_stats(lam: int) -> Tuple[float, float]:
    """(mean, variance) of the standard-mode dwell in steps: uniform on
    {1..lam}, so mean (lam+1)/2 and variance (lam^2 - 1)/12."""
    return (lam + 1) / 2, (lam * lam - 1) / 12


def pool_dwell_stats(lam: int) -> Tuple[float, float]:
    """(mean, variance) of the pool-mode dwell in steps.

    Each step publishes big_omega of the omega + big_omega pooled
    messages, so a message survives each step with probability
    1 - 2/(lam+1) independently: the dwell is geometric with
    p = 2/(lam+1), giving mean (lam+1)/2 and variance
    (1-p)/p^2 = (lam+1)(lam-1)/4.
    """
    prob = 2.0 / (lam + 1)
    return 1.0 / prob, (1.0 - prob) / prob**2


# ---------------------------------------------------------------------------
# Storage and latency
# ---------------------------------------------------------------------------


def storage_requirement(
    p: NetworkParams, rho_over_alpha: float | None = None
) -> Tuple[float, float]:
    """(network_total_bytes, per_node_bytes) for the publication
    repositories: published rate v*(1 + rho/alpha) messages/s, held for
    the retention window.

    ``rho_over_alpha`` overrides the topology's ratio; a ratio of
    exactly 1 is a useful sizing point even though no valid division has
    alpha == rho.
    """
    ratio = p.rho / p.alpha if rho_over_alpha is None else rho_over_alpha
    rate = p.v_msgs_per_s * (1.0 + ratio)
    total = rate * p.h_hours * 3600.0 * p.msg_size
    return total, total / p.q3


def expected_publication_latency(p: NetworkParams) -> float:
    """Upper bound on submit-to-publish latency at the nominal rate:
    tau + q2*tau/(2*lam) seconds."""
    return p.tau_s + p.q2 * p.tau_s / (2 * p.lam)


# ---------------------------------------------------------------------------
# Mechanism Monte-Carlo
# ---------------------------------------------------------------------------


def simulate_standard_dwell(
    lam: int, bucket_size: int, n_messages: int, seed: int = 1
) -> np.ndarray:
    """Drive the per-bucket draw procedure and record every message's
    dwell in steps.  bucket_size must be divisible by lam."""
    if bucket_size % lam != 0:
        raise ValueError("bucket_size must be divisible by lam")
    quota = bucket_size // lam
    rng = random.Random(seed)
    ring: List[List[int]] = []
    dwells: List[int] = []
    step = 0
    msg = 0
    while len(dwells) < n_messages:
        step += 1
        ring.append([step] * bucket_size)  # entries tagged with arrival step
        msg += bucket_size
        if len(ring) > lam:
            ring.pop(0)
        for bucket in ring:
            take = min(quota, len(bucket))
            for idx in sorted(rng.sample(range(len(bucket)), take), reverse=True):
                entry = bucket.pop(idx)
                dwells.append(step - entry + 1)
    return np.array(dwells[:n_messages])


def simulate_pool_dwell(
    lam: int, bucket_size: int, n_messages: int, seed: int = 1
) -> np.ndarray:
    """Drive the pool variant: each step adds one bucket and publishes a
    bucket's worth drawn uniformly from the whole repository."""
    rng = random.Random(seed)
    # warm-up entries (dwell not recorded) stand in for the residual pool
    pool: List[int] = [0] * ((bucket_size * (lam - 1)) // 2)
    dwells: List[int] = []
    step = 0
    while len(dwells) < n_messages:
        step += 1
        pool.extend([step] * bucket_size)
        for idx in sorted(rng.sample(range(len(pool)), min(bucket_size, len(pool))), reverse=True):
            entry = pool.pop(idx)
            if entry >= 1:  # skip the synthetic warm-up entries
                dwells.append(step - entry + 1)
    return np.array(dwells[:n_messages])


def empirical_pool_entropy(dwells: np.ndarray, big_omega: float) -> float:
    """Entropy of the attacker's posterior over senders implied by an
    observed dwell distribution: log2(big_omega) plus the dwell-round
    entropy.  Cross-checks pool_entropy() against simulation."""
    values, counts = np.unique(dwells, return_counts=True)
    probs = counts / counts.sum()
    h = float(-(probs * np.log2(probs)).sum())
    return math.log2(big_omega) + h

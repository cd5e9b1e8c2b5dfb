"""Network-wide parameter set and its consistency constraints."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

__all__ = ["NetworkParams", "InvalidConfig"]


class InvalidConfig(ValueError):
    """Raised when a parameter set violates a structural constraint; the
    message names the exact constraint that failed."""


@dataclass(frozen=True)
class NetworkParams:
    """All tunables of one network instance.

    Level sizes q1/q2/q3, the active/passive split alpha/rho, batch sizes
    beta1/beta2, repository depth lam, the publication deadline tau_s,
    publication-repository size gamma and OT width zeta, the client
    self-check and dummy-request intervals t1_s/t2_s, the retention
    horizon h_hours, client count u, offered message rate v_msgs_per_s,
    and the (storage-model) message size.
    """

    q1: int = 2
    q2: int = 2
    q3: int = 5
    alpha: int = 2
    rho: int = 3
    beta1: int = 4
    beta2: Optional[int] = None  # defaults to q1 * beta1
    lam: int = 4
    tau_s: float = 10.0
    gamma: int = 128
    zeta: Optional[int] = None  # defaults to gamma
    t1_s: float = 6 * 3600.0
    t2_s: float = 20 * 60.0
    h_hours: float = 12.0
    u: int = 100
    v_msgs_per_s: float = 0.0
    msg_size: int = 300
    replay_window_s: float = 30 * 60.0
    counter_window: int = 2
    pool_mode: bool = False

    def __post_init__(self):
        if self.beta2 is None:
            object.__setattr__(self, "beta2", self.q1 * self.beta1)
        if self.zeta is None:
            object.__setattr__(self, "zeta", self.gamma)
        self.validate()

    def validate(self) -> None:
        for name in ("q1", "q2", "q3", "alpha", "rho", "beta1", "beta2", "lam", "gamma", "zeta"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.tau_s <= 0:
            raise InvalidConfig(f"tau_s must be positive, got {self.tau_s}")
        if self.alpha + self.rho != self.q3:
            raise InvalidConfig(
                f"alpha + rho must equal q3: {self.alpha} + {self.rho} != {self.q3}"
            )
        # active/passive balance: (1/3) rho <= alpha <= (3/4) rho
        if 3 * self.alpha < self.rho:
            raise InvalidConfig(
                f"alpha >= rho/3 violated: alpha={self.alpha}, rho={self.rho}"
            )
        if 4 * self.alpha > 3 * self.rho:
            raise InvalidConfig(
                f"alpha <= 3*rho/4 violated: alpha={self.alpha}, rho={self.rho}"
            )
        if self.beta2 < self.beta1:
            raise InvalidConfig(f"beta2 must be >= beta1: {self.beta2} < {self.beta1}")
        if self.beta2 % (self.alpha * self.lam) != 0:
            raise InvalidConfig(
                f"alpha*lam must divide beta2: {self.alpha}*{self.lam} does not divide {self.beta2}"
            )
        if self.zeta > self.gamma:
            raise InvalidConfig(f"zeta must be <= gamma: {self.zeta} > {self.gamma}")
        if self.counter_window < 0:
            raise InvalidConfig("counter_window must be >= 0")

    # Derived quantities -----------------------------------------------

    @property
    def bucket_size(self) -> int:
        return self.beta2 // self.alpha

    @property
    def draw_per_bucket(self) -> int:
        return self.beta2 // (self.alpha * self.lam)

    @property
    def dummies_per_round(self) -> int:
        return self.rho * self.beta2 // self.alpha

    @property
    def publication_period_s(self) -> float:
        return self.tau_s / self.lam

    @property
    def nominal_rate(self) -> float:
        """Arrival rate (msgs/s) at which one bucket reaches each Level-3
        node per publication step."""
        return self.beta2 * self.lam / self.tau_s

    def with_(self, **kw) -> "NetworkParams":
        return replace(self, **kw)

"""Execution environment abstraction shared by nodes and clients.

Protocol parties are single-threaded state machines driven by messages
and timers.  They interact with the world only through an Env, so the
same node code runs under the deterministic in-process simulator and
under the socket transport.
"""

from __future__ import annotations

import random
from abc import ABC, abstractmethod
from typing import Callable, Iterable

__all__ = ["Env", "Party"]


class Env(ABC):
    """What a party may do: tell time, send, set timers, log, randomize."""

    rng: random.Random

    @abstractmethod
    def now_ms(self) -> int: ...

    @abstractmethod
    def send(self, dst: int, mtype: int, payload: bytes) -> bool:
        """Deliver payload to dst.  Returns False if the destination is
        known to be unreachable (node failure)."""

    @abstractmethod
    def schedule(self, delay_ms: int, fn: Callable[[], None]) -> None: ...

    @abstractmethod
    def log(self, ev: str, **fields) -> None: ...

    def send_many(self, dsts: Iterable[int], mtype: int, payload: bytes) -> None:
        for dst in dsts:
            self.send(dst, mtype, payload)


class Party:
    """Base class for every protocol participant."""

    def __init__(self, party_id: int, env: Env):
        self.party_id = party_id
        self.env = env

    def start(self) -> None:
        """Called once when the network comes up."""

    def handle(self, src: int, mtype: int, payload: bytes) -> None:
        raise NotImplementedError

    # Convenience ------------------------------------------------------

    @property
    def now_ms(self) -> int:
        return self.env.now_ms()

    @property
    def now_s(self) -> int:
        return self.env.now_ms() // 1000

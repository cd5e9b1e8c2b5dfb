import random
from pathlib import Path

import pytest

VECTORS = Path(__file__).parent / "vectors" / "golden_vectors.bin"


def load_golden() -> dict:
    blob = VECTORS.read_bytes()
    out = {}
    off = 0
    while off < len(blob):
        n = int.from_bytes(blob[off : off + 2], "big")
        off += 2
        name = blob[off : off + n].decode()
        off += n
        dlen = int.from_bytes(blob[off : off + 4], "big")
        off += 4
        out[name] = blob[off : off + dlen]
        off += dlen
    return out


@pytest.fixture(scope="session")
def golden():
    return load_golden()


@pytest.fixture()
def rng():
    return random.Random(0xDECAF)

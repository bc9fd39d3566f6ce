"""Named sub-seeds derived from one master seed."""

import hashlib


def derive_seed(seed, *names):
    """Stable 63-bit seed for component ``names`` of a run seeded with ``seed``."""
    key = ":".join([str(int(seed))] + [str(n) for n in names]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1

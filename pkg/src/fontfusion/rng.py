"""Seed forking: every random-consuming component gets its own substream.

All randomness in the project funnels through one root seed.  Components
derive child seeds by hashing the root seed together with a fixed label
path, so adding a consumer never shifts the draws of another, and any
command is reproducible from ``(root seed, label)`` alone.
"""

import hashlib

# torch.Generator.manual_seed wants a non-negative int64
_MASK63 = (1 << 63) - 1


def fork_seed(seed: int, *labels: object) -> int:
    """Derive a child seed from ``seed`` and a label path.

    Stable across processes and platforms. Distinct labels give
    independent streams; the result fits both ``numpy.random.default_rng``
    and ``torch.Generator().manual_seed``.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode("ascii"))
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest(), "little") & _MASK63

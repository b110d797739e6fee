"""Deterministic seed derivation.

Every stochastic choice in the pipeline draws from an RNG seeded through
`mix`, so results depend only on the configured seeds and never on batch
order, scheduling, or process boundaries.
"""

import random

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix(*parts: int) -> int:
    """Hash integer seed components into one 64-bit seed (order-sensitive)."""
    state = 0x1234567887654321
    for part in parts:
        state = _splitmix64(state ^ (int(part) & _MASK64))
    return state


def make_rng(*parts: int) -> random.Random:
    """Stdlib RNG seeded from mixed components."""
    return random.Random(mix(*parts))


def sample_without_replacement(pool: list, k: int, *seed_parts: int) -> list:
    """k distinct elements via seeded partial Fisher-Yates.

    Self-contained splitmix64 stream, so the draw depends only on
    (pool, k, seed_parts) and never on interpreter version or call order.
    """
    state = mix(*seed_parts)
    pool = list(pool)
    m = len(pool)
    for i in range(k):
        state = _splitmix64(state)
        j = i + state % (m - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]

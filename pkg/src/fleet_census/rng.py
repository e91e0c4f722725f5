"""Pinned deterministic pseudorandom generator for sampling and splits.

Dataset sampling must replicate across independent implementations, so the
generator is defined by its algorithm rather than by a library name:

* Stream generator: SplitMix64. State is a 64-bit integer. Each draw adds
  the constant 0x9E3779B97F4A7C15 to the state (mod 2**64) and returns
  ``mix64`` of the new state.
* ``mix64(z)``: ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31`` with all arithmetic mod 2**64.
* Bounded draw ``below(n)``: rejection sampling. Let
  ``limit = 2**64 - (2**64 % n)``; draw 64-bit words until one is < limit,
  then return ``word % n``. This is exactly uniform over [0, n).
* ``shuffle``: Fisher-Yates from the top: for i = n-1 .. 1 swap a[i] with
  a[below(i + 1)].
* ``sample(seq, k)``: partial Fisher-Yates from the bottom: for
  i = 0 .. k-1 swap a[i] with a[i + below(n - i)]; the result is a[:k].
* ``uniform()``: ``next_u64() >> 11`` scaled by 2**-53, i.e. [0, 1).
* Derived stream seeds: ``derive_seed(seed, *tokens)`` hashes the tokens
  with 64-bit FNV-1a (offset 0xCBF29CE484222325, prime 0x100000001B3, each
  token's UTF-8 bytes followed by a single 0x00 separator byte), XORs the
  digest with ``seed`` and applies ``mix64``.

Any implementation following the recipe above reproduces this module's
output bit for bit.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    """SplitMix64 finalizer; bijective 64-bit mixing function."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, *tokens: object) -> int:
    """Derive an independent stream seed from a master seed and tokens.

    Tokens are stringified, FNV-1a hashed (with a 0x00 separator after each
    token), XORed with the master seed and passed through mix64.
    """
    h = _FNV_OFFSET
    for token in tokens:
        for byte in str(token).encode("utf-8"):
            h = ((h ^ byte) * _FNV_PRIME) & _MASK
        h = (h * _FNV_PRIME) & _MASK  # 0x00 separator: XOR with 0 is a no-op
    return mix64(h ^ (seed & _MASK))


class SplitMix64:
    """Seeded deterministic generator; the module docstring pins the recipe."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return mix64(self._state)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection; unbiased for any n >= 1."""
        if n <= 0:
            raise ValueError(f"bound must be positive, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            word = self.next_u64()
            if word < limit:
                return word % n

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, k: int) -> list:
        """k items without replacement via partial Fisher-Yates."""
        n = len(items)
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n} items")
        pool = list(items)
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

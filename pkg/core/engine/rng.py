"""
Named Random Streams

Counter-based (Philox) generators keyed by (seed, stream label). Streams with
different labels are statistically independent, and the same (seed, label)
yields the same draws on every platform.
"""

import hashlib
from typing import Sequence, Union

import numpy as np


_MASK32 = 0xFFFFFFFF


def _stream_key(seed: int, stream: str) -> list:
    digest = hashlib.sha256(stream.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    seed = int(seed) & ((1 << 64) - 1)
    return [seed & _MASK32, (seed >> 32) & _MASK32, *words]


class Rng:
    """
    Reproducible random stream.

    Args:
        seed: 64-bit experiment seed
        stream: Stream label, e.g. "init", "dropout/features", "data"
    """

    def __init__(self, seed: int, stream: str = "root"):
        self.seed = int(seed)
        self.stream = stream
        sequence = np.random.SeedSequence(_stream_key(self.seed, stream))
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream!r})"

    def spawn(self, label: str) -> "Rng":
        """Independent child stream `<stream>/<label>` with the same seed."""
        return Rng(self.seed, f"{self.stream}/{label}")

    def normal(
        self,
        shape: Union[int, Sequence[int]],
        std: float = 1.0,
        dtype=np.float32,
    ) -> np.ndarray:
        values = self._generator.standard_normal(size=shape, dtype=np.float64)
        return (values * std).astype(dtype)

    def uniform(
        self,
        shape: Union[int, Sequence[int]],
        low: float = 0.0,
        high: float = 1.0,
        dtype=np.float64,
    ) -> np.ndarray:
        return self._generator.uniform(low, high, size=shape).astype(dtype)

    def keep_mask(self, shape: Sequence[int], keep_prob: float) -> np.ndarray:
        """Boolean mask, each element True with probability keep_prob."""
        return self._generator.random(size=shape) < keep_prob

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

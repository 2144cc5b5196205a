"""Seeded generation of Rayleigh channels and Gaussian symbol frames.

Every draw comes from a Philox counter-based generator keyed by
``(master_seed, stream_id)``, so a task's numbers depend only on its label and
never on scheduling order or worker count.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .model import ChannelRealization, Dimensions, SymbolFrame

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            value = getattr(self, name)
            if not (0 <= value <= _MASK64):
                raise ValueError(f"{name} must fit in an unsigned 64-bit integer")

    @classmethod
    def for_task(cls, master_seed: int, *labels) -> "SeedSpec":
        """Stream id derived from a task label such as ``("symbols", c, f)``."""
        text = "/".join(str(x) for x in labels).encode()
        digest = hashlib.blake2b(text, digest_size=8).digest()
        return cls(int(master_seed) & _MASK64, int.from_bytes(digest, "little"))

    def generator(self) -> np.random.Generator:
        # an explicit uint64 key; a plain list goes through float64 above 2**63
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given total variance."""
    scale = np.sqrt(variance / 2.0)
    draws = rng.standard_normal((2, *shape))
    return scale * (draws[0] + 1j * draws[1])


def sample_channel(dims: Dimensions, seed: SeedSpec) -> ChannelRealization:
    """i.i.d. Rayleigh taps with a uniform power delay profile (variance 1/L per tap)."""
    taps = complex_normal(seed.generator(), (dims.M, dims.N, dims.L), 1.0 / dims.L)
    return ChannelRealization(taps, dims)


def sample_symbols(dims: Dimensions, seed: SeedSpec, energy: float = 1.0) -> SymbolFrame:
    """One frame of unit-variance complex Gaussian symbols; energies default to 1."""
    symbols = complex_normal(seed.generator(), (dims.M, dims.T), 1.0)
    return SymbolFrame.with_common_energy(symbols, energy)


def sample_symbol_batch(dims: Dimensions, seed: SeedSpec, frames: int) -> np.ndarray:
    """``frames`` symbol frames from one stream, shape ``(frames, M, T)``."""
    return complex_normal(seed.generator(), (frames, dims.M, dims.T), 1.0)

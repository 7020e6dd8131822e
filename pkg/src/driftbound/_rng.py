"""Counter-based random streams for reproducible, parallel-safe simulation.

Every simulation derives its randomness from a 64-bit master seed through
Philox counter-based streams.  Independent uses within one run are separated
by a small ``domain`` tag, and paths are grouped into fixed-size chunks with
one child stream per chunk; path ``j`` always reads row ``j % CHUNK`` of
chunk ``j // CHUNK``.  The layout is part of the reproducibility contract:
the same (seed, domain, n, cols) request yields the same block regardless of
how the consumer iterates it.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

# Fixed chunk width; changing it changes every derived stream.
CHUNK = 4096

# Domain tags keep independent draws within one scenario uncorrelated.
DOMAIN_CHAIN = 1
DOMAIN_MODES = 2
DOMAIN_NOISE = 3
DOMAIN_BESQ = 4
DOMAIN_DIFFUSION = 5
DOMAIN_BETA_MC = 6
DOMAIN_SINGLE = 7

_MASK64 = (1 << 64) - 1


def check_seed(seed: int) -> int:
    """Validate a 64-bit master seed."""
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    return seed


def child_stream(seed: int, domain: int, index: int) -> np.random.Generator:
    """Philox stream keyed by (seed, domain, index); streams never collide."""
    seed = check_seed(seed)
    if not 0 <= domain < (1 << 16):
        raise ValueError(f"domain out of range: {domain}")
    if not 0 <= index < (1 << 48):
        raise ValueError(f"stream index out of range: {index}")
    key = (seed << 64) | (domain << 48) | index
    return np.random.Generator(np.random.Philox(key=key))


def single_stream(seed: int, domain: int = DOMAIN_SINGLE) -> np.random.Generator:
    """One stream for scalar / sequential use (e.g. single-step sampling)."""
    return child_stream(seed, domain, 0)


def uniform_block(seed: int, domain: int, n: int, cols: int) -> np.ndarray:
    """Uniform[0,1) draws of shape (n, cols), assembled chunk by chunk."""
    out = np.empty((n, cols), dtype=np.float64)
    for start, block in _iter_blocks(seed, domain, n, cols, kind="uniform"):
        out[start : start + block.shape[0]] = block
    return out


def normal_block(seed: int, domain: int, n: int, cols: int) -> np.ndarray:
    """Standard-normal draws of shape (n, cols)."""
    out = np.empty((n, cols), dtype=np.float64)
    for start, block in _iter_blocks(seed, domain, n, cols, kind="normal"):
        out[start : start + block.shape[0]] = block
    return out


def iter_normal_chunks(
    seed: int, domain: int, n: int, cols: int
) -> Iterator[tuple[int, np.ndarray]]:
    """Stream (row_offset, block) normal chunks without materializing all n rows.

    Used by kernels whose full draw matrix would not fit comfortably in
    memory (e.g. 1e5 paths x 1e3 steps).
    """
    return _iter_blocks(seed, domain, n, cols, kind="normal")


def _iter_blocks(seed, domain, n, cols, kind):
    if n < 1 or cols < 0:
        raise ValueError(f"invalid block shape ({n}, {cols})")
    for c in range((n + CHUNK - 1) // CHUNK):
        rows = min(CHUNK, n - c * CHUNK)
        gen = child_stream(seed, domain, c)
        if kind == "uniform":
            block = gen.random((rows, cols))
        else:
            block = gen.standard_normal((rows, cols))
        yield c * CHUNK, block

"""Counter-based random number streams.

All stochastic code in the package draws from Philox4x64 streams keyed by
``(seed, stream_id)``.  Philox is counter-based, so a stream is fully
determined by its key: independent workers can consume disjoint streams
without coordination, and any run is reproducible from the seed alone.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox

# Streams are separated in key space; seed and stream id each get 64 bits.
_KEY_BITS = 64


def stream(seed: int, stream_id: int = 0) -> Generator:
    """Return the Philox generator for (seed, stream_id).

    The same pair always yields the same stream, on every platform.
    """
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be nonnegative")
    key = (int(seed) & (2**_KEY_BITS - 1)) | (int(stream_id) << _KEY_BITS)
    return Generator(Philox(key=key))


def state_of(gen: Generator) -> dict:
    """JSON-serializable snapshot of a generator's state."""
    st = gen.bit_generator.state
    return {
        "bit_generator": st["bit_generator"],
        "counter": [int(v) for v in st["state"]["counter"]],
        "key": [int(v) for v in st["state"]["key"]],
        "buffer": [int(v) for v in st["buffer"]],
        "buffer_pos": int(st["buffer_pos"]),
        "has_uint32": int(st["has_uint32"]),
        "uinteger": int(st["uinteger"]),
    }


def restore(snapshot: dict) -> Generator:
    """Rebuild a generator from a state_of() snapshot."""
    bg = Philox()
    bg.state = {
        "bit_generator": snapshot["bit_generator"],
        "state": {
            "counter": np.array(snapshot["counter"], dtype=np.uint64),
            "key": np.array(snapshot["key"], dtype=np.uint64),
        },
        "buffer": np.array(snapshot["buffer"], dtype=np.uint64),
        "buffer_pos": snapshot["buffer_pos"],
        "has_uint32": snapshot["has_uint32"],
        "uinteger": snapshot["uinteger"],
    }
    return Generator(bg)

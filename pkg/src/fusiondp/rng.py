"""Counter-based random streams keyed by (run_seed, step, purpose).

Every random draw in a run goes through :func:`stream`, so a run is fully
determined by its seed and two runs that share a seed also share batches,
dropout masks and noise draws step for step.
"""

from __future__ import annotations

import zlib

import numpy as np

PURPOSES = (
    "init",
    "private_sample",
    "public_sample",
    "private_dropout",
    "public_dropout",
    "noise",
    "mask",
    "split",
    "synth",
    "downsample",
)


def purpose_code(purpose: str) -> int:
    # crc32 is stable across interpreter runs, unlike hash()
    return zlib.crc32(purpose.encode("utf-8"))


def stream(run_seed: int, step: int, purpose: str) -> np.random.Generator:
    """Return an independent Philox generator for one (seed, step, purpose) cell."""
    if run_seed < 0 or step < 0:
        raise ValueError("run_seed and step must be nonnegative")
    seq = np.random.SeedSequence([int(run_seed), int(step), purpose_code(purpose)])
    return np.random.Generator(np.random.Philox(seq))

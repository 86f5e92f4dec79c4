"""Deterministic random streams.

One seed drives the whole run; independent purposes (parameter init,
shuffling, splits, synthetic data) get their own PCG64 stream derived
from (seed, sha256(purpose)), so adding draws to one purpose never
shifts another. Identical seed => identical draw sequence per stream.
"""

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngState:
    seed: int
    algorithm: str = "pcg64"


def _purpose_key(purpose: str) -> int:
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(state: RngState, purpose: str) -> np.random.Generator:
    """A fresh generator for (seed, purpose); same args, same draws."""
    if state.algorithm != "pcg64":
        raise ValueError(f"unknown rng algorithm {state.algorithm!r}")
    return np.random.Generator(np.random.PCG64([state.seed, _purpose_key(purpose)]))

"""Per-episode actuator failures: sampling, bookkeeping, torque scaling.

One leg is broken per episode. A failure is a (leg, k) pair: leg indexes
the quadruped's legs 0..3, and k multiplies the commanded torque of that
leg's two actuators (1.0 = nominal, 0.0 = dead, up to K_MAX = overdrive).

Reproducibility: every consumer owns a named RNG stream derived from
(master_seed, *tags) via `rng_stream`, so training and evaluation draws
never share state.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

K_MAX = 1.5
NUM_LEGS = 4
ACTUATORS_PER_LEG = 2


@dataclass(frozen=True)
class FailureSpec:
    """Broken-leg index and failure coefficient for one episode."""

    leg: int
    k: float

    def __post_init__(self):
        if self.leg not in range(NUM_LEGS):
            raise ValueError(f"leg must be in 0..{NUM_LEGS - 1}, got {self.leg}")
        if not math.isfinite(self.k):
            raise ValueError(f"failure coefficient must be finite, got {self.k}")
        if not 0.0 <= self.k <= K_MAX:
            raise ValueError(f"failure coefficient must be in [0, {K_MAX}], got {self.k}")

    @property
    def actuator_indices(self) -> tuple[int, int]:
        """Actuator slots owned by the broken leg (leg l owns 2l and 2l+1)."""
        return (ACTUATORS_PER_LEG * self.leg, ACTUATORS_PER_LEG * self.leg + 1)


NOMINAL = FailureSpec(leg=0, k=1.0)


def sample_leg(rng: np.random.Generator) -> int:
    """Draw the broken leg uniformly from {0, 1, 2, 3}."""
    return int(rng.integers(0, NUM_LEGS))


def sample_k(rng: np.random.Generator, low: float, high: float) -> float:
    """Draw a failure coefficient from Uni(low, high).

    Degenerate intervals return exactly `low` (one uniform draw is still
    consumed, keeping the stream layout identical across interval widths).
    """
    if not (math.isfinite(low) and math.isfinite(high)):
        raise ValueError("interval bounds must be finite")
    if low > high:
        raise ValueError(f"empty interval: low={low} > high={high}")
    if low < 0.0 or high > K_MAX:
        raise ValueError(f"interval [{low}, {high}] outside [0, {K_MAX}]")
    return float(low + (high - low) * rng.random())


def sample_failure(rng: np.random.Generator, low: float, high: float) -> FailureSpec:
    """Draw (leg, k) for one episode; leg first, then k."""
    return FailureSpec(leg=sample_leg(rng), k=sample_k(rng, low, high))


def apply_failure(torques: np.ndarray, failure: FailureSpec) -> np.ndarray:
    """Scale the broken leg's two actuator torques by k, leaving the rest.

    Returns a new array; scaling is a single multiply so scaled values are
    bit-exact k * raw.
    """
    out = np.array(torques, dtype=float, copy=True)
    a, b = failure.actuator_indices
    out[a] *= failure.k
    out[b] *= failure.k
    return out


def rng_stream(master_seed: int, *tags: object) -> np.random.Generator:
    """Named, seedable, portable RNG stream.

    Streams are split with a spawn key hashed from the tags, so e.g.
    rng_stream(seed, "failure", worker) and rng_stream(seed, "action",
    worker) are statistically independent and stable across platforms
    and runs.
    """
    key = tuple(
        int.from_bytes(hashlib.sha256(repr(tag).encode()).digest()[:4], "little")
        for tag in tags
    )
    seq = np.random.SeedSequence(master_seed, spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))

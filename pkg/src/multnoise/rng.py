"""Named, counter-based random substreams.

Every random quantity in an experiment is drawn from a Philox stream keyed by
``(seed, domain, *index)``. A rollout's draws therefore do not depend on how
many rollouts were simulated before it or on which worker produced it.
"""
from __future__ import annotations

import numpy as np

DOMAINS = {
    "schedule": 0,
    "rollout": 1,
    "network": 2,
    "noise": 3,
    "variance": 4,
    "misc": 5,
}


def substream(seed: int, domain: str, *index: int) -> np.random.Generator:
    try:
        tag = DOMAINS[domain]
    except KeyError:
        raise ValueError(f"unknown RNG domain {domain!r}") from None
    ss = np.random.SeedSequence(int(seed), spawn_key=(tag, *map(int, index)))
    return np.random.Generator(np.random.Philox(ss))


def rollout_stream(seed: int, k: int) -> np.random.Generator:
    """Stream for rollout ``k``; draws are consumed time-major (see simulate_batch)."""
    return substream(seed, "rollout", k)

"""Deterministic fan-out of one master seed into independent RNG streams.

Every random decision in the package draws from a stream keyed by
``(master seed, role, id, epoch, trial)`` through ``numpy``'s
``SeedSequence``, so runs are reproducible regardless of scheduling order
and distinct actors never share a stream.
"""

from __future__ import annotations

import enum

import numpy as np

from .exceptions import ConfigError

__all__ = ["StreamRole", "stream"]


class StreamRole(enum.IntEnum):
    CENTRAL_AUTHORITY = 0
    LOCAL_AUTHORITY = 1
    SHUFFLER = 2
    CLUSTER_AGGREGATOR = 3
    DATA_CENTER = 4
    SCENARIO = 5
    ANALYSIS = 6


def stream(
    master_seed: int,
    role: StreamRole,
    ident: int = 0,
    epoch: int = 0,
    trial: int = 0,
) -> np.random.Generator:
    """Independent generator for one (role, id, epoch, trial) slot."""
    if master_seed < 0:
        raise ConfigError(f"master seed must be non-negative, got {master_seed}")
    key = [int(master_seed), int(role), int(ident), int(epoch), int(trial)]
    return np.random.default_rng(np.random.SeedSequence(key))

"""Deterministic sub-stream derivation from one master seed.

Every source of randomness in an experiment (user-position batch, chain
proposals, acceptance draws) pulls from its own named stream so that
enabling or disabling one consumer never perturbs another.  The derivation
is ``SeedSequence(master, spawn_key=(crc32(name),))``, which is stable
across runs, platforms and call order.
"""

import zlib

import numpy as np

BATCH_STREAM = "batch"
PROPOSAL_STREAM = "proposal"
ACCEPT_STREAM = "accept"


def substream_seed(master_seed: int, name: str) -> np.random.SeedSequence:
    """SeedSequence for the named sub-stream of ``master_seed``."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.SeedSequence(master_seed, spawn_key=(key,))


def substream(master_seed: int, name: str) -> np.random.Generator:
    """Fresh Generator on the named sub-stream of ``master_seed``."""
    return np.random.default_rng(substream_seed(master_seed, name))

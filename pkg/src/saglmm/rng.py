"""Counter-based random streams keyed by structural position.

Every random draw in the package comes from a Philox generator whose key
encodes where in the computation the draw happens (dataset index, chain
index, iteration number, ...). Streams are therefore reproducible
independent of scheduling: chains and replicates can run in any order,
in any number of worker processes, and produce identical results.
"""
from __future__ import annotations

import numpy as np

# Namespace tags for the first key component. Keeping them in one place
# guarantees distinct purposes never share a stream.
NS_DATA = 0      # dataset generation
NS_INIT = 1      # parameter-initialisation draws
NS_LATENT = 2    # initial latent vectors, one per chain
NS_MCMC = 3      # per-(chain, iteration) sampler noise
NS_RUN = 4       # per-replicate run seeds derived by the harness
NS_DESIGN = 5    # salamander design construction


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, *key)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic 64-bit child seed for (seed, *key)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])

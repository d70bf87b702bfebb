"""Counter-based expansion of one master seed into independent streams.

``derive_rng(master, purpose, index)`` feeds ``SeedSequence`` the master
seed as entropy and ``(purpose, index)`` as its spawn key, so the stream for
harvest 17 of a TRNG run never depends on how many other streams were drawn
or in which order workers ran.
"""
import numpy as np

#: spawn-key namespaces
CROSSBAR = 1
HARVEST = 2
CHALLENGES = 3
CALIBRATION = 4
SEARCH = 5
SWEEP = 6
NOISE = 7


def derive_rng(master, *key):
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)


def derive_seed(master, *key):
    """A 63-bit integer seed for APIs that take ints (e.g. ``random_state``)."""
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))

"""Counter-based random streams keyed by (seed, replica, substream).

Every random draw in the package goes through :func:`stream`, so a result is
reproducible from its seed lineage alone and replicas can be evaluated in any
order or on any worker.
"""
import numpy as np

NOISE = 0
TDELTA = 1
AUX = 2


def stream(seed, replica, substream=NOISE, *tags):
    """Return a Philox generator keyed by the full lineage.

    ``tags`` are extra non-negative integers distinguishing streams that share
    (seed, replica, substream), e.g. the truncation range of a noise field.
    """
    entropy = [int(seed), int(replica), int(substream), *[int(t) for t in tags]]
    if any(e < 0 for e in entropy):
        raise ValueError("seed lineage entries must be non-negative")
    key = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))

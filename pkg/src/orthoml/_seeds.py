"""Deterministic seed derivation for nested work units.

Every randomized stage (fold draws, learner fits, bootstrap draws,
simulation replications) gets its own substream derived from the master
seed and the unit's index path.  Substreams are stable under growth:
adding repetitions or folds never perturbs the seeds of earlier units,
and results are identical no matter how work is scheduled.
"""

_MASK = (1 << 64) - 1


def mix64(x: int) -> int:
    """splitmix64 finalizer: a bijective 64-bit hash with good avalanche."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def substream(seed: int, *units: int) -> int:
    """Derive the seed for a work unit addressed by an index path.

    The master seed is mixed first so that xor-ing unit indices cannot
    systematically collide across nearby master seeds.
    """
    h = mix64(seed & _MASK)
    for u in units:
        h = mix64(h ^ (u & _MASK))
    return h

"""
File: dgkd/utils/seeding.py
Description: Deterministic random streams.

All randomness goes through numpy's PCG64 bit generator. A plan's master seed
is expanded with SeedSequence into one seed per stage (entropy
``(master_seed, stage_index)``), and each stage seed into one stream per
purpose (entropy ``(stage_seed, purpose)``). Adding a stage never shifts the
streams of the stages before it.
"""

import numpy as np

PURPOSE_INIT = 0
PURPOSE_SHUFFLE = 1
PURPOSE_GATES = 2
PURPOSE_AUGMENT = 3

_MASK64 = (1 << 64) - 1


def derive_stage_seed(master_seed, stage_index):
    """
    Derive the 64-bit seed of one stage from the plan's master seed.

    Args:
        master_seed (int): Non-negative master seed of the plan replica
        stage_index (int): Position of the stage in the ladder

    Returns:
        int: Stage seed in [0, 2**64)
    """
    sequence = np.random.SeedSequence([int(master_seed) & _MASK64, int(stage_index)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def stage_generator(stage_seed, purpose):
    """
    Build the generator for one (stage, purpose) pair.

    Args:
        stage_seed (int): Seed returned by derive_stage_seed (or any 64-bit seed)
        purpose (int): One of the PURPOSE_* constants

    Returns:
        numpy.random.Generator: PCG64-backed generator
    """
    sequence = np.random.SeedSequence([int(stage_seed) & _MASK64, int(purpose)])
    return np.random.Generator(np.random.PCG64(sequence))


def generator_state(rng):
    """Return a JSON-serializable snapshot of a generator's bit-generator state."""
    return rng.bit_generator.state


def restore_generator(state):
    """Rebuild a PCG64 generator from a snapshot taken by generator_state."""
    bit_generator = np.random.PCG64()
    bit_generator.state = state
    return np.random.Generator(bit_generator)

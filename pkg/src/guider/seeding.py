"""Per-stage seed derivation from a single root seed."""

from enum import IntEnum

import numpy as np

__all__ = ["Stage", "stage_rng", "stage_seed"]


class Stage(IntEnum):
    """Pipeline stages that consume randomness."""

    SPLIT = 1
    NOISE = 2
    TEACHER_INIT = 3
    TEACHER_TRAIN = 4
    HASHING = 5
    STUDENT_INIT = 6
    STUDENT_TRAIN = 7
    SYNTHESIS = 8
    DIAGNOSTICS = 9


def _sequence(root_seed: int, stage: Stage, counters: tuple[int, ...]) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=root_seed, spawn_key=(int(stage), *counters))


def stage_seed(root_seed: int, stage: Stage, *counters: int) -> int:
    """Derive a 32-bit integer seed for one stage (and optional sub-counters)."""
    return int(_sequence(root_seed, stage, counters).generate_state(1, dtype=np.uint32)[0])


def stage_rng(root_seed: int, stage: Stage, *counters: int) -> np.random.Generator:
    """Derive an independent generator for one stage."""
    return np.random.default_rng(_sequence(root_seed, stage, counters))

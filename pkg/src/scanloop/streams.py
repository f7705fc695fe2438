"""Reproducible per-subject random streams.

Every subject gets an independent generator keyed by (master seed, subject
index).  Because a subject's draws never depend on any other subject's, a
cohort can be simulated in any order and split across any number of workers
while producing bit-identical results.
"""

from __future__ import annotations

import numpy as np


def subject_stream(master_seed: int, subject_index: int) -> np.random.Generator:
    """Generator for one subject, independent of all other subjects' streams."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, subject_index]))

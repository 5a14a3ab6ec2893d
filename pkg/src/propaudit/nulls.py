"""Shared null-distribution machinery for the committee tests."""

from dataclasses import dataclass

import numpy as np

TEST_IDS = ("chsic", "rcot", "cmiknn")


@dataclass(frozen=True)
class TestOutcome:
    """One conditional-independence test's result on one (x, y | z) triple."""

    test_id: str
    statistic: float
    p_value: float
    n_used: int
    seed: int
    config_echo: str

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value {self.p_value} outside [0, 1]")


def permutation_pvalue(observed: float, surrogate_statistics) -> float:
    """(1 + #{surrogates >= observed}) / (B + 1); ties count as >=."""
    surrogates = np.asarray(surrogate_statistics, dtype=float)
    if surrogates.size == 0:
        raise ValueError("need at least one surrogate statistic")
    exceed = int(np.count_nonzero(surrogates >= observed))
    return (1 + exceed) / (surrogates.size + 1)

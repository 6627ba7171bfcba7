"""Exhaustive enumeration over a coarse control parametrisation.

Used as an independent check of the optimiser on tiny instances: every
combination of parameter levels is simulated and the smallest cost wins
(first in enumeration order on ties).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

MAX_COMBINATIONS = 10 ** 4


@dataclass
class OracleResult:
    best_J: float
    best_theta: np.ndarray
    best_controls: object
    levels: list
    table: np.ndarray  # one row per combination: parameters then J

    def write_csv(self, path, names=None):
        n = self.table.shape[1] - 1
        names = names or [f"theta{j}" for j in range(n)]
        with open(path, "w") as fh:
            fh.write(",".join(list(names) + ["J"]) + "\n")
            for row in self.table:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
        return path


def brute_force_oracle(problem, parametrization, levels=9, template=None) -> OracleResult:
    """Simulate every combination of ``levels`` equally spaced values per
    parameter (bounds included).

    Raises ``ValueError`` when the enumeration would exceed
    ``MAX_COMBINATIONS`` forward solves.
    """
    levels = int(levels)
    if levels < 2:
        raise ValueError("at least two levels per parameter are required")
    n = parametrization.size
    if levels ** n > MAX_COMBINATIONS:
        raise ValueError(f"parametrization too large: {levels}^{n} = {levels ** n} combinations "
                         f"(limit {MAX_COMBINATIONS})")
    template = template if template is not None else problem.controls()
    grids = [np.linspace(lo, hi, levels) for lo, hi in zip(parametrization.lower, parametrization.upper)]
    rows = []
    best = (np.inf, None)
    for theta in itertools.product(*grids):
        theta = np.array(theta)
        J = problem.cost(parametrization.controls(theta, template))
        rows.append(np.append(theta, J))
        if J < best[0]:
            best = (J, theta)
    J, theta = best
    return OracleResult(float(J), theta, parametrization.controls(theta, template), grids, np.array(rows))

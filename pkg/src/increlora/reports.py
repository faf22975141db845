"""Run reports: final rank grid, per-event rank trajectory, lambda histogram."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass
class RankReport:
    deployed: list[list[int]]  # layers x module types, active components only
    counted: list[list[int]]  # same grid with each module's reserve counted
    trajectory: list[tuple[int, list[int]]]  # (step, counted ranks per module)

    @property
    def deployed_flat(self) -> list[int]:
        return [r for row in self.deployed for r in row]


def to_grid(values, n_types: int) -> list[list[int]]:
    """Module ``k`` sits at layer ``k // n_types``, type ``k % n_types``."""
    values = [int(v) for v in values]
    if len(values) % n_types:
        raise ValueError(f"{len(values)} modules do not fill a grid of {n_types} types")
    return [values[i : i + n_types] for i in range(0, len(values), n_types)]


def rank_report(events: list[dict], n: int, n_types: int = 1, advance: bool = True) -> RankReport:
    """Rebuild ranks from an event log.

    With advance learning every module starts with just its reserve (counted
    rank 1, deployed 0). Without it, each starts with one active component.
    """
    base = 0 if advance else 1
    selections = [0] * n
    trajectory = [(0, [base + 1 if advance else base] * n)]
    for ev in events:
        for k in ev["selected"]:
            selections[k] += 1
        trajectory.append((int(ev["step"]), [int(r) for r in ev["ranks"]]))
    deployed = [base + s for s in selections]
    counted = [d + 1 for d in deployed] if advance else deployed
    return RankReport(to_grid(deployed, n_types), to_grid(counted, n_types), trajectory)


def static_report(ranks, n_types: int = 1) -> RankReport:
    """Report for a run whose ranks never change (fixed-rank baseline)."""
    grid = to_grid(ranks, n_types)
    return RankReport(grid, [list(r) for r in grid], [(0, [int(r) for r in ranks])])


def write_rank_report(path, report: RankReport, layer_types: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", *layer_types])
        for i, row in enumerate(report.deployed):
            w.writerow([i, *row])


def write_trajectory(path, report: RankReport) -> None:
    n = len(report.trajectory[0][1])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", *[f"m{k}" for k in range(n)]])
        for step, ranks in report.trajectory:
            w.writerow([step, *ranks])


def _decade(x: float) -> int:
    d = math.floor(math.log10(x))
    # guard against log10 rounding at exact powers of ten
    if 10.0 ** (d + 1) <= x:
        d += 1
    elif 10.0**d > x:
        d -= 1
    return d


def lambda_histogram(lams) -> list[tuple[str, int]]:
    """Counts of ``|lam|`` per decade ``[1e-k, 1e-k+1)``, plus a dedicated zero bin.

    Returns ``(label, count)`` pairs, zero bin first, then every decade from the
    smallest to the largest observed, including empty ones in between.
    """
    mags = np.abs(np.asarray(lams, dtype=np.float64))
    zero = int(np.count_nonzero(mags == 0.0))
    decades = [_decade(float(m)) for m in mags if m > 0.0]
    rows = [("zero", zero)]
    if decades:
        for d in range(min(decades), max(decades) + 1):
            rows.append((f"1e{d}", decades.count(d)))
    return rows


def write_lambda_histogram(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["decade", "count"])
        w.writerows(rows)


def spearman(planted, allocated) -> float:
    """Spearman rank correlation; nan when either side is constant."""
    a, b = np.asarray(planted, dtype=float), np.asarray(allocated, dtype=float)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return float(stats.spearmanr(a, b).statistic)

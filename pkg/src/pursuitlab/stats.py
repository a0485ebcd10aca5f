"""Seed-level paired nonparametric analysis: exact Wilcoxon signed-rank
tests, Cliff's delta effect sizes, and Holm-Bonferroni family-wise
correction applied within each (regime, metric) family of pairwise
configuration comparisons.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .harness import MatrixResult, SpeedRegime

MAX_EXACT_N = 25
ALPHA = 0.05

# Conventional |delta| cutoffs for the magnitude label.
DELTA_CUTOFFS = ((0.147, "negligible"), (0.33, "small"),
                 (0.474, "medium"), (float("inf"), "large"))


@dataclass(frozen=True)
class PairedSample:
    x: tuple
    y: tuple

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("paired samples must have equal length")
        if len(self.x) == 0:
            raise ValueError("paired samples must be nonempty")
        if not all(math.isfinite(v) for v in self.x + self.y):
            raise ValueError("paired samples must be finite")


@dataclass(frozen=True)
class PairedTest:
    comparison: tuple  # (config A, config B, regime value, metric)
    p_raw: float
    p_adjusted: float
    delta: float
    delta_label: str
    reject_at_005: bool
    degenerate: bool = False


def wilcoxon_signed_rank_exact(sample: PairedSample):
    """Exact two-sided signed-rank p-value for small paired samples.

    Zero differences are dropped; tied |differences| get midranks. The
    null distribution of W+ is computed exactly over all 2^m sign
    assignments of the observed midranks (via subset-sum counting), and
    p = min(1, 2 * P(W+ <= min(W+, W-))).

    Returns (p, degenerate); degenerate means every difference was zero,
    with p = 1.0 by convention.
    """
    d = [xi - yi for xi, yi in zip(sample.x, sample.y) if xi != yi]
    m = len(d)
    if m == 0:
        return 1.0, True
    if m > MAX_EXACT_N:
        raise ValueError(
            f"exact enumeration supports at most {MAX_EXACT_N} nonzero "
            f"differences, got {m}")
    ranks = rankdata([abs(v) for v in d])
    # Midranks are multiples of 0.5; double them to stay integral.
    ranks2 = [int(round(2 * r)) for r in ranks]
    w_plus2 = sum(r for r, v in zip(ranks2, d) if v > 0)
    w_minus2 = sum(r for r, v in zip(ranks2, d) if v < 0)
    w_obs2 = min(w_plus2, w_minus2)

    # counts[w] = number of sign assignments with doubled W+ equal to w.
    total = sum(ranks2)
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in ranks2:
        counts[r:] += counts[:total + 1 - r].copy()
    tail = float(counts[:w_obs2 + 1].sum()) / (2.0 ** m)
    return min(1.0, 2.0 * tail), False


def cliffs_delta(x, y) -> float:
    """Dominance statistic in [-1, 1]: P(x > y) - P(x < y) over all pairs."""
    if len(x) == 0 or len(y) == 0:
        raise ValueError("samples must be nonempty")
    greater = sum(1 for xi in x for yj in y if xi > yj)
    less = sum(1 for xi in x for yj in y if xi < yj)
    return (greater - less) / (len(x) * len(y))


def delta_magnitude(delta: float) -> str:
    for cutoff, label in DELTA_CUTOFFS:
        if abs(delta) < cutoff:
            return label
    return "large"


def holm_bonferroni(p_values, alpha: float = ALPHA):
    """Step-down Holm adjustment.

    Returns (adjusted p-values, reject flags) in the original order.
    """
    p_values = list(p_values)
    for p in p_values:
        if not (0.0 <= p <= 1.0):
            raise ValueError("p-values must lie in [0, 1]")
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p_values[idx]))
        adjusted[idx] = running
    reject = [adj <= alpha for adj in adjusted]
    # Step-down rejection: once a hypothesis fails, later ones fail too.
    failed = False
    for idx in order:
        if failed or adjusted[idx] > alpha:
            failed = True
            reject[idx] = False
    return adjusted, reject


def compare_configs(matrix: MatrixResult, regime: SpeedRegime,
                    metric: str) -> list:
    """All pairwise pairing comparisons for one (regime, metric) family.

    Pairings are compared on seed-level final-window means; Holm
    correction is applied within the resulting C(4,2) = 6 tests.
    """
    pairings = matrix.pairings()
    by_seed = {}
    seed_sets = set()
    for pairing in pairings:
        values = matrix.final_window_by_seed(pairing, regime, metric)
        by_seed[pairing] = values
        seed_sets.add(frozenset(values))
    if len(seed_sets) != 1:
        raise ValueError("pairings have mismatched seed sets")
    seeds = sorted(seed_sets.pop())
    if not seeds:
        raise ValueError(f"no results for regime {regime.value}")

    raw = []
    combos = list(itertools.combinations(pairings, 2))
    for a, b in combos:
        xs = tuple(by_seed[a][s] for s in seeds)
        ys = tuple(by_seed[b][s] for s in seeds)
        p, degenerate = wilcoxon_signed_rank_exact(PairedSample(xs, ys))
        delta = cliffs_delta(xs, ys)
        raw.append((a, b, p, delta, degenerate))

    adjusted, reject = holm_bonferroni([r[2] for r in raw])
    return [
        PairedTest(
            comparison=(a, b, regime.value, metric),
            p_raw=p,
            p_adjusted=adj,
            delta=delta,
            delta_label=delta_magnitude(delta),
            reject_at_005=rej,
            degenerate=degenerate,
        )
        for (a, b, p, delta, degenerate), adj, rej in zip(raw, adjusted, reject)
    ]

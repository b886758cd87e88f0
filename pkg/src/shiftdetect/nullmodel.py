"""Empirical null distribution learned from noise symmetry.

Pooling the per-pixel max statistics with the sign-flipped min statistics
gives a sample whose lower half is null-dominated.  The pooled median
splits off two truncated samples (low max values, high flipped-min values)
whose union estimates the null distribution without any parametric model;
the truncation count also yields the null-proportion estimate
pi0_hat = min(2 n0 / n, 1).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DataError
from .teststat import TestField


@dataclass(frozen=True)
class NullModel:
    """Fitted null distribution of the max statistic.

    pooled holds the sorted union of the two truncated samples (size 2*n0);
    the null CDF is its empirical step function.
    """

    mu0_hat: float
    pi0_hat: float
    n0: int
    n_fit: int
    pooled: np.ndarray

    def __post_init__(self):
        if self.pooled.size != 2 * self.n0:
            raise DataError("pooled sample must have size 2*n0")
        if not (0.0 < self.pi0_hat <= 1.0):
            raise DataError("pi0_hat must lie in (0, 1]")

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mu0_hat", "pi0_hat", "n0", "n_fit"])
            writer.writerow(["%.17g" % self.mu0_hat, "%.17g" % self.pi0_hat,
                             self.n0, self.n_fit])
            for v in self.pooled:
                writer.writerow(["%.17g" % v])

    @classmethod
    def load_csv(cls, path) -> "NullModel":
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
        if len(rows) < 2 or rows[0][0] != "mu0_hat":
            raise DataError(f"{path}: not a NullModel CSV")
        head = rows[1]
        return cls(mu0_hat=float(head[0]), pi0_hat=float(head[1]),
                   n0=int(head[2]), n_fit=int(head[3]),
                   pooled=np.array([float(r[0]) for r in rows[2:]]))


def fit_null(field: TestField) -> NullModel:
    """Estimate the null median, null proportion and null CDF from a field.

    The 2n pooled values (tmax_i and -tmin_i) are sorted; mu0_hat is the
    sample median (t_(n) + t_(n+1))/2.  s0 collects the max statistics at or
    below mu0_hat, n0 = |s0|; g0 collects the n0 largest flipped-min values,
    which coincides with {-tmin_i > mu0_hat} whenever the pooled values are
    tie-free around the median (the continuous-data case).
    """
    tmax = np.asarray(field.tmax, dtype=float)
    neg_min = -np.asarray(field.tmin, dtype=float)
    n = tmax.size
    if n < 2:
        raise DataError("need at least two tested pixels")
    pool = np.concatenate([tmax, neg_min])
    if np.all(pool == pool[0]):
        raise DataError("degenerate field: all statistics identical")
    spool = np.sort(pool, kind="stable")
    mu0 = 0.5 * (spool[n - 1] + spool[n])

    s0 = tmax[tmax <= mu0]
    n0 = int(s0.size)
    if n0 == 0:
        raise DataError("degenerate field: no max statistics at or below "
                        "the pooled median")
    g0 = np.sort(neg_min, kind="stable")[-n0:]
    pi0 = min((2 * n0) / n, 1.0)
    pooled = np.sort(np.concatenate([s0, g0]), kind="stable")
    return NullModel(mu0_hat=float(mu0), pi0_hat=pi0, n0=n0, n_fit=n,
                     pooled=pooled)


def null_cdf(model: NullModel, t) -> np.ndarray | float:
    """Empirical null CDF (right-continuous step function, <= counts)."""
    t = np.asarray(t, dtype=float)
    counts = np.searchsorted(model.pooled, t, side="right")
    out = counts / (2 * model.n0)
    return float(out) if out.ndim == 0 else out


def empirical_pvalues(model: NullModel, field) -> np.ndarray:
    """Right-tail p-values 1 - F0_hat(tmax) for a field (or an array of
    statistics), possibly different from the field the model was fit on.

    p-values are exact count ratios (2n0 - c)/(2n0) evaluated with the
    final float division rounded toward zero, so thresholding them at an
    exact grid point k/(2n0) (see storey_pi0) never miscounts the boundary
    sample.  Statistics above every pooled null value get p = 0 exactly.
    """
    stats = getattr(field, "tmax", field)
    stats = np.asarray(stats, dtype=float)
    counts = np.searchsorted(model.pooled, stats, side="right")
    return _ratio_round_down(2 * model.n0 - counts, 2 * model.n0)


def _ratio_round_down(numerators: np.ndarray, denominator: int) -> np.ndarray:
    """Elementwise integer ratio as float64, rounded toward zero."""
    uniq, inverse = np.unique(numerators, return_inverse=True)
    vals = uniq.astype(float) / denominator
    for i, a in enumerate(uniq):
        if Fraction(float(vals[i])) > Fraction(int(a), denominator):
            vals[i] = np.nextafter(vals[i], 0.0)
    return vals[inverse]

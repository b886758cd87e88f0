"""FDR-controlled decisions: step-up procedure, null-proportion plug-in,
q-values."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DataError
from .nullmodel import NullModel, empirical_pvalues
from .teststat import TestField


@dataclass(frozen=True)
class DetectionResult:
    """Per-pixel p-values, q-values and the binary decision at nominal_q."""

    pvalues: np.ndarray
    qvalues: np.ndarray
    detected: np.ndarray
    k_hat: int
    nominal_q: float


def bh_reject(pvalues, q: float, pi0: float = 1.0) -> DetectionResult:
    """Step-up procedure at level q: reject the k_hat smallest p-values,
    k_hat = max{k : p_(k) <= q*k/n} (with p_(0) = 0, so k_hat may be 0).

    Tied p-values are rejected or kept together.  q-values in the result use
    the supplied pi0 (default 1, the plain procedure).
    """
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise DataError("pvalues must be a non-empty 1-d vector")
    if not (0.0 <= q <= 1.0):
        raise DataError("q must lie in [0, 1]")
    n = p.size
    ps = np.sort(p, kind="stable")
    thresholds = q * np.arange(1, n + 1) / n
    passing = np.nonzero(ps <= thresholds)[0]
    k_hat = int(passing[-1]) + 1 if passing.size else 0
    if k_hat:
        detected = p <= ps[k_hat - 1]
        k_hat = int(np.count_nonzero(detected))
    else:
        detected = np.zeros(n, dtype=bool)
    return DetectionResult(pvalues=p, qvalues=qvalues(p, pi0),
                           detected=detected, k_hat=k_hat, nominal_q=q)


def qvalues(pvalues, pi0: float = 1.0) -> np.ndarray:
    """Smallest control level at which each p-value would be rejected:
    running minimum (from the largest p downward) of pi0 * p_(k) * n / k,
    clipped to [0, 1]."""
    p = np.asarray(pvalues, dtype=float)
    if not (0.0 < pi0 <= 1.0):
        raise DataError("pi0 must lie in (0, 1]")
    n = p.size
    order = np.argsort(p, kind="stable")
    raw = pi0 * p[order] * n / np.arange(1, n + 1)
    q = np.minimum.accumulate(raw[::-1])[::-1]
    out = np.empty(n)
    out[order] = np.minimum(q, 1.0)
    return out


def storey_pi0(pvalues, zeta) -> float:
    """Storey's null-proportion estimate min{(1 + #{p > zeta})/((1-zeta) n), 1}.

    `zeta` may be a float or an exact ``fractions.Fraction``; the ratio is
    evaluated in exact rational arithmetic and rounded once, so that at the
    grid points zeta = k/(2 n0) (k = n0 .. 2n0-1) the estimate reproduces
    the empirical-null pi0_hat bit for bit on p-values produced by
    ``empirical_pvalues``.
    """
    p = np.asarray(pvalues, dtype=float)
    zeta_exact = Fraction(zeta) if not isinstance(zeta, Fraction) else zeta
    if not (0 <= zeta_exact < 1):
        raise DataError("zeta must lie in [0, 1)")
    n = p.size
    if n == 0:
        raise DataError("pvalues must be non-empty")
    # Counting p > zeta over floats: compare against the largest double
    # <= zeta, which gives the exact count for non-representable zeta too.
    lo = float(zeta_exact)
    if Fraction(lo) > zeta_exact:
        lo = float(np.nextafter(lo, -np.inf))
    count = int(np.count_nonzero(p > lo))
    estimate = Fraction(1 + count) / ((1 - zeta_exact) * n)
    return float(min(estimate, Fraction(1)))


def detect(model: NullModel, field: TestField, q: float,
           pi0_mode: str = "empirical", zeta: float = 0.5) -> DetectionResult:
    """Full decision pipeline: empirical p-values from the fitted null, then
    the step-up procedure at the plug-in level q / pi0 (capped at 1).

    pi0_mode selects the plug-in: "empirical" (the null model's estimate,
    the default procedure), "storey:<zeta>"-style via pi0_mode="storey",
    or "one" (no correction).  q-values use the same pi0 so that
    thresholding them at q agrees with the decision set.
    """
    if not (0.0 < q < 1.0):
        if q == 0.0:
            p = empirical_pvalues(model, field)
            return DetectionResult(p, qvalues(p, model.pi0_hat),
                                   np.zeros(p.size, dtype=bool), 0, 0.0)
        raise DataError("q must lie in (0, 1)")
    p = empirical_pvalues(model, field)
    if pi0_mode == "empirical":
        pi0 = model.pi0_hat
    elif pi0_mode == "storey":
        pi0 = storey_pi0(p, zeta)
    elif pi0_mode == "one":
        pi0 = 1.0
    else:
        raise DataError(f"unknown pi0_mode {pi0_mode!r}")
    level = min(q / pi0, 1.0)
    result = bh_reject(p, level, pi0=pi0)
    return DetectionResult(pvalues=result.pvalues, qvalues=result.qvalues,
                           detected=result.detected, k_hat=result.k_hat,
                           nominal_q=q)

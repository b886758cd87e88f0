"""How large should the dictionary be?  A computable false-alarm bound.

Under unit Gaussian noise the matched-filter scores of the atoms form a
correlated Gaussian vector, and the false-alarm rate of their maximum has
no closed form once atoms overlap.  A recursive product of conditional
orthant probabilities (bivariate and trivariate normal CDFs only) upper-
bounds it; inverting the bound gives a usable threshold for any size.

The payoff: for coherent shifted-copy dictionaries the threshold nearly
stops growing once the grid is dense, while for orthogonal atoms it keeps
climbing like a Bonferroni correction - so dense grids are nearly free.

Run:  python demos/05_false_alarm_bound.py          (about a minute)
"""

import numpy as np
from scipy.special import ndtri

from shiftdetect import (build_lss, gaussian_line_reference, pfa_bound,
                         pfa_exact_orthogonal, threshold_for_pfa)

reference = gaussian_line_reference(30, 15, 5.0)
alpha = 0.05

print("bound versus simulated truth (m=15, tau=7, eta=2.2):")
d15 = build_lss(reference, 15, 7.0, "integer")
rng = np.random.default_rng(0)
L = np.linalg.cholesky(d15.gram() + 1e-12 * np.eye(15))
z = rng.standard_normal((10 ** 6, 15)) @ L.T
mc = float(np.mean(z.max(axis=1) > 2.2))
print(f"  Monte-Carlo alpha = {mc:.4f}   bound = {pfa_bound(d15, 2.2):.4f}"
      f"   orthogonal closed form = {pfa_exact_orthogonal(15, 2.2):.4f}")

print(f"\nthresholds at alpha = {alpha} over the interval [-8, +8]:")
print(f"{'m':>4} {'bound eta_m':>12} {'orthogonal eta_m':>17}")
for m in (2, 5, 10, 15, 20):
    d = build_lss(reference, m, 8.0, "continuous")
    eta = threshold_for_pfa(d, alpha)
    orth = float(ndtri((1 - alpha) ** (1 / m)))
    print(f"{m:>4} {eta:>12.4f} {orth:>17.4f}")

print("""
The orthogonal column is what a worst-case multiplicity correction would
charge for extra atoms.  The bound column charges far less as the grid
densifies, because neighboring atoms answer with nearly the same score.
Together with the saturating signal gain of demo 01, this is the case for
using a highly redundant dictionary rather than a minimal one.
""")

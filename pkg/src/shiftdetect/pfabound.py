"""False-alarm analysis of the max statistic under i.i.d. Gaussian noise.

For orthogonal atoms the false-alarm probability of the max test has the
closed form 1 - Phi(eta)^m.  For a coherent linearly-spaced-shift
dictionary it does not, but a recursive product of conditional orthant
probabilities gives a computable upper bound: each step multiplies by
Pr(z1 <= t | z2 <= t, z3 <= t) evaluated from trivariate and bivariate
normal CDFs, using the two nearest-neighbor correlations of the denser
grid.  The bound is sharp for uncorrelated atoms.

The bivariate CDF follows the classic Drezner / Genz single-integral
scheme (including the transformed high-correlation branch); the trivariate
CDF integrates Plackett's correlation-derivative identity along a linear
correlation path with Gauss-Legendre quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri, roots_legendre

from .dictionary import Dictionary, autocorrelation
from .errors import DataError, NumericError

_TWOPI = 2.0 * math.pi

# Gauss-Legendre rule used by the bivariate integrand (20-point).
_GL20_X, _GL20_W = roots_legendre(20)
# Rule for the trivariate correlation-path integral on [0, 1].
_GL_PATH_X, _GL_PATH_W = roots_legendre(96)
_PATH_T = 0.5 * (_GL_PATH_X + 1.0)
_PATH_W = 0.5 * _GL_PATH_W


def _bvnu(dh: float, dk: float, r: float) -> float:
    """Upper bivariate normal probability P(X > dh, Y > dk) for standard
    margins with correlation r.

    Port of the Drezner-Wesolowsky / Genz algorithm: a Gauss-Legendre
    evaluation of the arcsine-parametrized integral for |r| < 0.925 and the
    transformed complementary expansion above that.
    """
    if np.isposinf(dh) or np.isposinf(dk):
        return 0.0
    if np.isneginf(dh):
        return 1.0 if np.isneginf(dk) else float(ndtr(-dk))
    if np.isneginf(dk):
        return float(ndtr(-dh))
    if r == 0.0:
        return float(ndtr(-dh) * ndtr(-dk))
    if r >= 1.0:
        return float(ndtr(-max(dh, dk)))
    if r <= -1.0:
        return float(max(0.0, ndtr(-dh) - ndtr(dk)))

    h, k = dh, dk
    hk = h * k
    bvn = 0.0
    if abs(r) < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = math.asin(r)
        sn = np.sin(0.5 * asr * (1.0 + _GL20_X))
        bvn = float(np.sum(_GL20_W * np.exp((sn * hk - hs) / (1.0 - sn * sn))))
        return max(0.0, min(1.0, bvn * asr / (2.0 * _TWOPI)
                            + float(ndtr(-h) * ndtr(-k))))

    if r < 0.0:
        k = -k
        hk = -hk
    a_sq = (1.0 - r) * (1.0 + r)
    a = math.sqrt(a_sq)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 16.0
    asr = -0.5 * (bs / a_sq + hk)
    if asr > -100.0:
        bvn = a * math.exp(asr) * (1.0 - c * (bs - a_sq)
                                   * (1.0 - d * bs / 5.0) / 3.0
                                   + c * d * a_sq * a_sq / 5.0)
    if -hk < 100.0:
        b = math.sqrt(bs)
        sp = math.sqrt(_TWOPI) * float(ndtr(-b / a))
        bvn -= math.exp(-0.5 * hk) * sp * b * (1.0 - c * bs
                                               * (1.0 - d * bs / 5.0) / 3.0)
    half_a = 0.5 * a
    # the symmetric node set covers both mirror points (1 - x) and (1 + x)
    xs = (half_a * (_GL20_X + 1.0)) ** 2
    rs = np.sqrt(1.0 - xs)
    asr_v = -0.5 * (bs / xs + hk)
    keep = asr_v > -100.0
    sp_v = 1.0 + c * xs * (1.0 + d * xs)
    ep_v = np.exp(-0.5 * hk * (1.0 - rs) / (1.0 + rs)) / rs
    bvn += half_a * float(np.sum(
        np.where(keep, _GL20_W * np.exp(asr_v) * (ep_v - sp_v), 0.0)))
    bvn = -bvn / _TWOPI
    if r > 0.0:
        bvn += float(ndtr(-max(h, k)))
    else:
        bvn = -bvn + max(0.0, float(ndtr(-h) - ndtr(-k)))
    return max(0.0, min(1.0, bvn))


def normal_cdf_2d(h: float, k: float, rho: float) -> float:
    """P(X <= h, Y <= k) for standard bivariate normal with correlation rho."""
    if not -1.0 <= rho <= 1.0:
        raise DataError("correlation must lie in [-1, 1]")
    return _bvnu(-float(h), -float(k), float(rho))


def _phi(x):
    return np.exp(-0.5 * x * x) / math.sqrt(_TWOPI)


def _phi2(x: float, y: float, rho) -> np.ndarray:
    """Bivariate normal density at (x, y), vectorized over rho."""
    det = 1.0 - rho * rho
    q = (x * x - 2.0 * rho * x * y + y * y) / det
    return np.exp(-0.5 * q) / (_TWOPI * np.sqrt(det))


def _tvn_corr_path_term(b_i, b_j, b_k, rho_ij_target, rho_ki_t, rho_kj_t):
    """Integrand of Plackett's identity for a scaled correlation rho_ij(t):
    rho_ij_target * phi2(b_i, b_j; t rho_ij) * Phi(conditional b_k),
    vectorized over the path nodes."""
    rho_ij = _PATH_T * rho_ij_target
    det = 1.0 - rho_ij * rho_ij
    mu = ((rho_ki_t - rho_ij * rho_kj_t) * b_i
          + (rho_kj_t - rho_ij * rho_ki_t) * b_j) / det
    var = 1.0 - (rho_ki_t ** 2 + rho_kj_t ** 2
                 - 2.0 * rho_ij * rho_ki_t * rho_kj_t) / det
    var = np.maximum(var, 0.0)
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, (b_k - mu) / np.where(sd > 0, sd, 1.0),
                     np.where(b_k >= mu, np.inf, -np.inf))
    return rho_ij_target * _phi2(b_i, b_j, rho_ij) * ndtr(z)


def normal_cdf_3d(h: float, k: float, j: float, rho12: float, rho13: float,
                  rho23: float) -> float:
    """P(X1 <= h, X2 <= k, X3 <= j) for standard trivariate normal.

    The correlation triple must form a positive semidefinite matrix.
    Singular pairs (|rho| = 1) reduce exactly to bivariate calls; otherwise
    the largest correlation is held fixed and the other two are scaled from
    zero along a linear path, integrating Plackett's derivative identity.
    """
    b = np.array([h, k, j], dtype=float)
    rho = np.array([rho12, rho13, rho23], dtype=float)
    if np.any(np.abs(rho) > 1.0):
        raise DataError("correlations must lie in [-1, 1]")
    corr = np.array([[1.0, rho12, rho13],
                     [rho12, 1.0, rho23],
                     [rho13, rho23, 1.0]])
    if np.linalg.eigvalsh(corr)[0] < -1e-10:
        raise DataError("non-PSD correlation")

    # |rho| = 1 collapses two coordinates onto one.
    for (i1, i2), r in (((0, 1), rho12), ((0, 2), rho13), ((1, 2), rho23)):
        if abs(r) >= 1.0 - 1e-14:
            i3 = 3 - i1 - i2
            pair_r = corr[i1, i3]
            if r > 0:
                return normal_cdf_2d(min(b[i1], b[i2]), b[i3], pair_r)
            lo, hi = -b[i2], b[i1]
            if lo >= hi:
                return 0.0
            return max(0.0, normal_cdf_2d(hi, b[i3], pair_r)
                       - normal_cdf_2d(lo, b[i3], pair_r))

    # Permute so the pair with the largest |rho| is (2, 3); its correlation
    # stays fixed while the two correlations touching variable 1 are scaled,
    # which keeps the path integrand smooth for highly coherent grids.
    pairs = np.abs(rho)
    fixed_pair = int(np.argmax(pairs))
    if fixed_pair == 0:      # (1,2) largest: variable 3 becomes variable 1
        b1, b2, b3 = b[2], b[0], b[1]
        r21, r31, r32 = rho13, rho23, rho12
    elif fixed_pair == 1:    # (1,3) largest: variable 2 becomes variable 1
        b1, b2, b3 = b[1], b[0], b[2]
        r21, r31, r32 = rho12, rho23, rho13
    else:
        b1, b2, b3 = b[0], b[1], b[2]
        r21, r31, r32 = rho12, rho13, rho23

    base = float(ndtr(b1)) * normal_cdf_2d(b2, b3, r32)
    total = base
    if r21 != 0.0:
        term = _tvn_corr_path_term(b1, b2, b3, r21,
                                   _PATH_T * r31, np.full_like(_PATH_T, r32))
        total += float(np.sum(_PATH_W * term))
    if r31 != 0.0:
        term = _tvn_corr_path_term(b1, b3, b2, r31,
                                   _PATH_T * r21, np.full_like(_PATH_T, r32))
        total += float(np.sum(_PATH_W * term))
    return max(0.0, min(1.0, total))


def pfa_exact_orthogonal(m: int, eta: float) -> float:
    """Exact max-test false-alarm probability 1 - Phi(eta)^m for m
    orthogonal unit atoms under N(0, I) noise."""
    if m < 1:
        raise DataError("m must be >= 1")
    return float(-np.expm1(m * np.log(ndtr(eta)))) if ndtr(eta) > 0 else 1.0


@dataclass(frozen=True)
class GaussianCorrModel:
    """Correlation matrix of the per-atom matched-filter scores under
    N(0, I) noise; equals the dictionary Gram matrix."""

    corr: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.corr, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DataError("corr must be square")
        if not np.allclose(c, c.T, atol=1e-12):
            raise DataError("corr must be symmetric")
        if np.any(np.abs(np.diag(c) - 1.0) > 1e-10):
            raise DataError("corr must have unit diagonal")
        if np.any(c < -1e-10):
            raise DataError("corr entries must be non-negative")
        if np.linalg.eigvalsh(c)[0] < -1e-10:
            raise DataError("corr must be positive semidefinite")
        object.__setattr__(self, "corr", c)

    @classmethod
    def from_dictionary(cls, dictionary: Dictionary) -> "GaussianCorrModel":
        return cls(dictionary.gram())


def _lss_gamma(dictionary: Dictionary):
    """Autocorrelation accessor for the dictionary's generative reference,
    validated for the bound's assumptions (non-negative, non-increasing)."""
    ref = dictionary.reference
    if ref is None:
        raise DataError("pfa_bound needs a dictionary built from a "
                        "reference (load_csv drops it); rebuild with "
                        "build_lss")
    tau = dictionary.tau
    grid = np.linspace(0.0, 2.0 * tau, 201)
    vals = np.array([autocorrelation(ref, u) for u in grid])
    if np.any(vals < -1e-9):
        raise NumericError("autocorrelation takes negative values: "
                           "comparison step invalid")
    if np.any(np.diff(vals) > 1e-9):
        raise NumericError("autocorrelation not non-increasing in the "
                           "shift: comparison step invalid")
    return lambda u: max(0.0, autocorrelation(ref, u))


def pfa_bound(dictionary: Dictionary, eta: float,
              neighbors: str = "flanking") -> float:
    """Upper bound on the max-test false-alarm probability at threshold eta.

    Evaluates the recursion
        M_2(t)   = P(z1 <= t, z2 <= t)                 [2-atom grid]
        M_{s}(t) = P(z1 <= t | z2 <= t, z3 <= t) M_{s-1}(t)
    where at size s the conditioned score z1 is judged against its two most
    correlated companions on the size-s grid, and returns 1 - M_m(eta).

    `neighbors` fixes which companions those are:

    * "flanking" (default): z1 is an interior atom and z2, z3 its two
      flanks at one grid step (correlations Gamma(delta), Gamma(delta);
      mutual correlation Gamma(2 delta)).  This makes the size-3 term the
      exact trivariate orthant probability and gives the tighter bound.
    * "one_sided": z1 is the first atom of the grid and z2, z3 the next
      two (correlations Gamma(delta), Gamma(2 delta)); the remaining
      scores then form a contiguous denser grid, which is the variant the
      Gaussian comparison argument covers step by step.

    Requires a dictionary whose autocorrelation is non-negative and
    non-increasing; collapses to the orthogonal closed form when all the
    involved correlations vanish.
    """
    if neighbors not in ("flanking", "one_sided"):
        raise DataError(f"unknown neighbor convention {neighbors!r}")
    m = dictionary.m
    if m == 1:
        return pfa_exact_orthogonal(1, eta)
    gamma = _lss_gamma(dictionary)
    tau = dictionary.tau
    t = float(eta)
    M = normal_cdf_2d(t, t, gamma(2.0 * tau))
    for size in range(3, m + 1):
        delta = 2.0 * tau / (size - 1)
        r1 = gamma(delta)
        r2 = gamma(2.0 * delta)
        if neighbors == "flanking":
            den = normal_cdf_2d(t, t, r2)
            num = normal_cdf_3d(t, t, t, r1, r1, r2)
        else:
            den = normal_cdf_2d(t, t, r1)
            num = normal_cdf_3d(t, t, t, r1, r2, r1)
        if den <= 0.0:
            return 1.0
        M *= num / den
    return float(min(1.0, max(0.0, 1.0 - M)))


def threshold_for_pfa(dictionary: Dictionary, alpha: float,
                      eta_tol: float = 1e-8,
                      neighbors: str = "flanking") -> float:
    """Smallest threshold whose false-alarm bound is at most alpha:
    solves M_m(eta) = 1 - alpha by bisection to eta_tol.

    Monotonicity of M_m in the threshold is asserted numerically on a
    coarse grid before inverting.
    """
    if not (0.0 < alpha < 1.0):
        raise DataError("alpha must lie in (0, 1)")
    if dictionary.m == 1:
        return float(ndtri(1.0 - alpha))

    def big_m(t):
        return 1.0 - pfa_bound(dictionary, t, neighbors=neighbors)

    grid = np.linspace(-6.0, 8.0, 29)
    vals = np.array([big_m(t) for t in grid])
    if np.any(np.diff(vals) < -1e-10):
        raise NumericError("bound recursion not monotone in the threshold")

    target = 1.0 - alpha
    lo, hi = -6.0, 8.0
    for _ in range(60):
        if big_m(lo) <= target:
            break
        lo -= 8.0
        if lo < -80.0:
            raise NumericError("bracketing failure (low side)")
    for _ in range(60):
        if big_m(hi) >= target:
            break
        hi += 8.0
        if hi > 80.0:
            raise NumericError("bracketing failure (high side)")
    while hi - lo > eta_tol:
        mid = 0.5 * (lo + hi)
        if big_m(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

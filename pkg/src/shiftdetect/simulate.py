"""Synthetic cubes, baseline detectors and the validation harnesses.

Everything here is deterministic given the config seed: replicate streams
derive their generators from (seed, replicate-index) key tuples, so results
do not depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import ndimage

from .dictionary import Dictionary
from .errors import DataError
from .fdr import DetectionResult, bh_reject, detect
from .nullmodel import NullModel, empirical_pvalues, fit_null
from .pipeline import Cube
from .similarity import SimilarityKind
from .teststat import TestField, compute_field


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class NoiseSpec:
    """Marginal noise law: centered Gaussian(sigma) or Student-t(nu)."""

    family: str = "gaussian"
    sigma: float = 1.0
    nu: float = 5.0

    def __post_init__(self):
        if self.family not in ("gaussian", "student"):
            raise DataError(f"unknown noise family {self.family!r}")
        if self.family == "gaussian" and self.sigma <= 0:
            raise DataError("sigma must be positive")
        if self.family == "student" and self.nu <= 2:
            raise DataError("student noise needs nu > 2 for finite variance")

    @property
    def marginal_variance(self) -> float:
        if self.family == "gaussian":
            return self.sigma ** 2
        return self.nu / (self.nu - 2.0)

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.family == "gaussian":
            return self.sigma * rng.standard_normal(shape)
        return rng.standard_t(self.nu, size=shape)


def variance_preserving_kernel(weights) -> np.ndarray:
    """Scale a spatial kernel so that sum of squares is 1, which keeps the
    marginal variance of i.i.d. noise unchanged after convolution."""
    w = np.asarray(weights, dtype=float)
    ss = float(np.sum(w * w))
    if not np.isfinite(ss) or ss <= 0:
        raise DataError("kernel must have positive, finite energy")
    return w / math.sqrt(ss)


def uniform_kernel(size: int = 3) -> np.ndarray:
    """Variance-preserving uniform size x size kernel (entries 1/size)."""
    return variance_preserving_kernel(np.ones((size, size)))


@dataclass(frozen=True)
class SimConfig:
    """One synthetic-cube experiment.

    signal_atom selects a fixed dictionary atom for every contaminated
    pixel; None draws an independent uniform shift on [-tau, tau] per pixel
    (which needs a reference with a continuous model).  target_snr, when
    set, rescales the drawn amplitudes so the realized total signal energy
    matches 10 log10(A / (n l sigma^2)) = target_snr.
    """

    n_y: int
    n_x: int
    l: int
    noise: NoiseSpec
    dictionary: Dictionary
    pi0: float
    amplitude_range: tuple = (0.1, 3.0)
    seed: int = 0
    spatial_kernel: Optional[np.ndarray] = None
    signal_atom: Optional[int] = None
    target_snr: Optional[float] = None

    def __post_init__(self):
        if not (0.0 < self.pi0 <= 1.0):
            raise DataError("pi0 must lie in (0, 1]")
        if self.l != self.dictionary.length:
            raise DataError("dictionary length must match the band count")
        lo, hi = self.amplitude_range
        if not (0 <= lo <= hi):
            raise DataError("bad amplitude range")
        if self.spatial_kernel is not None:
            k = np.asarray(self.spatial_kernel, dtype=float)
            if k.ndim != 2 or not np.all(np.isfinite(k)):
                raise DataError("spatial kernel must be a finite 2-d array")
            object.__setattr__(self, "spatial_kernel", k)
        if self.signal_atom is not None and not (
                0 <= self.signal_atom < self.dictionary.m):
            raise DataError("signal_atom out of range")

    @property
    def n(self) -> int:
        return self.n_y * self.n_x


@dataclass(frozen=True)
class GroundTruth:
    """Where signal actually sits in the generated cube.

    h1_mask marks every pixel whose mean is nonzero in the final cube
    (after any spatial convolution, which spreads the injected signal onto
    neighbors); amplitudes and true_shifts are nonzero / finite exactly on
    the injected pixels.
    """

    h1_mask: np.ndarray
    amplitudes: np.ndarray
    true_shifts: np.ndarray

    @property
    def n_h1(self) -> int:
        return int(np.count_nonzero(self.h1_mask))


def snr(config: SimConfig, signal_energy: float) -> float:
    """The sweep axis 10 log10(A / (n l sigma^2)) for total signal energy A."""
    denom = config.n * config.l * config.noise.marginal_variance
    if signal_energy <= 0:
        return -math.inf
    return 10.0 * math.log10(signal_energy / denom)


def signal_energy_for_snr(config: SimConfig, snr_db: float) -> float:
    """Inverse of `snr`: total signal energy hitting the requested level."""
    return config.n * config.l * config.noise.marginal_variance \
        * 10.0 ** (snr_db / 10.0)


def generate(config: SimConfig) -> tuple:
    """Draw one cube and its ground truth, deterministically from the seed.

    Draw order is fixed (noise cube, contaminated-pixel choice, amplitudes,
    shifts) so identical configs give bit-identical output.
    """
    rng = np.random.default_rng(config.seed)
    n_y, n_x, l = config.n_y, config.n_x, config.l
    noise = config.noise.draw(rng, (n_y, n_x, l))

    n = config.n
    n1 = int(round((1.0 - config.pi0) * n))
    picked = rng.choice(n, size=n1, replace=False) if n1 else np.empty(0, int)
    lo, hi = config.amplitude_range
    amps = rng.uniform(lo, hi, size=n1)
    if config.signal_atom is not None:
        shifts = np.full(n1, config.dictionary.shifts[config.signal_atom])
        vecs = np.broadcast_to(config.dictionary.atoms[config.signal_atom],
                               (n1, l))
    else:
        ref = config.dictionary.reference
        if ref is None:
            raise DataError("uniform-shift injection needs a dictionary "
                            "with its reference attached")
        tau = config.dictionary.tau
        shifts = rng.uniform(-tau, tau, size=n1)
        vecs = np.empty((n1, l))
        for i, u in enumerate(shifts):
            v = ref.sampled_shift(u)
            norm = np.linalg.norm(v)
            if norm <= 0:
                raise DataError("injected shift leaves no support")
            vecs[i] = v / norm
    if config.target_snr is not None and n1:
        energy = float(np.sum(amps ** 2))
        amps = amps * math.sqrt(signal_energy_for_snr(config,
                                                      config.target_snr)
                                / energy)

    signal = np.zeros((n_y, n_x, l))
    rows, cols = picked // n_x, picked % n_x
    signal[rows, cols, :] = amps[:, None] * vecs

    injected = np.zeros((n_y, n_x), dtype=bool)
    injected[rows, cols] = True
    data = noise + signal
    if config.spatial_kernel is not None:
        data = ndimage.convolve(data, config.spatial_kernel[:, :, None],
                                mode="reflect")
        footprint = config.spatial_kernel != 0.0
        h1_mask = ndimage.binary_dilation(injected,
                                          structure=footprint[::-1, ::-1])
    else:
        h1_mask = injected

    amplitudes = np.zeros((n_y, n_x))
    amplitudes[rows, cols] = amps
    true_shifts = np.full((n_y, n_x), np.nan)
    true_shifts[rows, cols] = shifts
    return (Cube(data=data), GroundTruth(h1_mask=h1_mask,
                                         amplitudes=amplitudes,
                                         true_shifts=true_shifts))


# ---------------------------------------------------------------------------
# baseline detectors


def glr_statistic(y, dictionary: Dictionary, sigma_diag) -> float:
    """1-sparse non-negative GLR score: the largest standardized whitened
    matched-filter response max_j d_j' S^-1 y / sqrt(d_j' S^-1 d_j) with
    diagonal S.  When every coefficient estimate is non-positive this is
    the least-negative standardized score."""
    y = np.asarray(y, dtype=float)
    sigma_diag = np.asarray(sigma_diag, dtype=float)
    if y.shape != (dictionary.length,) or sigma_diag.shape != y.shape:
        raise DataError("y and sigma_diag must have the atom length")
    if np.any(sigma_diag <= 0):
        raise DataError("sigma_diag must be strictly positive")
    num = dictionary.atoms @ (y / sigma_diag)
    den = np.sqrt(np.sum(dictionary.atoms ** 2 / sigma_diag, axis=1))
    return float(np.max(num / den))


def glr_field(cube, dictionary: Dictionary, sigma_diag) -> np.ndarray:
    """Vectorized `glr_statistic` over all pixels; returns a flat array in
    row-major pixel order."""
    data = getattr(cube, "data", cube)
    data = np.asarray(data, dtype=float)
    spectra = data.reshape(-1, dictionary.length)
    sigma_diag = np.asarray(sigma_diag, dtype=float)
    if np.any(sigma_diag <= 0):
        raise DataError("sigma_diag must be strictly positive")
    num = (spectra / sigma_diag) @ dictionary.atoms.T
    den = np.sqrt(np.sum(dictionary.atoms ** 2 / sigma_diag, axis=1))
    return (num / den).max(axis=1)


def calibrate_glr_null(dictionary: Dictionary, n_runs: int = 10 ** 4,
                       seed: int = 0) -> np.ndarray:
    """Null sample of the GLR statistic under N(0, I) noise, sorted."""
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n_runs, dictionary.length))
    stats = (eps @ dictionary.atoms.T).max(axis=1)
    return np.sort(stats)

def glr_pvalues(stats, null_sample: np.ndarray) -> np.ndarray:
    """Empirical survival-function p-values against a stored null sample."""
    stats = np.asarray(stats, dtype=float)
    n = null_sample.size
    below = np.searchsorted(null_sample, stats, side="left")
    return (n - below) / n


def _residual_band_variances(data: np.ndarray, dictionary: Dictionary,
                             null_sample: np.ndarray) -> np.ndarray:
    """Per-band noise variances estimated from 1-sparse fit residuals.

    A robust initial scale screens for clear detections (initial statistic
    beyond the calibration sample's 99.9% point); the best-fitting atom
    contribution is removed from those pixels only, and the band variances
    of the cleaned cube are returned.  Subtracting the fit everywhere would
    deflate the noise energy of every null pixel; subtracting nowhere lets
    strong signals inflate the scales.
    """
    flat = data.reshape(-1, dictionary.length)
    med = np.median(flat, axis=0)
    rough = (1.4826 * np.median(np.abs(flat - med), axis=0)) ** 2
    stats0 = (flat / rough) @ dictionary.atoms.T
    den = np.sum(dictionary.atoms ** 2 / rough, axis=1)
    standardized = stats0 / np.sqrt(den)
    cut = null_sample[min(int(math.ceil(0.999 * null_sample.size)),
                          null_sample.size - 1)]
    strong = standardized.max(axis=1) > cut
    resid = flat.copy()
    if np.any(strong):
        coef = stats0[strong] / den
        jhat = np.argmax(standardized[strong], axis=1)
        rows = np.arange(coef.shape[0])
        ahat = np.maximum(coef[rows, jhat], 0.0)
        resid[strong] -= ahat[:, None] * dictionary.atoms[jhat]
    return np.var(resid, axis=0, ddof=1)


def pfa_threshold_detect(field: TestField, model: NullModel,
                         eta_pfa: float) -> np.ndarray:
    """Per-pixel control only: flag p < eta with no multiplicity
    correction.  Returns a boolean map on the field's grid."""
    if not (0.0 < eta_pfa <= 1.0):
        raise DataError("eta_pfa must lie in (0, 1]")
    if eta_pfa == 1.0:
        return field.to_map(np.ones(field.n, dtype=bool))
    p = empirical_pvalues(model, field)
    return field.to_map(p < eta_pfa)


# ---------------------------------------------------------------------------
# scoring


@dataclass(frozen=True)
class Metrics:
    false_detections: int
    true_detections: int
    fdp: float
    power: float


def score(result, truth: GroundTruth, field: Optional[TestField] = None
          ) -> Metrics:
    """Count detections against the ground truth.

    `result` is a boolean map, a flat boolean vector in row-major pixel
    order, or a DetectionResult (then `field` supplies pixel positions when
    the tested pixels do not simply tile the grid).
    """
    if isinstance(result, DetectionResult):
        flat = result.detected
        if field is not None:
            detected = field.to_map(flat)
        else:
            detected = flat.reshape(truth.h1_mask.shape)
    else:
        detected = np.asarray(result)
        if detected.shape != truth.h1_mask.shape:
            detected = detected.reshape(truth.h1_mask.shape)
    if detected.shape != truth.h1_mask.shape:
        raise DataError("detection map and truth shapes differ")
    r = int(np.count_nonzero(detected))
    tp = int(np.count_nonzero(detected & truth.h1_mask))
    fp = r - tp
    n_h1 = truth.n_h1
    return Metrics(false_detections=fp, true_detections=tp,
                   fdp=fp / max(r, 1),
                   power=tp / n_h1 if n_h1 else 0.0)


# ---------------------------------------------------------------------------
# validation harnesses


def _derived_seed(*key) -> np.random.SeedSequence:
    return np.random.SeedSequence(key)


def _sweep_replicate(task):
    """One (snr, replicate) cell of the FDR sweep; module-level so worker
    processes can pickle it."""
    (dictionary, noise, pi0, kernel, kind, signal_atom, seed, snr_idx,
     snr_db, rep, fit_shape, test_shape, q_list) = task
    # the SNR axis normalizes by each cube's own pixel count, so passing
    # the same value gives fit and test cubes the same per-pixel
    # amplitude law
    fit_cfg = SimConfig(
        n_y=fit_shape[0], n_x=fit_shape[1], l=dictionary.length,
        noise=noise, dictionary=dictionary, pi0=pi0,
        seed=_derived_seed(seed, snr_idx, rep, 0),
        spatial_kernel=kernel, signal_atom=signal_atom, target_snr=snr_db)
    test_cfg = replace(fit_cfg, n_y=test_shape[0], n_x=test_shape[1],
                       seed=_derived_seed(seed, snr_idx, rep, 1))
    fit_cube, _ = generate(fit_cfg)
    test_cube, truth = generate(test_cfg)
    model = fit_null(compute_field(fit_cube, dictionary, kind))
    test_field = compute_field(test_cube, dictionary, kind)
    out = []
    for q in q_list:
        res = detect(model, test_field, q)
        m = score(res, truth, test_field)
        out.append({"snr": snr_db, "q": q, "rep": rep,
                    "fdp": m.fdp, "power": m.power,
                    "detections": m.true_detections + m.false_detections,
                    "pi0_hat": model.pi0_hat})
    return out


def fdr_snr_sweep(dictionary: Dictionary, snr_list, q_list, runs: int,
                  seed: int = 0, test_shape=(51, 51), fit_shape=(200, 200),
                  noise: NoiseSpec = NoiseSpec("student", nu=5.0),
                  pi0: float = 0.81, kernel=None,
                  kind: SimilarityKind = SimilarityKind.SPECTRAL_ANGLE,
                  signal_atom: Optional[int] = None, threads: int = 1):
    """Empirical FDR and power on spatially convolved cubes across a grid
    of nominal levels and signal strengths.

    The null model is refit per replicate on an extended cube drawn from
    the same contaminated process, then applied to the test cube; all
    nominal levels share each replicate.  Replicates draw their seeds from
    (seed, snr-index, replicate) so results are identical whether run
    serially or on a worker pool.  Returns (records, aggregate): per-run
    dicts and mean FDR / power keyed by (snr, q).
    """
    if kernel is None:
        kernel = uniform_kernel(3)
    if signal_atom is None:
        signal_atom = dictionary.m // 2
    tasks = [(dictionary, noise, pi0, kernel, kind, signal_atom, seed,
              snr_idx, snr_db, rep, fit_shape, test_shape, tuple(q_list))
             for snr_idx, snr_db in enumerate(snr_list)
             for rep in range(runs)]
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_sweep_replicate, tasks, chunksize=4))
    else:
        chunks = [_sweep_replicate(t) for t in tasks]
    records = [row for chunk in chunks for row in chunk]
    aggregate = {}
    for snr_db in snr_list:
        for q in q_list:
            sel = [r for r in records
                   if r["snr"] == snr_db and r["q"] == q]
            aggregate[(snr_db, q)] = {
                "fdr": float(np.mean([r["fdp"] for r in sel])),
                "power": float(np.mean([r["power"] for r in sel])),
            }
    return records, aggregate


def glr_contrast(dictionary: Dictionary, noise: NoiseSpec, q_list,
                 runs: int = 200, seed: int = 0, shape=(50, 50),
                 fit_shape=(200, 200), pi0: float = 0.97,
                 amplitude_range=(8.0, 12.0),
                 calibration_runs: int = 10 ** 4):
    """Head-to-head FDR/power of the empirical-null max test versus a
    Gaussian-calibrated GLR baseline on the same cubes.

    The GLR is calibrated once per dictionary by Monte-Carlo under unit
    normal noise; its per-band noise variances are re-estimated on each
    cube.  The max test uses the matched-filter score and fits its null on
    an extended cube drawn from the same process (the fit-large /
    test-small workflow).  Returns (records, aggregate) with mean FDR and
    power per (method, q).
    """
    null_sample = calibrate_glr_null(dictionary, calibration_runs,
                                     seed=_derived_seed(seed, 0xca1))
    signal_atom = dictionary.m // 2
    records = []
    for rep in range(runs):
        cfg = SimConfig(n_y=shape[0], n_x=shape[1], l=dictionary.length,
                        noise=noise, dictionary=dictionary, pi0=pi0,
                        amplitude_range=amplitude_range,
                        seed=_derived_seed(seed, rep),
                        signal_atom=signal_atom)
        fit_cfg = replace(cfg, n_y=fit_shape[0], n_x=fit_shape[1],
                          seed=_derived_seed(seed, rep, 0xf17))
        cube, truth = generate(cfg)
        fit_cube, _ = generate(fit_cfg)
        field = compute_field(cube, dictionary,
                              SimilarityKind.MATCHED_FILTER)
        model = fit_null(compute_field(fit_cube, dictionary,
                                       SimilarityKind.MATCHED_FILTER))
        sigma_diag = _residual_band_variances(cube.data, dictionary,
                                              null_sample)
        g_stats = glr_field(cube, dictionary, sigma_diag)
        g_p = glr_pvalues(g_stats, null_sample)
        for q in q_list:
            res = detect(model, field, q)
            m = score(res, truth, field)
            records.append({"method": "maxtest", "q": q, "rep": rep,
                            "fdp": m.fdp, "power": m.power})
            g_res = bh_reject(g_p, q)
            gm = score(g_res.detected, truth)
            records.append({"method": "glr", "q": q, "rep": rep,
                            "fdp": gm.fdp, "power": gm.power})
    aggregate = {}
    for method in ("maxtest", "glr"):
        for q in q_list:
            sel = [r for r in records
                   if r["method"] == method and r["q"] == q]
            aggregate[(method, q)] = {
                "fdr": float(np.mean([r["fdp"] for r in sel])),
                "power": float(np.mean([r["power"] for r in sel])),
            }
    return records, aggregate


def disk_mask(shape, center, n_pixels: int) -> np.ndarray:
    """Boolean mask of the n_pixels grid points closest to `center`
    (deterministic tie-break by row-major order): a pixelated disk."""
    yy, xx = np.indices(shape)
    d2 = (yy - center[0]) ** 2 + (xx - center[1]) ** 2
    order = np.argsort(d2.ravel(), kind="stable")
    mask = np.zeros(shape[0] * shape[1], dtype=bool)
    mask[order[:n_pixels]] = True
    return mask.reshape(shape)


def threshold_comparison(dictionary: Dictionary, regions: int = 5,
                         seed: int = 0, shape=(50, 50),
                         fit_shape=(200, 200), source_pixels: int = 185,
                         amplitude: float = 4.5,
                         noise: NoiseSpec = NoiseSpec("student", nu=5.0),
                         pfa_levels=(0.05, 0.001), fdr_level: float = 0.2,
                         kind: SimilarityKind = SimilarityKind.SPECTRAL_ANGLE):
    """Per-pixel PFA thresholds versus the adaptive FDR procedure on fields
    with and without a compact synthetic source, averaged over regions.

    Each region draws an extended noise cube for the null fit, a noise-only
    test cube, and the same test cube with a disk-shaped source of constant
    amplitude added on the central dictionary atom.  Returns a dict of
    averaged counts per detector and condition.
    """
    atom = dictionary.atoms[dictionary.m // 2]
    rows = []
    for region in range(regions):
        fit_cfg = SimConfig(n_y=fit_shape[0], n_x=fit_shape[1],
                            l=dictionary.length, noise=noise,
                            dictionary=dictionary, pi0=1.0,
                            seed=_derived_seed(seed, region, 0))
        test_cfg = replace(fit_cfg, n_y=shape[0], n_x=shape[1],
                           seed=_derived_seed(seed, region, 1))
        fit_cube, _ = generate(fit_cfg)
        noise_cube, _ = generate(test_cfg)
        model = fit_null(compute_field(fit_cube, dictionary, kind))

        src_mask = disk_mask(shape, (shape[0] // 2, shape[1] // 2),
                             source_pixels)
        source = np.where(src_mask[:, :, None], amplitude * atom, 0.0)
        source_cube = Cube(data=noise_cube.data + source)
        truth_noise = GroundTruth(h1_mask=np.zeros(shape, dtype=bool),
                                  amplitudes=np.zeros(shape),
                                  true_shifts=np.full(shape, np.nan))
        truth_src = GroundTruth(h1_mask=src_mask,
                                amplitudes=np.where(src_mask, amplitude, 0.0),
                                true_shifts=np.where(src_mask, 0.0, np.nan))

        for label, cube, truth in (("noise", noise_cube, truth_noise),
                                   ("source", source_cube, truth_src)):
            fld = compute_field(cube, dictionary, kind)
            for eta in pfa_levels:
                m = score(pfa_threshold_detect(fld, model, eta), truth)
                rows.append({"region": region, "cond": label,
                             "detector": f"pfa@{eta:g}", "metrics": m})
            res = detect(model, fld, fdr_level)
            m = score(res, truth, fld)
            rows.append({"region": region, "cond": label,
                         "detector": f"fdr@{fdr_level:g}", "metrics": m})
    summary = {}
    for cond in ("noise", "source"):
        for det in [f"pfa@{e:g}" for e in pfa_levels] + [f"fdr@{fdr_level:g}"]:
            sel = [r["metrics"] for r in rows
                   if r["cond"] == cond and r["detector"] == det]
            summary[(cond, det)] = {
                "false_detections": float(np.mean([m.false_detections
                                                   for m in sel])),
                "true_detections": float(np.mean([m.true_detections
                                                  for m in sel])),
                "fdp": float(np.mean([m.fdp for m in sel])),
                "power": float(np.mean([m.power for m in sel])),
            }
    return rows, summary

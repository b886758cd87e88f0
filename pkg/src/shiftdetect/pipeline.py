"""End-to-end workflow on real or simulated cubes: ingestion, variance
reduction and robust standardization, spatial smoothing, reference-spectrum
estimation, and the fit-null / test / decide orchestration.

Masked pixels carry all-NaN spectra; they are excluded from every count and
reported as untested in output maps.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .dictionary import Dictionary, ReferenceAtom, build_lss
from .errors import DataError
from .fdr import DetectionResult, detect
from .nullmodel import NullModel, fit_null
from .similarity import SimilarityKind
from .teststat import TestField, compute_field

_MAGIC = b"FDC1"
_FLAG_VARIANCE = 0x1

CONTOUR_LEVELS = (0.05, 0.1, 0.2, 0.4)


@dataclass(frozen=True)
class Cube:
    """Observation container: (n_y, n_x, l) flux values plus an optional
    variance cube of the same shape.  band_origin records the absolute
    index of band 0 so subcubes keep their wavelength bookkeeping."""

    data: np.ndarray
    variance: Optional[np.ndarray] = None
    band_origin: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3:
            raise DataError("cube data must be (n_y, n_x, l)")
        object.__setattr__(self, "data", data)
        if self.variance is not None:
            var = np.asarray(self.variance, dtype=float)
            if var.shape != data.shape:
                raise DataError("variance cube shape mismatch")
            if np.any(var[~np.isnan(var)] <= 0):
                raise DataError("variance must be strictly positive")
            object.__setattr__(self, "variance", var)

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class FsfKernel:
    """Spatial impulse-response kernel: 180-degree symmetric, unit sum."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or not np.all(np.isfinite(w)):
            raise DataError("kernel must be a finite 2-d matrix")
        if not np.allclose(w, w[::-1, ::-1], atol=1e-12):
            raise DataError("kernel must be symmetric under 180-deg rotation")
        total = w.sum()
        if total <= 0:
            raise DataError("kernel must have positive sum")
        object.__setattr__(self, "weights", w / total)


def gaussian_fsf(size: int, sigma: float) -> FsfKernel:
    if size % 2 == 0:
        raise DataError("kernel size must be odd")
    r = np.arange(size) - size // 2
    g = np.exp(-0.5 * (r / sigma) ** 2)
    return FsfKernel(np.outer(g, g))


@dataclass(frozen=True)
class RegionSpec:
    """Spatial-spectral neighborhood: a test window inside a larger
    null-fit window, both centered on the same (pixel, band) position."""

    center_y: int
    center_x: int
    center_band: int
    half_width: int = 25
    half_bands: int = 15
    fit_half_width: int = 100

    def __post_init__(self):
        if self.half_width < 1 or self.half_bands < 1:
            raise DataError("window half sizes must be >= 1")
        if self.fit_half_width < self.half_width:
            raise DataError("test region must fit inside the fit region")

    def band_slice(self) -> slice:
        return slice(self.center_band - self.half_bands,
                     self.center_band + self.half_bands)

    def test_slices(self):
        return (slice(self.center_y - self.half_width,
                      self.center_y + self.half_width),
                slice(self.center_x - self.half_width,
                      self.center_x + self.half_width),
                self.band_slice())

    def fit_slices(self):
        return (slice(self.center_y - self.fit_half_width,
                      self.center_y + self.fit_half_width),
                slice(self.center_x - self.fit_half_width,
                      self.center_x + self.fit_half_width),
                self.band_slice())


def extract(cube: Cube, slices) -> Cube:
    """Subcube view; raises when the window leaves the cube."""
    n_y, n_x, l = cube.shape
    sy, sx, sb = slices
    if sy.start < 0 or sx.start < 0 or sb.start < 0 \
            or sy.stop > n_y or sx.stop > n_x or sb.stop > l:
        raise DataError("window outside cube")
    return Cube(data=cube.data[sy, sx, sb],
                variance=None if cube.variance is None
                else cube.variance[sy, sx, sb],
                band_origin=cube.band_origin + sb.start)


# ---------------------------------------------------------------------------
# i/o


def save_cube(cube: Cube, path) -> None:
    """Documented binary format: magic "FDC1", three little-endian uint32
    dims, uint32 flags (bit 0: variance block present), int32 band origin,
    then float64 values row-major band-fastest; variance block follows when
    flagged.  Lossless round-trip."""
    n_y, n_x, l = cube.shape
    flags = _FLAG_VARIANCE if cube.variance is not None else 0
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIIi", n_y, n_x, l, flags, cube.band_origin))
        fh.write(np.ascontiguousarray(cube.data, dtype="<f8").tobytes())
        if cube.variance is not None:
            fh.write(np.ascontiguousarray(cube.variance,
                                          dtype="<f8").tobytes())


def load_cube(path) -> Cube:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        header = fh.read(20)
        if len(header) != 20:
            raise DataError(f"{path}: truncated header")
        n_y, n_x, l, flags, band_origin = struct.unpack("<IIIIi", header)
        count = n_y * n_x * l
        raw = fh.read(8 * count)
        if len(raw) != 8 * count:
            raise DataError(f"{path}: truncated data block")
        data = np.frombuffer(raw, dtype="<f8").reshape(n_y, n_x, l).copy()
        variance = None
        if flags & _FLAG_VARIANCE:
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise DataError(f"{path}: truncated variance block")
            variance = np.frombuffer(raw, dtype="<f8") \
                .reshape(n_y, n_x, l).copy()
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes")
    cube = Cube(data=data, variance=variance, band_origin=band_origin)
    _check_nan_policy(cube)
    return cube


def save_cube_csvdir(cube: Cube, dirpath) -> None:
    """One CSV per band (17 significant digits) plus a small metadata file;
    variance bands saved alongside when present."""
    os.makedirs(dirpath, exist_ok=True)
    n_y, n_x, l = cube.shape
    with open(os.path.join(dirpath, "meta.txt"), "w") as fh:
        fh.write(f"n_y={n_y}\nn_x={n_x}\nl={l}\n"
                 f"band_origin={cube.band_origin}\n"
                 f"has_variance={int(cube.variance is not None)}\n")
    for b in range(l):
        np.savetxt(os.path.join(dirpath, f"band{b:04d}.csv"),
                   cube.data[:, :, b], fmt="%.17g", delimiter=",")
        if cube.variance is not None:
            np.savetxt(os.path.join(dirpath, f"variance{b:04d}.csv"),
                       cube.variance[:, :, b], fmt="%.17g", delimiter=",")


def load_cube_csvdir(dirpath) -> Cube:
    meta_path = os.path.join(dirpath, "meta.txt")
    if not os.path.exists(meta_path):
        raise DataError(f"{dirpath}: missing meta.txt")
    meta = {}
    with open(meta_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                key, _, value = line.partition("=")
                meta[key] = int(value)
    try:
        n_y, n_x, l = meta["n_y"], meta["n_x"], meta["l"]
    except KeyError as exc:
        raise DataError(f"{dirpath}: incomplete metadata") from exc
    data = np.empty((n_y, n_x, l))
    variance = np.empty((n_y, n_x, l)) if meta.get("has_variance") else None
    for b in range(l):
        band = np.loadtxt(os.path.join(dirpath, f"band{b:04d}.csv"),
                          delimiter=",", ndmin=2)
        if band.shape != (n_y, n_x):
            raise DataError(f"{dirpath}: band {b} has shape {band.shape}")
        data[:, :, b] = band
        if variance is not None:
            variance[:, :, b] = np.loadtxt(
                os.path.join(dirpath, f"variance{b:04d}.csv"),
                delimiter=",", ndmin=2)
    cube = Cube(data=data, variance=variance,
                band_origin=meta.get("band_origin", 0))
    _check_nan_policy(cube)
    return cube


def _check_nan_policy(cube: Cube) -> None:
    """NaNs may only appear as whole masked spectra (and then in both data
    and variance)."""
    flat = cube.data.reshape(-1, cube.shape[2])
    counts = np.isnan(flat).sum(axis=1)
    if np.any((counts > 0) & (counts < cube.shape[2])):
        raise DataError("NaNs allowed only in fully masked pixels")
    if cube.variance is not None:
        vcounts = np.isnan(cube.variance.reshape(flat.shape)).sum(axis=1)
        if np.any(vcounts != counts):
            raise DataError("variance mask must match data mask")


def masked_pixels(cube: Cube) -> np.ndarray:
    """Boolean (n_y, n_x) map of all-NaN spectra."""
    return np.isnan(cube.data).all(axis=2)


# ---------------------------------------------------------------------------
# preprocessing


def moving_median_baseline(data: np.ndarray, window: int) -> np.ndarray:
    """Per-pixel running median along the band axis (edge-extended).  A
    stand-in continuum estimate for inputs that still carry one."""
    if window < 3 or window % 2 == 0:
        raise DataError("baseline window must be odd and >= 3")
    # reflect padding: edge-extended padding would make the median equal the
    # data itself over the first and last half-windows
    return ndimage.median_filter(data, size=(1, 1, window), mode="reflect")


def preprocess(cube: Cube, fsf: Optional[FsfKernel] = None,
               baseline_window: Optional[int] = None,
               use_variance: bool = True) -> Cube:
    """Standardize a cube for testing.

    Steps, in order: optional running-median baseline subtraction (off by
    default, for inputs whose continuum was not already removed); per-voxel
    division by sqrt(variance) when a variance cube is present; per-band
    robust centering (median) and scaling (1.4826 MAD, the Gaussian-
    consistent constant); optional spatial convolution with the kernel,
    reflective boundaries.  Every step is odd in the data, so symmetric
    noise stays symmetric.  Masked pixels pass through untouched.
    """
    data = cube.data.copy()
    mask = masked_pixels(cube)
    if baseline_window is not None:
        data = data - moving_median_baseline(data, baseline_window)
    if use_variance:
        if cube.variance is None:
            raise DataError("variance reduction requested but the cube "
                            "has no variance")
        data = data / np.sqrt(cube.variance)
    for b in range(data.shape[2]):
        band = data[:, :, b]
        med = np.nanmedian(band)
        band = band - med
        scale = 1.4826 * np.nanmedian(np.abs(band))
        if not np.isfinite(scale) or scale <= 0:
            raise DataError(f"degenerate band {b}: zero spread")
        data[:, :, b] = band / scale
    if fsf is not None:
        filled = np.where(np.isnan(data), 0.0, data)
        data = ndimage.convolve(filled, fsf.weights[:, :, None],
                                mode="reflect")
        data[mask] = np.nan
    return Cube(data=data, variance=None, band_origin=cube.band_origin)


# ---------------------------------------------------------------------------
# reference estimation and detection


def estimate_reference(cube: Cube, region: RegionSpec,
                       n_center_pixels: int = 5) -> ReferenceAtom:
    """Average the spectra of the brightest pixels of the test window.

    Brightness is summed flux over the spectral window; ties break by
    row-major pixel order.  The average is l2-normalized and centered on
    the window's middle band.
    """
    if n_center_pixels < 1:
        raise DataError("n_center_pixels must be >= 1")
    sub = extract(cube, region.test_slices())
    flat = sub.data.reshape(-1, sub.shape[2])
    flux = np.where(np.isnan(flat).any(axis=1), -np.inf, flat.sum(axis=1))
    order = np.argsort(-flux, kind="stable")[:n_center_pixels]
    spectra = flat[order]
    if np.isnan(spectra).any():
        raise DataError("not enough unmasked pixels for the reference")
    mean = spectra.mean(axis=0)
    return ReferenceAtom(mean, center_band=region.half_bands,
                         allow_negative=True)


def reference_pixel_mask(cube: Cube, region: RegionSpec,
                         n_center_pixels: int = 5) -> np.ndarray:
    """Boolean map (test-window grid) of the pixels averaged into the
    reference spectrum.  These pixels stay in the tested set but trivially
    match the dictionary they defined, so output maps flag them."""
    sub = extract(cube, region.test_slices())
    n_y, n_x = sub.shape[0], sub.shape[1]
    flat = sub.data.reshape(-1, sub.shape[2])
    flux = np.where(np.isnan(flat).any(axis=1), -np.inf, flat.sum(axis=1))
    order = np.argsort(-flux, kind="stable")[:n_center_pixels]
    mask = np.zeros(n_y * n_x, dtype=bool)
    mask[order] = True
    return mask.reshape(n_y, n_x)


@dataclass(frozen=True)
class DictionaryParams:
    """Dictionary construction knobs for the detection workflow.

    gram_tol allows slightly negative inner products between far-shifted
    atoms; a reference estimated from noisy pixels always carries a noise
    floor at shifts where the true line profiles no longer overlap.
    """

    m: int = 15
    tau: float = 7.0
    mode: str = "integer"
    n_center_pixels: int = 5
    gram_tol: float = 0.2


@dataclass(frozen=True)
class DetectionOutput:
    result: DetectionResult
    model: NullModel
    dictionary: Dictionary
    field: TestField
    maps: dict = field(repr=False, default_factory=dict)


def run_detection(cube: Cube, region: RegionSpec,
                  dict_params: DictionaryParams = DictionaryParams(),
                  q: float = 0.2,
                  kind: SimilarityKind = SimilarityKind.SPECTRAL_ANGLE,
                  dictionary: Optional[Dictionary] = None,
                  model: Optional[NullModel] = None) -> DetectionOutput:
    """Full decision workflow on one spatial-spectral neighborhood.

    Builds the shift dictionary from the estimated reference spectrum
    (unless one is supplied), fits the null model on the extended window
    (unless one is supplied), computes p/q-values on the test window and
    applies the plug-in step-up rule at level q.  Output maps hold the
    p-values, q-values, the decision at q, the decision sets at the
    standard overlay levels, and (when the reference was estimated here)
    a flag map of the pixels that defined it.
    """
    ref_mask = None
    if dictionary is None:
        reference = estimate_reference(cube, region,
                                       dict_params.n_center_pixels)
        ref_mask = reference_pixel_mask(cube, region,
                                        dict_params.n_center_pixels)
        dictionary = build_lss(reference, dict_params.m, dict_params.tau,
                               dict_params.mode,
                               gram_tol=dict_params.gram_tol)
    if model is None:
        fit_field = compute_field(extract(cube, region.fit_slices()),
                                  dictionary, kind)
        model = fit_null(fit_field)
    test_field = compute_field(extract(cube, region.test_slices()),
                               dictionary, kind)
    result = detect(model, test_field, q)
    maps = {
        "pvalue": test_field.to_map(result.pvalues),
        "qvalue": test_field.to_map(result.qvalues),
        "detected": test_field.to_map(result.detected),
        "argmax_atom": test_field.to_map(test_field.argmax_atom),
        "best_shift": test_field.to_map(
            dictionary.shifts[test_field.argmax_atom]),
    }
    for level in CONTOUR_LEVELS:
        maps[f"detected_q{level:g}"] = test_field.to_map(
            detect(model, test_field, level).detected)
    if ref_mask is not None:
        maps["reference_pixels"] = ref_mask
    return DetectionOutput(result=result, model=model, dictionary=dictionary,
                           field=test_field, maps=maps)


# ---------------------------------------------------------------------------
# map output


def write_pgm(path, values: np.ndarray, invert: bool = False) -> None:
    """8-bit binary PGM preview of a 2-d map; NaN renders black."""
    v = np.asarray(values, dtype=float)
    finite = np.isfinite(v)
    lo = v[finite].min() if finite.any() else 0.0
    hi = v[finite].max() if finite.any() else 1.0
    span = hi - lo if hi > lo else 1.0
    scaled = np.where(finite, (v - lo) / span, 0.0)
    if invert:
        scaled = np.where(finite, 1.0 - scaled, 0.0)
    img = np.clip(np.round(scaled * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())


def write_maps(output: DetectionOutput, outdir, prefix: str = "map") -> None:
    """CSV grid plus PGM preview for every map in the detection output."""
    os.makedirs(outdir, exist_ok=True)
    for name, values in output.maps.items():
        arr = values.astype(float)
        np.savetxt(os.path.join(outdir, f"{prefix}_{name}.csv"), arr,
                   fmt="%.17g", delimiter=",")
        write_pgm(os.path.join(outdir, f"{prefix}_{name}.pgm"), arr,
                  invert=name in ("pvalue", "qvalue"))

"""Shift dictionaries built from a single reference line profile.

A dictionary holds m unit-norm copies of one reference atom, displaced on a
linearly spaced grid of spectral shifts covering [-tau, tau].  Shifting is
either a pure index roll (no interpolation; appropriate when the shift grid
falls on whole bands) or a resampling of a continuous line model (for
fractional shifts in idealized studies).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad as quadrature

from .errors import DataError

NORM_TOL = 1e-12

# Shift modes accepted by build_lss.
MODE_INTEGER = "integer"
MODE_CONTINUOUS = "continuous"

_INT_SHIFT_TOL = 1e-9


@dataclass(frozen=True)
class GaussianLineModel:
    """Truncated Gaussian line profile as a continuous model of band
    offset: f(0) = 1 and f(u) = 0 beyond the truncation half width.
    A picklable callable, so dictionaries carrying it can cross process
    boundaries in Monte-Carlo harnesses."""

    sigma: float
    trunc_halfwidth: float

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.exp(-0.5 * (u / self.sigma) ** 2)
        return np.where(np.abs(u) <= self.trunc_halfwidth, out, 0.0)


def gaussian_line_model(fwhm: float,
                        trunc_halfwidth: float = 6.0) -> GaussianLineModel:
    """Gaussian line model from its full width at half maximum:
    sigma = fwhm / (2 sqrt(2 ln 2))."""
    if fwhm <= 0:
        raise DataError("fwhm must be positive")
    sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return GaussianLineModel(sigma=sigma, trunc_halfwidth=trunc_halfwidth)


@dataclass(frozen=True)
class SampledLineModel:
    """Piecewise-linear continuous model through a sampled profile, zero
    outside the sampled support.  The canonical continuous model to attach
    when only samples of the line are available (e.g. a reference read from
    CSV) and fractional-shift analysis is still wanted."""

    offsets: np.ndarray
    values: np.ndarray

    def __call__(self, u):
        return np.interp(np.asarray(u, dtype=float), self.offsets,
                         self.values, left=0.0, right=0.0)

    @classmethod
    def from_reference(cls, reference: "ReferenceAtom") -> "SampledLineModel":
        grid = np.arange(reference.length, dtype=float) \
            - reference.center_band
        return cls(offsets=grid, values=reference.values.copy())


def gaussian_line_reference(length: int, center_band: int, fwhm: float,
                            trunc_halfwidth: float = 6.0) -> "ReferenceAtom":
    """Reference atom sampled from a truncated Gaussian line profile."""
    model = gaussian_line_model(fwhm, trunc_halfwidth)
    values = model(np.arange(length, dtype=float) - center_band)
    return ReferenceAtom(values, center_band, model=model)


@dataclass(frozen=True)
class ReferenceAtom:
    """A single target line signature, stored with unit l2 norm.

    Parameters
    ----------
    values : array, shape (l,)
        Sampled profile; normalized on construction.
    center_band : int
        Band index of the line center within `values`.
    model : callable, optional
        Continuous profile f(u) of the band offset u from the line center,
        with values[j] = f(j - center_band).  Required to generate atoms at
        fractional shifts; when absent, fractional-shift *evaluation* (for
        autocorrelation-type quantities only) falls back to a linear
        interpolant of the samples with zero padding.
    allow_negative : bool
        Permit negative sample values.  Dictionaries built from such a
        reference must still have pairwise non-negative atom inner products;
        this is checked at build time.
    """

    values: np.ndarray
    center_band: int
    model: Optional[Callable] = None
    allow_negative: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise DataError("reference must be a 1-d vector of length >= 2")
        if not np.all(np.isfinite(values)):
            raise DataError("reference contains non-finite values")
        if not self.allow_negative and np.any(values < -NORM_TOL):
            raise DataError("reference has negative entries; "
                            "pass allow_negative=True to relax")
        norm = np.linalg.norm(values)
        if norm <= 0:
            raise DataError("reference has zero norm")
        object.__setattr__(self, "values", values / norm)
        if not (0 <= self.center_band < values.size):
            raise DataError("center_band outside the sampled support")

    @property
    def length(self) -> int:
        return self.values.size

    def sampled_shift(self, shift: float) -> np.ndarray:
        """Zero-padded shifted copy of the profile (not renormalized).

        Whole-band shifts are exact index rolls of the stored samples.
        Fractional shifts resample the continuous model when one is
        available, otherwise a linear interpolant of the samples.
        """
        l = self.length
        nearest = round(float(shift))
        if abs(shift - nearest) <= _INT_SHIFT_TOL:
            s = int(nearest)
            out = np.zeros(l)
            if abs(s) < l:
                if s >= 0:
                    out[s:] = self.values[:l - s]
                else:
                    out[:l + s] = self.values[-s:]
            return out
        offsets = np.arange(l, dtype=float) - self.center_band - float(shift)
        if self.model is not None:
            out = np.asarray(self.model(offsets), dtype=float)
            # rescale so the model agrees with the stored unit-norm samples
            base = np.asarray(self.model(np.arange(l, dtype=float)
                                         - self.center_band), dtype=float)
            base_norm = np.linalg.norm(base)
            if base_norm <= 0:
                raise DataError("continuous model vanishes on the support")
            return out / base_norm
        grid = np.arange(l, dtype=float) - self.center_band
        return np.interp(offsets, grid, self.values, left=0.0, right=0.0)


@dataclass(frozen=True)
class Dictionary:
    """m unit-norm shifted atoms plus their shift grid and coherence.

    coherence = max over distinct atom pairs of |<d_i, d_j>|; defined as 0
    for a single-atom dictionary.
    """

    atoms: np.ndarray            # (m, l), rows unit norm
    shifts: np.ndarray           # (m,)
    tau: float
    coherence: float
    reference: Optional[ReferenceAtom] = field(default=None, repr=False)
    mode: str = MODE_INTEGER

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        shifts = np.asarray(self.shifts, dtype=float)
        if atoms.ndim != 2:
            raise DataError("atoms must be a (m, l) matrix")
        if shifts.shape != (atoms.shape[0],):
            raise DataError("shifts must have one entry per atom")
        norms = np.linalg.norm(atoms, axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            raise DataError("atoms must have unit l2 norm within 1e-12")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "shifts", shifts)

    @property
    def m(self) -> int:
        return self.atoms.shape[0]

    @property
    def length(self) -> int:
        return self.atoms.shape[1]

    def gram(self) -> np.ndarray:
        return self.atoms @ self.atoms.T

    def save_csv(self, path) -> None:
        """Write shifts (header row) and atoms (one row per atom) at 17
        significant digits so the matrix round-trips bit-exactly."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["%.17g" % s for s in self.shifts])
            for row in self.atoms:
                writer.writerow(["%.17g" % v for v in row])

    @classmethod
    def load_csv(cls, path) -> "Dictionary":
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
        if len(rows) < 2:
            raise DataError(f"{path}: expected a shift header plus atom rows")
        shifts = np.array([float(v) for v in rows[0]])
        atoms = np.array([[float(v) for v in row] for row in rows[1:]])
        if atoms.shape[0] != shifts.size:
            raise DataError(f"{path}: header/atom row count mismatch")
        tau = float(np.max(np.abs(shifts))) if shifts.size else 0.0
        return cls(atoms=atoms, shifts=shifts, tau=tau,
                   coherence=_coherence(atoms), reference=None, mode="loaded")


def _coherence(atoms: np.ndarray) -> float:
    if atoms.shape[0] < 2:
        return 0.0
    g = np.abs(atoms @ atoms.T)
    np.fill_diagonal(g, 0.0)
    return float(g.max())


def lss_shift_grid(m: int, tau: float) -> np.ndarray:
    """Linearly spaced shifts -tau + 2*tau*k/(m-1), k = 0..m-1."""
    if m == 1:
        return np.zeros(1)
    k = np.arange(m, dtype=float)
    return -tau + 2.0 * tau * k / (m - 1)


def build_lss(reference: ReferenceAtom, m: int, tau: float,
              mode: str = MODE_INTEGER,
              gram_tol: float = NORM_TOL) -> Dictionary:
    """Build the linearly-spaced-shift dictionary of size m over [-tau, tau].

    mode "integer" rolls the sampled reference by whole bands (the shift
    grid must then land on integers); mode "continuous" resamples the
    reference's continuous model at fractional shifts.  Atoms pushed
    partially off the sampled support are truncated and renormalized; an
    atom entirely off support raises ``DataError("atom vanished")``.

    For a reference with negative entries the pairwise inner products of
    the shifted atoms must stay above -gram_tol.  The strict default suits
    idealized profiles; references estimated from noisy data need a slack
    of the order of their noise floor (far-apart shifts overlap only in
    noise).
    """
    if m < 1:
        raise DataError("m must be >= 1")
    if tau < 0:
        raise DataError("tau must be >= 0")
    if mode not in (MODE_INTEGER, MODE_CONTINUOUS):
        raise DataError(f"unknown shift mode {mode!r}")
    if m == 1:
        if tau > 0:
            raise DataError("shift grid undefined for m = 1 with tau > 0")
        return Dictionary(atoms=reference.values[None, :].copy(),
                          shifts=np.zeros(1), tau=0.0, coherence=0.0,
                          reference=reference, mode=mode)

    shifts = lss_shift_grid(m, tau)
    if mode == MODE_INTEGER:
        offgrid = np.abs(shifts - np.round(shifts)) > _INT_SHIFT_TOL
        if np.any(offgrid):
            raise DataError(
                "integer shift mode requires whole-band shifts; "
                f"grid step 2*tau/(m-1) = {2 * tau / (m - 1):g} is fractional "
                "(use continuous mode)")
    elif reference.model is None:
        fractional = np.abs(shifts - np.round(shifts)) > _INT_SHIFT_TOL
        if np.any(fractional):
            raise DataError("continuous mode with fractional shifts requires "
                            "a reference with a continuous model")

    atoms = np.empty((m, reference.length))
    for i, s in enumerate(shifts):
        vec = reference.sampled_shift(s)
        norm = np.linalg.norm(vec)
        if norm <= NORM_TOL:
            raise DataError(f"atom vanished: shift {s:g} leaves no support")
        atoms[i] = vec / norm

    if reference.allow_negative or np.any(reference.values < 0):
        gram = np.vstack([atoms, reference.values[None, :]])
        gram = gram @ gram.T
        if np.any(gram < -gram_tol):
            raise DataError("relaxed non-negativity violated: some shifted "
                            "atoms have negative inner products")

    return Dictionary(atoms=atoms, shifts=shifts, tau=float(tau),
                      coherence=_coherence(atoms), reference=reference,
                      mode=mode)


def autocorrelation(reference: ReferenceAtom, shift: float) -> float:
    """Overlap <d, shift_u(d)> between the unit reference and its shifted,
    renormalized copy.  Out-of-support shifts return 0."""
    vec = reference.sampled_shift(shift)
    norm = np.linalg.norm(vec)
    if norm <= NORM_TOL:
        return 0.0
    return float(reference.values @ (vec / norm))


def expected_max_gain(reference: ReferenceAtom, m: int, tau: float,
                      amplitude: float) -> float:
    """Expected peak response to a signal of the given amplitude whose shift
    is uniform on the grid: amplitude * E[Gamma(e)], e ~ U([0, tau/(m-1)]).

    The miss distance e is the gap between the signal's true shift and the
    nearest atom; the expectation is evaluated by adaptive quadrature
    (the overlap curve of a truncated profile has kinks, which defeat a
    single fixed rule).
    """
    if m < 2:
        raise DataError("expected_max_gain requires m >= 2")
    half = tau / (m - 1)
    if half == 0.0:
        return amplitude * autocorrelation(reference, 0.0)
    val, _ = quadrature(lambda u: autocorrelation(reference, u), 0.0, half,
                        epsabs=1e-10, epsrel=1e-10, limit=200)
    return amplitude * val / half

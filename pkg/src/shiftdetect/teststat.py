"""Per-pixel max and min statistics over a dictionary."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dictionary import Dictionary
from .errors import DataError
from .similarity import SimilarityKind, score_matrix


@dataclass(frozen=True)
class TestField:
    """Max/min similarity statistics for a set of tested pixels.

    rows/cols give each tested pixel's grid position; pixels excluded from
    testing (masked) simply do not appear.
    """

    tmax: np.ndarray
    tmin: np.ndarray
    argmax_atom: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    shape: tuple

    __test__ = False  # not a pytest class, despite the name

    def __post_init__(self):
        n = self.tmax.size
        for name in ("tmin", "argmax_atom", "rows", "cols"):
            if getattr(self, name).size != n:
                raise DataError(f"TestField field {name} has wrong length")
        if np.any(self.tmin > self.tmax):
            raise DataError("TestField requires tmin <= tmax per pixel")

    @property
    def n(self) -> int:
        return self.tmax.size

    def to_map(self, values: np.ndarray, fill=np.nan) -> np.ndarray:
        """Scatter per-pixel values back onto the full grid."""
        values = np.asarray(values)
        if values.dtype == bool:
            out = np.zeros(self.shape, dtype=bool)
        else:
            out = np.full(self.shape, fill, dtype=float)
        out[self.rows, self.cols] = values
        return out

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["shape", self.shape[0], self.shape[1]])
            writer.writerow(["row", "col", "tmax", "tmin", "argmax"])
            for r, c, hi, lo, a in zip(self.rows, self.cols, self.tmax,
                                       self.tmin, self.argmax_atom):
                writer.writerow([r, c, "%.17g" % hi, "%.17g" % lo, a])

    @classmethod
    def load_csv(cls, path) -> "TestField":
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
        if len(rows) < 2 or rows[0][0] != "shape":
            raise DataError(f"{path}: not a TestField CSV")
        shape = (int(rows[0][1]), int(rows[0][2]))
        body = rows[2:]
        return cls(
            tmax=np.array([float(r[2]) for r in body]),
            tmin=np.array([float(r[3]) for r in body]),
            argmax_atom=np.array([int(r[4]) for r in body]),
            rows=np.array([int(r[0]) for r in body]),
            cols=np.array([int(r[1]) for r in body]),
            shape=shape,
        )


def compute_field(cube, dictionary: Dictionary,
                  kind: SimilarityKind) -> TestField:
    """Max/min statistic and best-matching atom for every tested pixel.

    `cube` may be a pipeline Cube, a (n_y, n_x, l) array, or a (n, l) matrix
    of spectra (treated as an (n, 1) grid).  Pixels whose spectrum is
    entirely NaN are masked out; a partially-NaN spectrum is an error.
    Argmax ties break toward the lowest atom index.
    """
    data = getattr(cube, "data", cube)
    data = np.asarray(data, dtype=float)
    if data.ndim == 2:
        data = data[:, None, :]
    if data.ndim != 3:
        raise DataError("expected a (n_y, n_x, l) cube or (n, l) spectra")
    if data.shape[2] != dictionary.length:
        raise DataError(
            f"cube has {data.shape[2]} bands but atoms have length "
            f"{dictionary.length}")

    n_y, n_x, l = data.shape
    flat = data.reshape(-1, l)
    nan_count = np.isnan(flat).sum(axis=1)
    masked = nan_count == l
    if np.any((nan_count > 0) & ~masked):
        raise DataError("NaNs allowed only in fully masked pixels")
    valid = np.nonzero(~masked)[0]

    scores = score_matrix(flat[valid], dictionary.atoms, kind)
    return TestField(
        tmax=scores.max(axis=1),
        tmin=scores.min(axis=1),
        argmax_atom=scores.argmax(axis=1),
        rows=valid // n_x,
        cols=valid % n_x,
        shape=(n_y, n_x),
    )

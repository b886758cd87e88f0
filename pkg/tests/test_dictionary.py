import numpy as np
import pytest

from shiftdetect.dictionary import (Dictionary, ReferenceAtom, SampledLineModel,
                                    autocorrelation, build_lss,
                                    expected_max_gain,
                                    gaussian_line_reference, lss_shift_grid)
from shiftdetect.errors import DataError


def naive_roll_truncate(values, shift):
    """Independent index-shift of a sampled profile with zero padding."""
    l = len(values)
    out = np.zeros(l)
    for j in range(l):
        src = j - shift
        if 0 <= src < l:
            out[j] = values[src]
    return out


class TestReferenceAtom:
    def test_normalized_on_construction(self):
        ref = ReferenceAtom(np.array([1.0, 2.0, 2.0]), center_band=1)
        assert abs(np.linalg.norm(ref.values) - 1.0) < 1e-12

    def test_rejects_negative_entries(self):
        with pytest.raises(DataError):
            ReferenceAtom(np.array([1.0, -0.5, 0.2]), center_band=0)

    def test_relaxed_mode_accepts_negatives(self):
        ref = ReferenceAtom(np.array([1.0, -0.01, 0.2]), center_band=0,
                            allow_negative=True)
        assert ref.values[1] < 0

    def test_too_short(self):
        with pytest.raises(DataError):
            ReferenceAtom(np.array([1.0]), center_band=0)


class TestBuildLss:
    def test_shift_grid(self):
        shifts = lss_shift_grid(5, 8.0)
        assert np.allclose(shifts, [-8.0, -4.0, 0.0, 4.0, 8.0])

    def test_single_atom(self, gauss_reference):
        d = build_lss(gauss_reference, 1, 0.0)
        assert d.m == 1
        assert d.coherence == 0.0
        assert np.array_equal(d.atoms[0], gauss_reference.values)

    def test_single_atom_with_shift_fails(self, gauss_reference):
        with pytest.raises(DataError):
            build_lss(gauss_reference, 1, 3.0)

    def test_unit_norm_atoms(self, gauss_reference):
        for m in (2, 3, 7, 15):
            d = build_lss(gauss_reference, m, 7.0, "continuous")
            norms = np.linalg.norm(d.atoms, axis=1)
            assert np.all(np.abs(norms - 1.0) < 1e-12)

    def test_integer_mode_matches_naive_roll_bitwise(self, gauss_reference,
                                                     rng):
        d = build_lss(gauss_reference, 3, 8.0, "integer")
        for atom, shift in zip(d.atoms, d.shifts):
            raw = naive_roll_truncate(gauss_reference.values, int(shift))
            expected = raw / np.linalg.norm(raw)
            assert np.array_equal(atom, expected)

    def test_integer_mode_rejects_fractional_grid(self, gauss_reference):
        # 2*8/(4-1) is not a whole number of bands
        with pytest.raises(DataError):
            build_lss(gauss_reference, 4, 8.0, "integer")

    def test_continuous_matches_integer_on_whole_shifts(self,
                                                        gauss_reference):
        di = build_lss(gauss_reference, 5, 8.0, "integer")
        dc = build_lss(gauss_reference, 5, 8.0, "continuous")
        assert np.allclose(di.atoms, dc.atoms, atol=1e-12)

    def test_atom_vanished(self):
        ref = gaussian_line_reference(30, 15, 5.0, 6.0)
        with pytest.raises(DataError, match="vanished"):
            build_lss(ref, 3, 40.0, "integer")

    def test_fig6_coherences(self, gauss_reference):
        # Direct dot-product evaluation of the stated reference gives
        # 0.0262 (3 atoms) and 0.4109 (5 atoms); the figure caption's
        # rounded 0.2 / 0.5 do not follow from its own parameters (see the
        # decisions ledger), so the computed values are frozen here.
        d3 = build_lss(gauss_reference, 3, 8.0, "integer")
        d5 = build_lss(gauss_reference, 5, 8.0, "integer")
        g3 = d3.atoms[1] @ d3.atoms[2]  # consecutive atoms, 8 bands apart
        assert abs(d3.coherence - 0.026175620895397197) < 1e-12
        assert abs(d5.coherence - 0.4108661421044116) < 1e-12
        assert d3.coherence == pytest.approx(
            abs(d3.atoms[0] @ d3.atoms[1]), abs=1e-12)
        assert d5.coherence == pytest.approx(
            abs(d5.atoms[1] @ d5.atoms[2]), abs=1e-12)
        assert d5.coherence > d3.coherence > 0.0
        assert g3 == pytest.approx(autocorrelation(gauss_reference, 8.0),
                                   abs=1e-12)

    def test_coherence_equals_consecutive_pair(self, gauss_reference):
        for m in (3, 5, 9, 15):
            d = build_lss(gauss_reference, m, 7.0, "continuous")
            consecutive = d.atoms[:-1, :] * d.atoms[1:, :]
            assert d.coherence == pytest.approx(consecutive.sum(axis=1).max(),
                                                abs=1e-12)

    def test_coherence_nondecreasing_in_m(self, gauss_reference):
        values = [build_lss(gauss_reference, m, 8.0, "continuous").coherence
                  for m in range(2, 31)]
        assert np.all(np.diff(values) >= -1e-12)

    def test_disjoint_supports_give_zero_coherence(self):
        ref = gaussian_line_reference(200, 100, 2.0, 3.0)
        d = build_lss(ref, 3, 50.0, "integer")
        assert d.coherence == 0.0

    def test_relaxed_gram_check_fires(self):
        values = np.zeros(40)
        values[10] = 1.0
        values[30] = -0.6
        ref = ReferenceAtom(values, center_band=10, allow_negative=True)
        with pytest.raises(DataError, match="non-negativity"):
            build_lss(ref, 3, 20.0, "integer")


class TestAutocorrelation:
    def test_zero_shift_is_one(self, gauss_reference):
        assert autocorrelation(gauss_reference, 0.0) == pytest.approx(
            1.0, abs=1e-12)

    def test_monotone_nonincreasing(self, gauss_reference):
        grid = np.linspace(0.0, 12.0, 49)
        vals = [autocorrelation(gauss_reference, u) for u in grid]
        assert np.all(np.diff(vals) <= 1e-12)

    def test_disjoint_support_is_zero(self):
        ref = gaussian_line_reference(100, 50, 2.0, 3.0)
        assert autocorrelation(ref, 20.0) == 0.0

    def test_bounded(self, gauss_reference, rng):
        for u in rng.uniform(-20, 20, 50):
            assert -1.0 - 1e-12 <= autocorrelation(gauss_reference, u) \
                <= 1.0 + 1e-12

    def test_fallback_interpolant_matches_model_on_grid(self,
                                                        gauss_reference):
        sampled = ReferenceAtom(gauss_reference.values.copy(), 15,
                                model=None)
        for u in (1.0, 3.0, -2.0):
            assert autocorrelation(sampled, u) == pytest.approx(
                autocorrelation(gauss_reference, u), abs=1e-12)


class TestExpectedMaxGain:
    def test_zero_amplitude(self, gauss_reference):
        assert expected_max_gain(gauss_reference, 5, 8.0, 0.0) == 0.0

    def test_dense_grid_approaches_amplitude(self, gauss_reference):
        val = expected_max_gain(gauss_reference, 400, 8.0, 2.7)
        assert val == pytest.approx(2.7, rel=1e-3)

    def test_monotone_in_m_and_saturates(self, gauss_reference):
        vals = [expected_max_gain(gauss_reference, m, 8.0, 2.7)
                for m in range(2, 21)]
        assert np.all(np.diff(vals) > 0)
        assert vals[-1] < 2.7
        assert vals[-1] > 0.97 * 2.7

    def test_against_dense_riemann_oracle(self, gauss_reference):
        m, tau, a = 6, 8.0, 2.7
        half = tau / (m - 1)
        e = np.linspace(0.0, half, 20001)
        gam = np.array([autocorrelation(gauss_reference, u) for u in e])
        oracle = a * np.trapezoid(gam, e) / half
        assert expected_max_gain(gauss_reference, m, tau, a) == pytest.approx(
            oracle, abs=1e-6)


class TestSerialization:
    def test_csv_round_trip_bit_exact(self, gauss_reference, tmp_path):
        d = build_lss(gauss_reference, 15, 7.0, "integer")
        path = tmp_path / "dict.csv"
        d.save_csv(path)
        loaded = Dictionary.load_csv(path)
        assert np.array_equal(loaded.atoms, d.atoms)
        assert np.array_equal(loaded.shifts, d.shifts)
        assert loaded.tau == d.tau
        assert loaded.coherence == d.coherence

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3\n")
        with pytest.raises(DataError):
            Dictionary.load_csv(path)


def test_sampled_line_model_round_trip(gauss_reference):
    model = SampledLineModel.from_reference(gauss_reference)
    grid = np.arange(30.0) - 15
    assert np.allclose(model(grid), gauss_reference.values, atol=1e-15)
    assert model(100.0) == 0.0

import math

import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from shiftdetect.dictionary import build_lss, gaussian_line_reference
from shiftdetect.errors import DataError, NumericError
from shiftdetect.pfabound import (GaussianCorrModel, normal_cdf_2d,
                                  normal_cdf_3d, pfa_bound,
                                  pfa_exact_orthogonal, threshold_for_pfa)


def mc_orthant_2d(h, k, rho, n, rng):
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + math.sqrt(1 - rho * rho) * rng.standard_normal(n)
    return np.count_nonzero((z1 <= h) & (z2 <= k)) / n


def mc_max_alpha(corr, eta, n, rng):
    """Monte-Carlo false-alarm rate of the max statistic for a given score
    correlation matrix."""
    L = np.linalg.cholesky(corr + 1e-12 * np.eye(corr.shape[0]))
    hits = 0
    chunk = 200_000
    done = 0
    while done < n:
        take = min(chunk, n - done)
        z = rng.standard_normal((take, corr.shape[0])) @ L.T
        hits += int(np.count_nonzero(z.max(axis=1) > eta))
        done += take
    return hits / n


class TestNormalCdf2d:
    def test_independence(self):
        assert normal_cdf_2d(0.7, -0.3, 0.0) == pytest.approx(
            float(ndtr(0.7) * ndtr(-0.3)), abs=1e-15)

    def test_comonotone(self):
        assert normal_cdf_2d(0.7, -0.3, 1.0) == pytest.approx(
            float(ndtr(-0.3)), abs=1e-15)

    def test_antithetic(self):
        want = max(0.0, float(ndtr(0.7) + ndtr(-0.3) - 1.0))
        assert normal_cdf_2d(0.7, -0.3, -1.0) == pytest.approx(want,
                                                               abs=1e-15)

    def test_orthant_closed_form(self):
        # P(X<=0, Y<=0) = 1/4 + asin(rho)/(2 pi)
        for rho in (-0.9, -0.5, 0.0, 0.3, 0.5, 0.8, 0.95, 0.999):
            want = 0.25 + math.asin(rho) / (2 * math.pi)
            assert normal_cdf_2d(0.0, 0.0, rho) == pytest.approx(want,
                                                                 abs=1e-12)

    def test_symmetry_and_marginals(self, rng):
        for _ in range(50):
            h, k = rng.uniform(-3, 3, 2)
            rho = float(rng.uniform(-0.99, 0.99))
            assert normal_cdf_2d(h, k, rho) == pytest.approx(
                normal_cdf_2d(k, h, rho), abs=1e-14)
            assert normal_cdf_2d(h, 8.5, rho) == pytest.approx(
                float(ndtr(h)), abs=1e-10)

    def test_against_monte_carlo(self, rng):
        n = 10 ** 6
        for _ in range(10):
            h, k = rng.uniform(-2, 2, 2)
            rho = float(rng.uniform(-0.95, 0.95))
            est = mc_orthant_2d(h, k, rho, n, rng)
            se = math.sqrt(est * (1 - est) / n)
            assert abs(normal_cdf_2d(h, k, rho) - est) < 4 * se + 1e-9

    def test_invalid_rho(self):
        with pytest.raises(DataError):
            normal_cdf_2d(0.0, 0.0, 1.5)


class TestNormalCdf3d:
    def test_independence(self):
        got = normal_cdf_3d(0.5, -0.2, 1.1, 0.0, 0.0, 0.0)
        want = float(ndtr(0.5) * ndtr(-0.2) * ndtr(1.1))
        assert got == pytest.approx(want, abs=1e-14)

    def test_orthant_closed_form(self):
        # P(all <= 0) = 1/8 + (asin r12 + asin r13 + asin r23)/(4 pi)
        cases = [(0.5, 0.3, 0.2), (0.9, 0.7, 0.6), (-0.4, 0.2, -0.3),
                 (0.96, 0.85, 0.96), (0.6, 0.6, 0.6)]
        for r12, r13, r23 in cases:
            want = 0.125 + (math.asin(r12) + math.asin(r13)
                            + math.asin(r23)) / (4 * math.pi)
            got = normal_cdf_3d(0, 0, 0, r12, r13, r23)
            assert got == pytest.approx(want, abs=1e-10)

    def test_degenerate_pair_reduces_to_bivariate(self):
        # rho12 = 1 collapses X1 and X2
        got = normal_cdf_3d(0.4, 1.0, -0.2, 1.0, 0.5, 0.5)
        want = normal_cdf_2d(0.4, -0.2, 0.5)
        assert got == pytest.approx(want, abs=1e-12)

    def test_conditional_quadrature_oracle(self, rng):
        # independent reduction: integrate the conditional bivariate CDF
        # over the first coordinate with adaptive quadrature
        from scipy.integrate import quad
        from scipy.stats import norm

        def oracle(b1, b2, b3, r12, r13, r23):
            s12, s13 = math.sqrt(1 - r12 ** 2), math.sqrt(1 - r13 ** 2)
            rc = (r23 - r12 * r13) / (s12 * s13)
            val, _ = quad(lambda x: norm.pdf(x) * normal_cdf_2d(
                (b2 - r12 * x) / s12, (b3 - r13 * x) / s13, rc),
                -9.0, b1, epsabs=1e-12, epsrel=1e-12, limit=300)
            return val

        for _ in range(12):
            while True:
                r = rng.uniform(-0.9, 0.9, 3)
                corr = np.array([[1, r[0], r[1]],
                                 [r[0], 1, r[2]],
                                 [r[1], r[2], 1]])
                if np.linalg.eigvalsh(corr)[0] > 0.01:
                    break
            b = rng.uniform(-2.5, 2.5, 3)
            got = normal_cdf_3d(*b, *r)
            assert got == pytest.approx(oracle(*b, *r), abs=1e-9)

    def test_non_psd_rejected(self):
        with pytest.raises(DataError, match="non-PSD"):
            normal_cdf_3d(0, 0, 0, 0.9, 0.9, -0.9)


class TestPfaExactOrthogonal:
    def test_single_atom(self):
        eta = float(ndtri(0.95))
        assert pfa_exact_orthogonal(1, eta) == pytest.approx(0.05, abs=1e-12)

    def test_two_atoms_at_zero(self):
        assert pfa_exact_orthogonal(2, 0.0) == pytest.approx(0.75, abs=1e-14)

    def test_m15_against_monte_carlo(self, rng):
        eta, m, n = 2.0, 15, 10 ** 6
        want = 1.0 - float(ndtr(eta)) ** m
        assert pfa_exact_orthogonal(m, eta) == pytest.approx(want, rel=1e-12)
        est = mc_max_alpha(np.eye(m), eta, n, rng)
        se = math.sqrt(est * (1 - est) / n)
        assert abs(pfa_exact_orthogonal(m, eta) - est) < 4 * se


class TestGaussianCorrModel:
    def test_from_dictionary(self, line_dictionary):
        model = GaussianCorrModel.from_dictionary(line_dictionary)
        m = line_dictionary.m
        assert model.corr.shape == (m, m)
        assert np.allclose(np.diag(model.corr), 1.0, atol=1e-12)

    def test_rejects_negative_entries(self):
        corr = np.array([[1.0, -0.3], [-0.3, 1.0]])
        with pytest.raises(DataError):
            GaussianCorrModel(corr)


class TestPfaBound:
    def test_orthogonal_reduction_exact(self):
        ref = gaussian_line_reference(200, 100, 2.0, 3.0)
        d = build_lss(ref, 11, 31.0, "continuous")
        assert d.coherence == 0.0
        for eta in (0.5, 1.5, 2.5):
            assert pfa_bound(d, eta) == pytest.approx(
                pfa_exact_orthogonal(11, eta), abs=1e-7)

    def test_single_atom_delegates(self, gauss_reference):
        d = build_lss(gauss_reference, 1, 0.0)
        assert pfa_bound(d, 1.3) == pfa_exact_orthogonal(1, 1.3)

    def test_dominates_monte_carlo(self, gauss_reference, rng):
        for m, tau, eta in [(15, 7.0, 2.0), (10, 8.0, 2.4), (20, 8.0, 1.6)]:
            mode = "integer" if (2 * tau) % (m - 1) == 0 else "continuous"
            d = build_lss(gauss_reference, m, tau, mode)
            est = mc_max_alpha(d.gram(), eta, 10 ** 6, rng)
            se = math.sqrt(est * (1 - est) / 10 ** 6)
            for neighbors in ("flanking", "one_sided"):
                bound = pfa_bound(d, eta, neighbors=neighbors)
                assert bound >= est - 3 * se

    def test_recursion_value_nonincreasing_in_m(self, gauss_reference):
        eta = 2.0
        vals = [1.0 - pfa_bound(build_lss(gauss_reference, m, 8.0,
                                          "continuous"), eta)
                for m in range(2, 21)]
        assert np.all(np.diff(vals) <= 1e-12)

    def test_slepian_ordering_monte_carlo(self, gauss_reference, rng):
        # denser grids have larger orthant probability at matched
        # thresholds: P(max of (m+1)-grid's upper block <= t) >=
        # P(max of m-grid <= t)
        t = 2.0
        n = 10 ** 6
        for m in (3, 4):
            d_small = build_lss(gauss_reference, m, 8.0, "continuous")
            d_big = build_lss(gauss_reference, m + 1, 8.0, "continuous")
            sub = d_big.gram()[1:, 1:]
            p_small = 1.0 - mc_max_alpha(d_small.gram(), t, n, rng)
            p_big = 1.0 - mc_max_alpha(sub, t, n, rng)
            se = math.sqrt(0.25 / n)
            assert p_big >= p_small - 4 * se

    def test_requires_reference(self, line_dictionary, tmp_path):
        from shiftdetect.dictionary import Dictionary
        path = tmp_path / "d.csv"
        line_dictionary.save_csv(path)
        loaded = Dictionary.load_csv(path)
        with pytest.raises(DataError, match="reference"):
            pfa_bound(loaded, 2.0)

    def test_rejects_nonmonotone_autocorrelation(self):
        # two bumps: the overlap curve rises again at the bump separation
        values = np.zeros(60)
        values[20] = 1.0
        values[40] = 1.0
        from shiftdetect.dictionary import ReferenceAtom
        ref = ReferenceAtom(values, center_band=20)
        d = build_lss(ref, 3, 10.0, "integer")
        with pytest.raises(NumericError):
            pfa_bound(d, 2.0)


class TestThresholdForPfa:
    def test_single_atom_closed_form(self, gauss_reference):
        d = build_lss(gauss_reference, 1, 0.0)
        assert threshold_for_pfa(d, 0.05) == pytest.approx(
            float(ndtri(0.95)), abs=1e-9)

    def test_orthogonal_closed_form(self):
        ref = gaussian_line_reference(200, 100, 2.0, 3.0)
        d = build_lss(ref, 7, 30.0, "continuous")
        want = float(ndtri((1 - 0.05) ** (1 / 7)))
        assert threshold_for_pfa(d, 0.05) == pytest.approx(want, abs=1e-7)

    def test_round_trip_with_bound(self, gauss_reference):
        d = build_lss(gauss_reference, 8, 7.0, "continuous")
        eta = threshold_for_pfa(d, 0.1)
        assert pfa_bound(d, eta) == pytest.approx(0.1, abs=1e-7)

    def test_lss_threshold_grows_slower_than_orthogonal(self,
                                                        gauss_reference):
        etas = {m: threshold_for_pfa(build_lss(gauss_reference, m, 8.0,
                                               "continuous"), 0.05)
                for m in (10, 20)}
        orth = {m: float(ndtri(0.95 ** (1 / m))) for m in (10, 20)}
        assert etas[20] - etas[10] < orth[20] - orth[10]

    def test_alpha_validation(self, line_dictionary):
        with pytest.raises(DataError):
            threshold_for_pfa(line_dictionary, 0.0)

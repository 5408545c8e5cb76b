import csv

import numpy as np
import pytest

from covert_isac.beampattern import (
    CovariancePair,
    beampattern_gain,
    cross_correlation,
    desired_pattern,
    local_maxima,
    make_grid,
    mse,
    objective,
    optimal_eta,
    steering_vector,
    write_beampattern_csv,
)
from covert_isac.scenario import SystemConfig

from conftest import crandn, random_psd


class TestSteeringVector:
    def test_broadside_all_ones(self):
        np.testing.assert_allclose(steering_vector(0.0, 8, 0.5), np.ones(8), atol=1e-15)

    def test_endfire_two_elements(self):
        np.testing.assert_allclose(steering_vector(90.0, 2, 0.5), [1.0, -1.0], atol=1e-12)

    def test_thirty_degrees_phase_progression(self):
        # Independent construction: per-element phase pi*k*0.5, assembled as a
        # DFT-style exponential ramp.
        a = steering_vector(30.0, 10, 0.5)
        ramp = np.exp(1j * np.pi * np.arange(10) * 0.5)
        np.testing.assert_allclose(a, ramp, atol=1e-12)
        dft_style = np.exp(1j * 2 * np.pi * 0.5 * np.sin(np.pi / 6) * np.arange(10))
        np.testing.assert_allclose(a, dft_style, atol=1e-12)

    def test_unit_modulus_and_first_entry(self):
        a = steering_vector(-37.3, 16, 0.5)
        np.testing.assert_allclose(np.abs(a), np.ones(16), atol=1e-13)
        assert a[0] == pytest.approx(1.0)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            steering_vector(91.0, 4, 0.5)


class TestGrid:
    def test_midpoint_layout(self, default_cfg):
        grid = make_grid(default_cfg)
        assert grid.size == 180
        assert grid.thetas_deg[0] == pytest.approx(-89.5)
        assert grid.thetas_deg[-1] == pytest.approx(89.5)
        assert np.all(np.abs(grid.thetas_deg) < 90.0)

    def test_desired_closed_interval(self):
        thetas = np.array([-50.0, -45.0, -40.0, -39.9, 0.0, 20.0, 25.0, 25.1])
        d = desired_pattern(thetas, (-45.0, 20.0), 10.0)
        np.testing.assert_array_equal(d, [1, 1, 1, 0, 0, 1, 1, 0])

    def test_desired_counts(self, default_cfg):
        grid = make_grid(default_cfg)
        # Four 10-degree windows on a 1-degree grid of cell midpoints.
        assert grid.desired.sum() == 40

    def test_no_targets_all_zero(self):
        cfg = SystemConfig(target_angles=(), n_angles=12)
        grid = make_grid(cfg)
        assert grid.desired.sum() == 0


class TestGain:
    def test_identity_gain_is_n(self, default_cfg):
        grid = make_grid(default_cfg)
        pair = CovariancePair(w1=np.eye(10, dtype=complex),
                              t=np.zeros((10, 10), dtype=complex))
        np.testing.assert_allclose(beampattern_gain(pair, grid), np.full(180, 10.0),
                                   rtol=1e-12)

    def test_rank_one_peak_is_n_squared(self, default_cfg):
        grid = make_grid(default_cfg)
        a0 = grid.steering[37]
        pair = CovariancePair(w1=np.outer(a0, a0.conj()),
                              t=np.zeros((10, 10), dtype=complex))
        gains = beampattern_gain(pair, grid)
        assert gains[37] == pytest.approx(100.0, rel=1e-12)

    def test_matches_eigendecomposition_path(self, default_cfg):
        grid = make_grid(default_cfg)
        rng = np.random.default_rng(0)
        pair = CovariancePair(w1=random_psd(rng, 10), t=random_psd(rng, 10))
        gains = beampattern_gain(pair, grid)
        vals, vecs = np.linalg.eigh(pair.total())
        alt = sum(vals[i] * np.abs(grid.steering @ vecs[:, i].conj()) ** 2
                  for i in range(10))
        np.testing.assert_allclose(gains, alt, rtol=1e-10)

    def test_gain_linearity(self, default_cfg):
        grid = make_grid(default_cfg)
        rng = np.random.default_rng(1)
        w1, t = random_psd(rng, 10), random_psd(rng, 10)
        zero = np.zeros((10, 10), dtype=complex)
        both = beampattern_gain(CovariancePair(w1=w1, t=t), grid)
        only_w = beampattern_gain(CovariancePair(w1=w1, t=zero), grid)
        only_t = beampattern_gain(CovariancePair(w1=zero, t=t), grid)
        np.testing.assert_allclose(both, only_w + only_t, rtol=1e-10, atol=1e-12)

    def test_psd_inputs_nonnegative_gains(self, default_cfg):
        grid = make_grid(default_cfg)
        rng = np.random.default_rng(2)
        for _ in range(1000):
            pair = CovariancePair(w1=random_psd(rng, 10, scale=rng.uniform(0.1, 10)),
                                  t=random_psd(rng, 10, scale=rng.uniform(0.1, 10)))
            gains = beampattern_gain(pair, grid)
            assert gains.min() >= -1e-8 * np.trace(pair.total()).real

    def test_dimension_mismatch(self, default_cfg):
        grid = make_grid(default_cfg)
        pair = CovariancePair(w1=np.eye(4, dtype=complex), t=np.zeros((4, 4), dtype=complex))
        with pytest.raises(ValueError, match="mismatch"):
            beampattern_gain(pair, grid)


class TestMse:
    def test_exact_fit_zero(self, default_cfg):
        grid = make_grid(default_cfg)
        # Diagonal covariance gives flat gain c*n; desired==1 everywhere would
        # be needed for an exact fit, so build one from the gain itself.
        rng = np.random.default_rng(3)
        pair = CovariancePair(w1=random_psd(rng, 10), t=random_psd(rng, 10), eta=1.0)
        gains = beampattern_gain(pair, grid)
        fitted = SystemConfig()  # noqa: F841  (grid reused; desired replaced below)
        grid2 = type(grid)(thetas_deg=grid.thetas_deg, steering=grid.steering,
                           desired=gains.copy(), spacing_ratio=grid.spacing_ratio,
                           target_angles=grid.target_angles)
        assert mse(pair, grid2) == pytest.approx(0.0, abs=1e-18)

    def test_all_zero_case(self, default_cfg):
        grid = make_grid(default_cfg)
        zero = np.zeros((10, 10), dtype=complex)
        assert mse(CovariancePair(w1=zero, t=zero, eta=0.0), grid) == 0.0

    def test_brute_force_oracle(self, default_cfg):
        grid = make_grid(default_cfg)
        rng = np.random.default_rng(4)
        pair = CovariancePair(w1=random_psd(rng, 10), t=random_psd(rng, 10), eta=7.5)
        total = pair.total()
        acc = 0.0
        for s in range(grid.size):
            a = grid.steering[s]
            gain = np.real(a.conj() @ total @ a)
            acc += (7.5 * grid.desired[s] - gain) ** 2
        assert mse(pair, grid) == pytest.approx(acc / grid.size, rel=1e-12)
        assert mse(pair, grid) > 0

    def test_permutation_invariance(self, default_cfg):
        grid = make_grid(default_cfg)
        rng = np.random.default_rng(5)
        pair = CovariancePair(w1=random_psd(rng, 10), t=random_psd(rng, 10), eta=3.0)
        perm = rng.permutation(grid.size)
        shuffled = type(grid)(thetas_deg=grid.thetas_deg[perm],
                              steering=grid.steering[perm],
                              desired=grid.desired[perm],
                              spacing_ratio=grid.spacing_ratio,
                              target_angles=grid.target_angles)
        assert mse(pair, shuffled) == pytest.approx(mse(pair, grid), rel=1e-12)


class TestCrossCorrelation:
    def test_zero_matrix(self):
        zero = np.zeros((4, 4), dtype=complex)
        pair = CovariancePair(w1=zero, t=zero)
        assert cross_correlation(pair, (-45.0, 20.0), 0.5) == 0.0

    def test_orthogonal_pair_identity(self):
        # For two elements at half-wavelength spacing, broadside and endfire
        # steering vectors are orthogonal, so identity covariance decouples.
        pair = CovariancePair(w1=np.eye(2, dtype=complex), t=np.zeros((2, 2), dtype=complex))
        assert cross_correlation(pair, (0.0, 90.0), 0.5) == pytest.approx(0.0, abs=1e-20)

    def test_fewer_than_two_targets(self):
        pair = CovariancePair(w1=np.eye(3, dtype=complex), t=np.zeros((3, 3), dtype=complex))
        assert cross_correlation(pair, (10.0,), 0.5) == 0.0
        assert cross_correlation(pair, (), 0.5) == 0.0

    def test_double_loop_oracle(self):
        rng = np.random.default_rng(6)
        pair = CovariancePair(w1=random_psd(rng, 10), t=random_psd(rng, 10))
        targets = (-45.0, -20.0, 20.0, 45.0)
        total = pair.total()
        vecs = [steering_vector(t, 10, 0.5) for t in targets]
        acc = 0.0
        for p in range(4):
            for q in range(p + 1, 4):
                acc += np.abs(vecs[p].conj() @ total @ vecs[q]) ** 2
        expected = 2.0 / (16 - 4) * acc
        assert cross_correlation(pair, targets, 0.5) == pytest.approx(expected, rel=1e-12)


class TestObjective:
    def test_weight_zero_is_mse(self, default_cfg):
        grid = make_grid(default_cfg)
        rng = np.random.default_rng(7)
        pair = CovariancePair(w1=random_psd(rng, 10), t=random_psd(rng, 10), eta=2.0)
        assert objective(pair, grid, grid.target_angles, 0.0) == pytest.approx(
            mse(pair, grid), rel=1e-12)

    def test_unit_weight_sum(self, default_cfg):
        grid = make_grid(default_cfg)
        rng = np.random.default_rng(8)
        pair = CovariancePair(w1=random_psd(rng, 10), t=random_psd(rng, 10), eta=2.0)
        expected = mse(pair, grid) + cross_correlation(pair, grid.target_angles, 0.5)
        assert objective(pair, grid, grid.target_angles, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_weight_linearity(self, default_cfg):
        grid = make_grid(default_cfg)
        rng = np.random.default_rng(9)
        pair = CovariancePair(w1=random_psd(rng, 10), t=random_psd(rng, 10), eta=2.0)
        diff = (objective(pair, grid, grid.target_angles, 2.0)
                - objective(pair, grid, grid.target_angles, 1.0))
        assert diff == pytest.approx(cross_correlation(pair, grid.target_angles, 0.5), rel=1e-10)


class TestOptimalEta:
    def test_exact_fit_recovers_scale(self, default_cfg):
        grid = make_grid(default_cfg)
        # Build a gain proportional to the desired pattern via a diagonal trick:
        # impossible with a covariance, so check through the formula instead.
        rng = np.random.default_rng(10)
        pair = CovariancePair(w1=random_psd(rng, 10), t=random_psd(rng, 10))
        gains = beampattern_gain(pair, grid)
        c = 4.2
        grid2 = type(grid)(thetas_deg=grid.thetas_deg, steering=grid.steering,
                           desired=gains / c, spacing_ratio=grid.spacing_ratio,
                           target_angles=grid.target_angles)
        eta = optimal_eta(pair, grid2)
        assert eta == pytest.approx(c, rel=1e-12)
        assert mse(CovariancePair(pair.w1, pair.t, eta), grid2) == pytest.approx(0.0, abs=1e-16)

    def test_zero_gains_zero_eta(self, default_cfg):
        grid = make_grid(default_cfg)
        zero = np.zeros((10, 10), dtype=complex)
        assert optimal_eta(CovariancePair(w1=zero, t=zero), grid) == 0.0

    def test_local_perturbation_optimality(self, default_cfg):
        grid = make_grid(default_cfg)
        rng = np.random.default_rng(11)
        pair = CovariancePair(w1=random_psd(rng, 10), t=random_psd(rng, 10))
        eta = optimal_eta(pair, grid)
        best = mse(CovariancePair(pair.w1, pair.t, eta), grid)
        for delta in (-0.01, 0.01):
            assert best <= mse(CovariancePair(pair.w1, pair.t, eta + delta), grid)

    def test_all_zero_desired_rejected(self):
        cfg = SystemConfig(target_angles=(), n_angles=16)
        grid = make_grid(cfg)
        pair = CovariancePair(w1=np.eye(10, dtype=complex), t=np.zeros((10, 10), dtype=complex))
        with pytest.raises(ValueError, match="eta"):
            optimal_eta(pair, grid)


class TestCsvExport:
    def test_columns_and_additivity(self, default_cfg, tmp_path):
        grid = make_grid(default_cfg)
        rng = np.random.default_rng(12)
        pair = CovariancePair(w1=random_psd(rng, 10), t=random_psd(rng, 10), eta=1.0)
        path = tmp_path / "pattern.csv"
        write_beampattern_csv(pair, grid, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["theta_deg", "desired", "gain_total", "gain_info", "gain_dfan"]
        assert len(rows) == 181
        for row in rows[1:]:
            total, info, dfan = float(row[2]), float(row[3]), float(row[4])
            assert total == pytest.approx(info + dfan, rel=1e-12, abs=1e-15)

    def test_zero_design_all_zero_gains(self, default_cfg, tmp_path):
        grid = make_grid(default_cfg)
        zero = np.zeros((10, 10), dtype=complex)
        path = tmp_path / "pattern.csv"
        write_beampattern_csv(CovariancePair(w1=zero, t=zero), grid, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        assert all(float(r[2]) == 0.0 for r in rows)


class TestLocalMaxima:
    def test_simple_peaks(self):
        v = np.array([0.0, 1.0, 0.5, 2.0, 1.9, 1.95, 0.1])
        idx = local_maxima(v)
        assert 1 in idx and 3 in idx and 5 in idx

    def test_endpoints_count_and_plateau_interiors_do_not(self):
        np.testing.assert_array_equal(local_maxima(np.ones(5)), [0, 4])
        idx = local_maxima(np.array([0.0, 1.0, 1.0, 1.0, 0.0]))
        np.testing.assert_array_equal(idx, [1, 3])

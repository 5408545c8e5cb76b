"""Steering vectors, desired beampattern, and the sensing performance metric.

The transmit power radiated toward angle theta by a zero-mean signal with
covariance M is a(theta)^H M a(theta), where a is the uniform-linear-array
steering vector.  The design metric is the mean squared error between that
gain and a scaled square-wave template peaked at the target directions, plus
a weighted cross-correlation term over target pairs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .scenario import SystemConfig

GAIN_IMAG_TOL = 1e-10


def steering_vector(theta_deg: float, n: int, spacing_ratio: float) -> np.ndarray:
    """ULA steering vector: entry k = exp(j*2*pi*k*spacing_ratio*sin(theta)).

    ``theta_deg`` is measured from broadside in degrees and must lie in
    [-90, 90]; the first entry is always 1.
    """
    theta_deg = float(theta_deg)
    if not -90.0 <= theta_deg <= 90.0:
        raise ValueError(f"theta must lie in [-90, 90] degrees, got {theta_deg}")
    k = np.arange(n)
    return np.exp(1j * 2.0 * np.pi * k * spacing_ratio * np.sin(np.deg2rad(theta_deg)))


@dataclass(frozen=True, eq=False)
class SteeringGrid:
    """Sampled angles with their steering vectors and the desired pattern.

    ``desired[s]`` is 1 exactly when angle s lies within delta_theta/2 of
    some target (closed interval), else 0.
    """

    thetas_deg: np.ndarray          # (S,)
    steering: np.ndarray            # (S, n) complex, rows a(theta_s)
    desired: np.ndarray             # (S,) floats in {0, 1}
    spacing_ratio: float
    target_angles: tuple[float, ...]

    @property
    def n(self) -> int:
        return self.steering.shape[1]

    @property
    def size(self) -> int:
        return self.thetas_deg.shape[0]

    def target_steering(self) -> np.ndarray:
        """(M, n) steering vectors at the target angles."""
        return np.stack([steering_vector(t, self.n, self.spacing_ratio)
                         for t in self.target_angles])


def make_grid(cfg: SystemConfig) -> SteeringGrid:
    """Uniform grid of cfg.n_angles cell midpoints over [-90, 90] degrees.

    Midpoints keep the grid symmetric and avoid samples exactly at the
    endfire angles.
    """
    s = cfg.n_angles
    thetas = -90.0 + (np.arange(1, s + 1) - 0.5) * (180.0 / s)
    steering = np.stack([steering_vector(t, cfg.n, cfg.spacing_ratio) for t in thetas])
    desired = desired_pattern(thetas, cfg.target_angles, cfg.delta_theta)
    return SteeringGrid(thetas_deg=thetas, steering=steering, desired=desired,
                        spacing_ratio=cfg.spacing_ratio,
                        target_angles=tuple(cfg.target_angles))


def desired_pattern(thetas_deg: np.ndarray, target_angles, delta_theta: float) -> np.ndarray:
    """Square-wave template: 1 within delta_theta/2 of a target (closed), else 0."""
    thetas_deg = np.asarray(thetas_deg, dtype=float)
    if len(target_angles) == 0:
        return np.zeros_like(thetas_deg)
    dist = np.abs(thetas_deg[:, None] - np.asarray(target_angles, dtype=float)[None, :])
    return (dist.min(axis=1) <= delta_theta / 2.0).astype(float)


@dataclass(frozen=True, eq=False)
class CovariancePair:
    """Information covariance w1, noise covariance t, and the template scale eta."""

    w1: np.ndarray
    t: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        for name, m in (("w1", self.w1), ("t", self.t)):
            m = np.asarray(m)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"{name} must be square, got shape {m.shape}")
            scale = max(1.0, float(np.abs(m).max()))
            if np.abs(m - m.conj().T).max() > 1e-10 * scale:
                raise ValueError(f"{name} is not Hermitian within tolerance")
            trace = float(np.trace(m).real)
            eigmin = float(np.linalg.eigvalsh((m + m.conj().T) / 2).min())
            if eigmin < -1e-8 * max(trace, 1e-300):
                raise ValueError(f"{name} has eigenvalue {eigmin:.3e} below the PSD tolerance")
        if self.w1.shape != self.t.shape:
            raise ValueError("w1 and t must have the same dimension")

    @property
    def n(self) -> int:
        return self.w1.shape[0]

    def total(self) -> np.ndarray:
        return self.w1 + self.t


def _quad_gains(matrix: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Real quadratic forms v^H M v for each row v of ``vectors``."""
    m = np.asarray(matrix)
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.conj().T).max() > GAIN_IMAG_TOL * scale:
        raise ValueError("covariance must be Hermitian within 1e-10")
    herm = (m + m.conj().T) / 2.0
    values = np.einsum("sn,nm,sm->s", vectors.conj(), herm, vectors)
    if np.abs(values.imag).max() > GAIN_IMAG_TOL * max(1.0, np.abs(values.real).max()):
        raise ValueError("quadratic form has unexpectedly large imaginary residue")
    return values.real


def beampattern_gain(pair: CovariancePair, grid: SteeringGrid) -> np.ndarray:
    """Transmit power per grid angle: a^H (w1 + t) a, guaranteed real."""
    if pair.n != grid.n:
        raise ValueError(f"dimension mismatch: pair has n={pair.n}, grid has n={grid.n}")
    return _quad_gains(pair.total(), grid.steering)


def mse(pair: CovariancePair, grid: SteeringGrid) -> float:
    """Mean squared error between eta-scaled template and the realized gain."""
    gains = beampattern_gain(pair, grid)
    return float(np.mean((pair.eta * grid.desired - gains) ** 2))


def cross_correlation(pair: CovariancePair, target_angles, spacing_ratio: float) -> float:
    """Mean squared inter-target correlation (2/(M^2-M)) * sum_{p<q} |a_p^H M a_q|^2.

    Returns 0 for fewer than two targets by convention.
    """
    m_targets = len(target_angles)
    if m_targets < 2:
        return 0.0
    total = pair.total()
    vecs = np.stack([steering_vector(t, pair.n, spacing_ratio) for t in target_angles])
    z = vecs.conj() @ total @ vecs.T
    iu = np.triu_indices(m_targets, k=1)
    return float(2.0 / (m_targets**2 - m_targets) * np.sum(np.abs(z[iu]) ** 2))


def objective(pair: CovariancePair, grid: SteeringGrid, target_angles, w_c: float) -> float:
    """Weighted sensing metric: mse + w_c * cross_correlation."""
    return mse(pair, grid) + w_c * cross_correlation(pair, target_angles, grid.spacing_ratio)


def optimal_eta(pair: CovariancePair, grid: SteeringGrid) -> float:
    """Least-squares template scale for fixed covariances.

    Minimizes the mse over eta alone; used as an oracle against the solver's
    jointly-optimized scale.  Raises when the desired pattern is identically
    zero (the scale is undefined there).
    """
    denom = float(np.sum(grid.desired**2))
    if denom == 0.0:
        raise ValueError("optimal eta is undefined for an all-zero desired pattern")
    gains = beampattern_gain(pair, grid)
    return float(np.sum(grid.desired * gains) / denom)


def write_beampattern_csv(pair: CovariancePair, grid: SteeringGrid, path) -> None:
    """Export per-angle desired/total/information/noise gains.

    Columns: theta_deg, desired, gain_total, gain_info, gain_dfan.  Full
    precision so downstream plotting is lossless.
    """
    gain_info = _quad_gains(pair.w1, grid.steering)
    gain_dfan = _quad_gains(pair.t, grid.steering)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta_deg", "desired", "gain_total", "gain_info", "gain_dfan"])
        for i in range(grid.size):
            writer.writerow([
                f"{grid.thetas_deg[i]:.17g}",
                f"{grid.desired[i]:.17g}",
                f"{gain_info[i] + gain_dfan[i]:.17g}",
                f"{gain_info[i]:.17g}",
                f"{gain_dfan[i]:.17g}",
            ])


def local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of local maxima of a 1-D sequence.

    Plateau edges adjacent to a strictly smaller neighbor count; endpoints
    compare against minus infinity on the open side.
    """
    v = np.asarray(values, dtype=float)
    idx = []
    for i in range(len(v)):
        left = v[i - 1] if i > 0 else -np.inf
        right = v[i + 1] if i < len(v) - 1 else -np.inf
        if v[i] >= left and v[i] >= right and (v[i] > left or v[i] > right):
            idx.append(i)
    return np.asarray(idx, dtype=int)

"""Closed-form detection performance of the power-threshold warden.

The warden observes the long-run average received power and compares it to a
threshold.  Under the noise-cover scheme the received power carries a
uniformly distributed noise-power term, which makes false-alarm and
miss-detection probabilities piecewise closed forms.  This module evaluates
those forms exactly (branch breakpoints placed where the probabilities
actually saturate, so every value lies in [0, 1]), locates the warden's
optimal threshold, averages the minimum detection error probability over the
unknown channel statistics, and ships Monte Carlo and quadrature oracles for
all of it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .scenario import (
    BoundedWcsi,
    ChannelSet,
    GaussianWcsi,
    InstantaneousWcsi,
    StatisticalWcsi,
    SystemConfig,
    _crandn,
    _psd_sqrt,
    rng_stream,
)

__all__ = [
    "BoundedDepInputs", "StatisticalDepParams", "DetectionResult", "MonteCarloDep",
    "pfa_bounded", "pmd_bounded", "dep_bounded", "min_dep_bounded",
    "pfa_statistical", "pmd_statistical", "dep_statistical",
    "min_dep_statistical_conditional", "avg_min_dep_statistical",
    "avg_dep_tau", "avg_dep_tau_or_zero", "avg_dep_tau_derivative",
    "solve_tau_epsilon", "avg_min_dep_instantaneous", "instantaneous_power_bound",
    "grid_search_gamma", "monte_carlo_dep",
    "mc_rates_bounded", "mc_rates_statistical",
    "mc_avg_min_dep_statistical", "mc_avg_min_dep_instantaneous",
    "quadrature_avg_min_dep_statistical",
]


@dataclass(frozen=True)
class BoundedDepInputs:
    """Scalars of the known-channel detection problem.

    rho1 is the noise-cover power at the warden per watt of transmitted cover
    power; rho2 is the received covert-signal power.
    """

    rho1: float
    rho2: float
    sigma_w2: float
    p_a_min: float
    p_a_max: float

    def __post_init__(self):
        if self.rho1 <= 0:
            raise ValueError(f"rho1 must be positive, got {self.rho1}")
        if self.rho2 < 0:
            raise ValueError(f"rho2 must be >= 0, got {self.rho2}")
        if not 0 < self.p_a_min < self.p_a_max:
            raise ValueError("require 0 < p_a_min < p_a_max")
        if self.sigma_w2 < 0:
            raise ValueError("sigma_w2 must be >= 0")

    @property
    def delta1(self) -> float:
        """Largest quiet-hypothesis power: p_a_max*rho1 + sigma_w2."""
        return self.p_a_max * self.rho1 + self.sigma_w2

    @property
    def delta2(self) -> float:
        """Smallest transmit-hypothesis power before the cover floor: rho2 + sigma_w2."""
        return self.rho2 + self.sigma_w2

    @property
    def delta3(self) -> float:
        """Largest transmit-hypothesis power: p_a_max*rho1 + rho2 + sigma_w2."""
        return self.p_a_max * self.rho1 + self.rho2 + self.sigma_w2

    @property
    def span(self) -> float:
        return (self.p_a_max - self.p_a_min) * self.rho1


@dataclass(frozen=True)
class DetectionResult:
    """Optimal threshold, minimum detection error, and feasibility flag."""

    gamma_star: float
    xi_star: float
    covert_feasible: bool
    curves: Optional[np.ndarray] = None  # rows (gamma, pfa, pmd, xi)


def pfa_bounded(inp: BoundedDepInputs, gamma) -> np.ndarray | float:
    """Exact false-alarm probability Pr(P_A*rho1 + sigma_w2 > gamma).

    Equals 1 below sigma_w2 + p_a_min*rho1, 0 above delta1, and is linear in
    between.  Accepts scalar or array thresholds.
    """
    gamma = np.asarray(gamma, dtype=float)
    lo = inp.sigma_w2 + inp.p_a_min * inp.rho1
    out = 1.0 - (gamma - lo) / inp.span
    return _clip01(out)


def pmd_bounded(inp: BoundedDepInputs, gamma) -> np.ndarray | float:
    """Exact miss-detection probability Pr(P_A*rho1 + rho2 + sigma_w2 < gamma).

    Zero up to rho2 + sigma_w2 + p_a_min*rho1, one from delta3 on, linear in
    between.
    """
    gamma = np.asarray(gamma, dtype=float)
    lo = inp.rho2 + inp.sigma_w2 + inp.p_a_min * inp.rho1
    return _clip01((gamma - lo) / inp.span)


def dep_bounded(inp: BoundedDepInputs, gamma) -> np.ndarray | float:
    """Detection error probability: false alarm plus miss detection."""
    return pfa_bounded(inp, gamma) + pmd_bounded(inp, gamma)


def min_dep_bounded(inp: BoundedDepInputs, curves: int = 0) -> DetectionResult:
    """Warden-optimal threshold and the resulting minimum detection error.

    The error curve is flat and minimal between rho2 + sigma_w2 + p_a_min*rho1
    and delta1; the midpoint of that interval is reported.  When the covert
    power exceeds the cover-power span the minimum is 0 and covert operation
    is infeasible.
    """
    ratio = inp.rho2 / inp.span
    xi_star = float(np.clip(1.0 - ratio, 0.0, 1.0))
    lo = inp.rho2 + inp.sigma_w2 + inp.p_a_min * inp.rho1
    gamma_star = 0.5 * (lo + inp.delta1)
    table = None
    if curves:
        gammas = np.linspace(0.5 * inp.sigma_w2, 1.1 * inp.delta3, curves)
        table = np.column_stack([gammas, pfa_bounded(inp, gammas),
                                 pmd_bounded(inp, gammas), dep_bounded(inp, gammas)])
    return DetectionResult(gamma_star=gamma_star, xi_star=xi_star,
                           covert_feasible=xi_star > 0.0, curves=table)


# ---------------------------------------------------------------------------
# Statistical warden channel


@dataclass(frozen=True)
class StatisticalDepParams:
    """Conditional and distributional scalars when only channel statistics are known.

    t_a is the realized per-watt cover power at the warden; the covert-signal
    power there is exponential with mean lambda_w1; t_a itself is exponential
    with mean lambda_a across channel draws.
    """

    t_a: float
    lambda_w1: float
    lambda_a: float
    sigma_w2: float
    p_a_min: float
    p_a_max: float

    def __post_init__(self):
        if self.t_a < 0:
            raise ValueError("t_a must be >= 0")
        if self.lambda_w1 < 0 or self.lambda_a <= 0:
            raise ValueError("lambda_w1 must be >= 0 and lambda_a > 0")
        if not 0 < self.p_a_min < self.p_a_max:
            raise ValueError("require 0 < p_a_min < p_a_max")
        if self.sigma_w2 < 0:
            raise ValueError("sigma_w2 must be >= 0")

    @property
    def delta_a(self) -> float:
        return self.p_a_max * self.t_a + self.sigma_w2

    @property
    def p_alpha(self) -> float:
        return (self.p_a_max - self.p_a_min) * self.t_a

    @property
    def p_beta(self) -> float:
        return self.p_a_min / (self.p_a_max - self.p_a_min)

    @property
    def pi_ratio(self) -> float:
        return self.p_a_max / self.p_a_min

    @property
    def nu(self) -> float:
        return self.lambda_w1 / ((self.p_a_max - self.p_a_min) * self.lambda_a)

    @property
    def mu(self) -> float:
        return self.lambda_w1 / (self.p_a_max * self.lambda_a + self.lambda_w1)

    @property
    def tau(self) -> float:
        return self.lambda_a * self.p_a_max / self.lambda_w1

    def tau_epsilon(self, epsilon: float) -> float:
        return solve_tau_epsilon(epsilon, self.pi_ratio)


def pfa_statistical(params: StatisticalDepParams, gamma) -> np.ndarray | float:
    """False alarm conditioned on the realized cover power t_a.

    Same piecewise-linear form as the known-channel case with rho1 replaced
    by t_a.
    """
    if params.t_a == 0:
        gamma = np.asarray(gamma, dtype=float)
        return _clip01(np.where(gamma > params.sigma_w2, 0.0, 1.0))
    inp = BoundedDepInputs(rho1=params.t_a, rho2=0.0, sigma_w2=params.sigma_w2,
                           p_a_min=params.p_a_min, p_a_max=params.p_a_max)
    return pfa_bounded(inp, gamma)


def pmd_statistical(params: StatisticalDepParams, gamma) -> np.ndarray | float:
    """Exact miss detection with an exponential covert-power term.

    Pr(P_A*t_a + X + sigma_w2 < gamma), X exponential with mean lambda_w1:

    * 0 up to sigma_w2 + p_a_min*t_a,
    * (c + lam*(exp(-c/lam) - 1)) / span on (sigma_w2 + p_a_min*t_a, delta_a]
      with c = gamma - sigma_w2 - p_a_min*t_a and span = (p_a_max-p_a_min)*t_a,
    * 1 - lam*(exp(-(b - p_a_max*t_a)/lam) - exp(-(b - p_a_min*t_a)/lam)) / span
      above delta_a with b = gamma - sigma_w2 (grouped so every exponent is
      nonpositive, which cannot overflow).

    The degenerate lambda_w1 -> 0 limit reduces to the known-channel form with
    zero covert power.
    """
    gamma = np.asarray(gamma, dtype=float)
    b = gamma - params.sigma_w2
    lam = params.lambda_w1
    if params.t_a == 0:
        # No cover at the warden: miss iff the exponential stays below b.
        if lam == 0:
            return _clip01(np.where(b > 0, 1.0, 0.0))
        return _clip01(np.where(b > 0, 1.0 - np.exp(-np.maximum(b, 0.0) / lam), 0.0))
    span = params.p_alpha
    c = b - params.p_a_min * params.t_a
    if lam == 0:
        return _clip01(c / span)
    middle = (c + lam * np.expm1(-np.maximum(c, 0.0) / lam)) / span
    hi = 1.0 - lam * (np.exp(-np.maximum(b - params.p_a_max * params.t_a, 0.0) / lam)
                      - np.exp(-np.maximum(b - params.p_a_min * params.t_a, 0.0) / lam)) / span
    out = np.where(c <= 0, 0.0, np.where(b <= params.p_a_max * params.t_a, middle, hi))
    return _clip01(out)


def dep_statistical(params: StatisticalDepParams, gamma) -> np.ndarray | float:
    return pfa_statistical(params, gamma) + pmd_statistical(params, gamma)


def min_dep_statistical_conditional(params: StatisticalDepParams,
                                    curves: int = 0) -> DetectionResult:
    """Optimal threshold p_a_max*t_a + sigma_w2 and the conditional minimum error.

    The reported xi_star is the standard closed form
    1 + lam*(exp(-p_a_max*t_a/lam) - 1)/p_alpha + p_beta*exp(-p_a_max*t_a/lam);
    it never exceeds the exact error at the optimal threshold, so grid
    searches can only tie or do worse.
    """
    lam = params.lambda_w1
    gamma_star = params.delta_a
    if lam == 0:
        # No covert signal reaches the warden: the hypotheses coincide.
        xi_star = 1.0
    elif params.t_a == 0:
        # No cover at the warden: detection is perfect in the limit.
        xi_star = 0.0
    else:
        e = np.exp(-params.p_a_max * params.t_a / lam)
        xi_star = 1.0 + lam * (e - 1.0) / params.p_alpha + params.p_beta * e
    xi_star = float(np.clip(xi_star, 0.0, 1.0))
    table = None
    if curves:
        gammas = np.linspace(0.5 * params.sigma_w2 if params.sigma_w2 else 0.0,
                             2.0 * max(params.delta_a, params.sigma_w2, 1.0), curves)
        table = np.column_stack([gammas, pfa_statistical(params, gammas),
                                 pmd_statistical(params, gammas),
                                 dep_statistical(params, gammas)])
    return DetectionResult(gamma_star=float(gamma_star), xi_star=xi_star,
                           covert_feasible=xi_star > 0.0, curves=table)


def avg_min_dep_statistical(lambda_w1: float, lambda_a: float,
                            p_a_min: float, p_a_max: float) -> float:
    """Minimum detection error averaged over the exponential cover power.

    Closed form 1 + nu*ln(mu) + p_beta*mu with
    nu = lambda_w1 / ((p_a_max - p_a_min) * lambda_a) and
    mu = lambda_w1 / (p_a_max * lambda_a + lambda_w1).
    """
    if lambda_w1 <= 0 or lambda_a <= 0:
        raise ValueError("lambda_w1 and lambda_a must be positive")
    if not 0 < p_a_min < p_a_max:
        raise ValueError("require 0 < p_a_min < p_a_max")
    nu = lambda_w1 / ((p_a_max - p_a_min) * lambda_a)
    mu = lambda_w1 / (p_a_max * lambda_a + lambda_w1)
    p_beta = p_a_min / (p_a_max - p_a_min)
    return float(1.0 + nu * np.log(mu) + p_beta * mu)


def avg_dep_tau(tau: float, pi_ratio: float) -> float:
    """Average minimum detection error as a function of the power ratio tau.

    1 - (pi/(pi-1) * ln(tau+1)/tau - 1/(pi-1) * 1/(tau+1)) where
    pi_ratio = p_a_max/p_a_min.  Strictly increasing in tau; tends to 1 as
    tau grows without bound.  Raises for tau <= 0 (the tau -> 0 limit is 0,
    see avg_dep_tau_or_zero).
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if pi_ratio <= 1:
        raise ValueError(f"pi_ratio must exceed 1, got {pi_ratio}")
    return float(1.0 - (pi_ratio / (pi_ratio - 1.0) * np.log1p(tau) / tau
                        - 1.0 / (pi_ratio - 1.0) / (tau + 1.0)))


def avg_dep_tau_or_zero(tau: float, pi_ratio: float) -> float:
    """Total variant of avg_dep_tau returning the limit value 0 at tau = 0."""
    if tau == 0:
        return 0.0
    return avg_dep_tau(tau, pi_ratio)


def avg_dep_tau_derivative(tau: float, pi_ratio: float) -> float:
    """First derivative of avg_dep_tau in tau (positive for all tau > 0).

    -pi/((pi-1)(1+tau)^2 tau^2) * (tau - (1+tau)ln(1+tau)
                                   + (1+1/pi)tau^2 - tau(1+tau)ln(1+tau))
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if pi_ratio <= 1:
        raise ValueError(f"pi_ratio must exceed 1, got {pi_ratio}")
    log_term = np.log1p(tau)
    bracket = (tau - (1.0 + tau) * log_term
               + (1.0 + 1.0 / pi_ratio) * tau**2 - tau * (1.0 + tau) * log_term)
    return float(-pi_ratio / ((pi_ratio - 1.0) * (1.0 + tau) ** 2 * tau**2) * bracket)


_TAU_EXPANSION_CAP = 1e18


def solve_tau_epsilon(epsilon: float, pi_ratio: float, tol: float = 1e-10) -> float:
    """Root tau of f(tau) = epsilon where f = 1 - avg_dep_tau.

    f decreases from 1 at tau -> 0 to 0 at infinity, so the root is unique.
    Bisection with geometric upper-bound expansion; the residual |f - epsilon|
    is driven below ``tol``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie strictly inside (0, 1), got {epsilon}")
    if pi_ratio <= 1:
        raise ValueError(f"pi_ratio must exceed 1, got {pi_ratio}")

    def f(tau: float) -> float:
        return 1.0 - avg_dep_tau(tau, pi_ratio)

    lo = 1e-12
    hi = 1.0
    while f(hi) > epsilon:
        hi *= 4.0
        if hi > _TAU_EXPANSION_CAP:
            raise ValueError(
                f"covertness level {epsilon} requires tau beyond the expansion cap {_TAU_EXPANSION_CAP:g}"
            )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > epsilon:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi) and abs(f(hi) - epsilon) <= tol:
            break
    root = hi if abs(f(hi) - epsilon) <= abs(f(lo) - epsilon) else lo
    if abs(f(root) - epsilon) > tol:
        raise ArithmeticError(f"bisection residual {abs(f(root) - epsilon):.3e} above {tol}")
    return float(root)


def avg_min_dep_instantaneous(p_b: float, p_a_min: float, p_a_max: float) -> DetectionResult:
    """Average minimum detection error when the warden knows its channel.

    Closed form 1 - p_b/(p_a_max - p_a_min), clamped to [0, 1]; covert
    operation is flagged infeasible once p_b reaches the cover-power span.
    """
    if p_b < 0:
        raise ValueError("p_b must be >= 0")
    if not 0 < p_a_min < p_a_max:
        raise ValueError("require 0 < p_a_min < p_a_max")
    span = p_a_max - p_a_min
    xi = float(np.clip(1.0 - p_b / span, 0.0, 1.0))
    return DetectionResult(gamma_star=float("nan"), xi_star=xi, covert_feasible=xi > 0.0)


def instantaneous_power_bound(epsilon: float, p_a_min: float, p_a_max: float) -> float:
    """Largest admissible covert power at the warden: epsilon * (p_a_max - p_a_min)."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie strictly inside (0, 1)")
    return epsilon * (p_a_max - p_a_min)


def grid_search_gamma(xi_fn: Callable[[np.ndarray], np.ndarray],
                      lo: float, hi: float, points: int) -> tuple[float, float]:
    """Argmin of a detection-error curve over a uniform threshold grid.

    Ties resolve to the smallest threshold.  ``xi_fn`` must accept an array.
    """
    if points < 2:
        raise ValueError("need at least 2 grid points")
    if not hi > lo:
        raise ValueError(f"empty threshold range [{lo}, {hi}]")
    gammas = np.linspace(lo, hi, points)
    values = np.asarray(xi_fn(gammas), dtype=float)
    k = int(np.argmin(values))
    return float(gammas[k]), float(values[k])


# ---------------------------------------------------------------------------
# Monte Carlo oracles


@dataclass(frozen=True)
class MonteCarloDep:
    """Empirical detection rates with 95% binomial half-widths."""

    pfa: float
    pfa_half_width: float
    pmd: float
    pmd_half_width: float
    n_samples: int

    @property
    def xi(self) -> float:
        return self.pfa + self.pmd

    @property
    def xi_half_width(self) -> float:
        return float(np.hypot(self.pfa_half_width, self.pmd_half_width))


def monte_carlo_dep(cfg: SystemConfig, channels: ChannelSet, design,
                    detector: str = "adaptive", gamma: Optional[float] = None,
                    n_samples: int = 10**6, seed: Optional[int] = None,
                    partitions: int = 8) -> MonteCarloDep:
    """Simulate the warden's threshold test against a transmit design.

    Per sample the cover power is uniform on [p_a_min, p_a_max] and the
    warden channel follows the active error model.  The long-run received
    power under the quiet hypothesis is P_A * h^H (t/p_a) h + sigma_w2
    (the noise covariance acts through its normalized direction statistics),
    and the transmit hypothesis adds |h^H w1|^2.  ``detector`` is either
    "adaptive" (per-realization optimal threshold) or "fixed" (requires
    ``gamma``).  Samples are split across ``partitions`` independent
    substreams and merged by summation, so results are reproducible for a
    fixed (seed, partitions).
    """
    if n_samples < 10**3:
        raise ValueError("n_samples must be at least 1000")
    if detector not in ("adaptive", "fixed"):
        raise ValueError(f"unknown detector {detector!r}")
    if detector == "fixed" and gamma is None:
        raise ValueError("fixed detector requires a threshold")
    w1, t_cov = _design_arrays(design, channels.n)
    master = cfg.seed if seed is None else seed
    sizes = [n_samples // partitions + (1 if i < n_samples % partitions else 0)
             for i in range(partitions)]
    fa_count = 0
    md_count = 0
    total = 0
    t_dir = (t_cov + t_cov.conj().T) / 2.0 / cfg.p_a
    for part, size in enumerate(sizes):
        if size == 0:
            continue
        rng = rng_stream(master, "monte_carlo", part)
        h_w = _sample_warden_channels(channels, rng, size)
        p_a = rng.uniform(cfg.p_a_min, cfg.p_a_max, size=size)
        rho1 = np.einsum("kn,nm,km->k", h_w.conj(), t_dir, h_w).real
        rho2 = np.abs(h_w @ w1.conj()) ** 2
        quiet = p_a * rho1 + cfg.sigma_w2
        active = quiet + rho2
        if detector == "fixed":
            thresholds = np.full(size, float(gamma))
        elif isinstance(channels.wcsi, StatisticalWcsi):
            thresholds = cfg.p_a_max * rho1 + cfg.sigma_w2
        else:
            # Midpoint of the flat minimizing interval of the conditional error.
            lo = rho2 + cfg.sigma_w2 + cfg.p_a_min * rho1
            hi = cfg.p_a_max * rho1 + cfg.sigma_w2
            thresholds = 0.5 * (lo + hi)
        fa_count += int(np.count_nonzero(quiet > thresholds))
        md_count += int(np.count_nonzero(active < thresholds))
        total += size
    pfa = fa_count / total
    pmd = md_count / total
    return MonteCarloDep(pfa=pfa, pfa_half_width=_binom_half_width(pfa, total),
                         pmd=pmd, pmd_half_width=_binom_half_width(pmd, total),
                         n_samples=total)


def _design_arrays(design, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Accept (w1 vector, t matrix) pairs or an object with .w1/.t attributes."""
    if hasattr(design, "w1") and hasattr(design, "t"):
        w1 = np.asarray(design.w1, dtype=complex)
        t_cov = np.asarray(design.t, dtype=complex)
    else:
        w1, t_cov = design
        w1 = np.asarray(w1, dtype=complex)
        t_cov = np.asarray(t_cov, dtype=complex)
    if w1.ndim == 2:
        # Covariance passed for the information signal: use its principal beam.
        from .optimizer import rank_one_extract
        w1 = rank_one_extract(w1)
    if w1.shape != (n,) or t_cov.shape != (n, n):
        raise ValueError(f"design dimensions do not match n={n}")
    return w1, t_cov


def _sample_warden_channels(channels: ChannelSet, rng: np.random.Generator,
                            size: int) -> np.ndarray:
    wcsi = channels.wcsi
    n = channels.n
    if isinstance(wcsi, BoundedWcsi):
        direction = (rng.standard_normal((size, n)) + 1j * rng.standard_normal((size, n)))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        # Uniform over the complex n-ball: radius ~ eps * U^(1/2n).
        radii = wcsi.eps_w * rng.random(size) ** (1.0 / (2 * n))
        return channels.h_w_hat[None, :] + radii[:, None] * direction
    if isinstance(wcsi, GaussianWcsi):
        e = (rng.standard_normal((size, n)) + 1j * rng.standard_normal((size, n))) / np.sqrt(2.0)
        return channels.h_w_hat[None, :] + e @ _psd_sqrt(wcsi.gamma_w).T
    if isinstance(wcsi, StatisticalWcsi):
        g = (rng.standard_normal((size, n)) + 1j * rng.standard_normal((size, n))) / np.sqrt(2.0)
        return np.sqrt(wcsi.l_w) * (g @ _psd_sqrt(wcsi.omega_w).T)
    raise ValueError("threshold-rule simulation needs a bounded, gaussian, or statistical model")


def _binom_half_width(p: float, n: int) -> float:
    return float(1.96 * np.sqrt(max(p * (1.0 - p), 0.0) / n))


def mc_rates_bounded(inp: BoundedDepInputs, gamma: float, n_samples: int = 10**6,
                     seed: int = 0) -> MonteCarloDep:
    """Threshold-rule simulation at fixed (rho1, rho2): draws only the cover power."""
    rng = rng_stream(seed, "monte_carlo", 2)
    p_a = rng.uniform(inp.p_a_min, inp.p_a_max, size=n_samples)
    quiet = p_a * inp.rho1 + inp.sigma_w2
    active = quiet + inp.rho2
    pfa = float(np.mean(quiet > gamma))
    pmd = float(np.mean(active < gamma))
    return MonteCarloDep(pfa=pfa, pfa_half_width=_binom_half_width(pfa, n_samples),
                         pmd=pmd, pmd_half_width=_binom_half_width(pmd, n_samples),
                         n_samples=n_samples)


def mc_rates_statistical(params: StatisticalDepParams, gamma: float,
                         n_samples: int = 10**6, seed: int = 0) -> MonteCarloDep:
    """Threshold-rule simulation at fixed cover power t_a with exponential covert power."""
    rng = rng_stream(seed, "monte_carlo", 3)
    p_a = rng.uniform(params.p_a_min, params.p_a_max, size=n_samples)
    t_w1 = rng.exponential(params.lambda_w1, size=n_samples)
    quiet = p_a * params.t_a + params.sigma_w2
    active = quiet + t_w1
    pfa = float(np.mean(quiet > gamma))
    pmd = float(np.mean(active < gamma))
    return MonteCarloDep(pfa=pfa, pfa_half_width=_binom_half_width(pfa, n_samples),
                         pmd=pmd, pmd_half_width=_binom_half_width(pmd, n_samples),
                         n_samples=n_samples)


def mc_avg_min_dep_statistical(lambda_w1: float, lambda_a: float, p_a_min: float,
                               p_a_max: float, n_samples: int = 10**6,
                               seed: int = 0) -> tuple[float, float]:
    """Monte Carlo of the cover-power average: draw t_a, average the conditional minimum.

    Returns (estimate, 95% half-width); the estimator is unbiased for the
    closed-form average.
    """
    rng = rng_stream(seed, "monte_carlo", 0)
    t_a = rng.exponential(lambda_a, size=n_samples)
    span = (p_a_max - p_a_min)
    p_beta = p_a_min / span
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.exp(-p_a_max * t_a / lambda_w1)
        vals = 1.0 + lambda_w1 * (e - 1.0) / (span * t_a) + p_beta * e
    vals = np.where(t_a == 0.0, 0.0, vals)
    mean = float(np.mean(vals))
    half = float(1.96 * np.std(vals, ddof=1) / np.sqrt(n_samples))
    return mean, half


def mc_avg_min_dep_instantaneous(p_b: float, p_a_min: float, p_a_max: float,
                                 lambda_w1: float = 1.0, n_samples: int = 10**6,
                                 seed: int = 0) -> tuple[float, float]:
    """Monte Carlo of the known-channel average over the exponential covert power.

    Draws the received covert power with mean lambda_w1 (any positive value,
    the mean cancels through rho1 = lambda_w1 / p_b) and averages the
    conditional expression 1 - rho2/((p_a_max - p_a_min) * rho1).
    """
    if p_b <= 0:
        raise ValueError("p_b must be positive for the sampling oracle")
    rng = rng_stream(seed, "monte_carlo", 1)
    rho1 = lambda_w1 / p_b
    rho2 = rng.exponential(lambda_w1, size=n_samples)
    vals = 1.0 - rho2 / ((p_a_max - p_a_min) * rho1)
    mean = float(np.mean(vals))
    half = float(1.96 * np.std(vals, ddof=1) / np.sqrt(n_samples))
    return mean, half


def quadrature_avg_min_dep_statistical(lambda_w1: float, lambda_a: float,
                                       p_a_min: float, p_a_max: float,
                                       tol: float = 1e-10) -> float:
    """Adaptive quadrature of the conditional-minimum integral over the cover power."""
    span = p_a_max - p_a_min
    p_beta = p_a_min / span

    def integrand(t_a: float) -> float:
        if t_a == 0.0:
            return 0.0
        e = np.exp(-p_a_max * t_a / lambda_w1)
        xi = 1.0 + lambda_w1 * (e - 1.0) / (span * t_a) + p_beta * e
        return xi * np.exp(-t_a / lambda_a) / lambda_a

    value, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=tol, epsrel=tol, limit=400)
    return float(value)


def _clip01(values: np.ndarray) -> np.ndarray | float:
    out = np.clip(values, 0.0, 1.0)
    if np.ndim(out) == 0:
        return float(out)
    return out

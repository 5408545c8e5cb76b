"""Scenario configuration, unit conversions, path loss, and channel generation.

Everything downstream (beampattern synthesis, detection analysis, the conic
designs) consumes the immutable objects built here.  Powers are stored in
watts and angles in degrees; dB/dBm and radians appear only at module
boundaries.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import yaml

CONFIG_SCHEMA_VERSION = 1
DEFAULT_SEED = 0

# Named RNG substreams spawned from the master seed.  Fixed IDs keep draws
# reproducible and independent across concurrent consumers.
_STREAM_IDS = {"channels": 1, "monte_carlo": 2, "sweeps": 3, "tests": 4}


class ConfigError(ValueError):
    """Raised when a configuration file cannot be parsed or violates an invariant."""


def db_to_linear(value_db: float) -> float:
    """Convert a dB ratio to linear scale."""
    return float(10.0 ** (value_db / 10.0))


def dbm_to_watts(p_dbm: float) -> float:
    """Convert a power in dBm to watts: 10^((p - 30)/10)."""
    return float(10.0 ** ((p_dbm - 30.0) / 10.0))


def watts_to_dbm(p_watts: float) -> float:
    if p_watts <= 0:
        raise ValueError("power must be positive to express in dBm")
    return float(10.0 * np.log10(p_watts) + 30.0)


def path_loss(zeta0_db: float, d0: float, d: float, alpha: float) -> float:
    """Large-scale gain zeta0 * (d0/d)^alpha in linear scale.

    ``zeta0_db`` is the loss at reference distance ``d0`` in dB.
    """
    if d <= 0 or d0 <= 0:
        raise ValueError(f"distances must be positive, got d0={d0}, d={d}")
    return db_to_linear(zeta0_db) * (d0 / d) ** alpha


@dataclass(frozen=True)
class PathLossParams:
    """Reference loss and per-link exponents/distances for the two links."""

    zeta0_db: float = -30.0
    alpha_b: float = 2.5
    alpha_w: float = 2.5
    d0: float = 1.0
    d_b: float = 50.0
    d_w: float = 50.0

    def gain_bob(self) -> float:
        return path_loss(self.zeta0_db, self.d0, self.d_b, self.alpha_b)

    def gain_willie(self) -> float:
        return path_loss(self.zeta0_db, self.d0, self.d_w, self.alpha_w)


@dataclass(frozen=True)
class SystemConfig:
    """All scalar scenario parameters.

    Defaults reproduce the reference simulation setup: a 10-antenna
    half-wavelength array, total budget 15 W split between a 10 W noise
    ceiling and 5 W of information power, four targets, and covertness
    level 0.1.
    """

    n: int = 10
    spacing_ratio: float = 0.5
    p_t: float = 15.0
    p_a_min: float = 1.0
    p_a_max: float = 10.0
    p_a: float = 5.0
    sigma_b2: float = dbm_to_watts(-80.0)
    sigma_w2: float = dbm_to_watts(-80.0)
    epsilon: float = 0.1
    rho_c: float = 0.05
    r_min: float = 5.0
    w_c: float = 1.0
    target_angles: tuple[float, ...] = (-45.0, -20.0, 20.0, 45.0)
    delta_theta: float = 10.0
    n_angles: int = 180
    seed: int = DEFAULT_SEED
    path_loss: PathLossParams = field(default_factory=PathLossParams)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["target_angles"] = list(self.target_angles)
        d["schema"] = CONFIG_SCHEMA_VERSION
        return d

    @property
    def p_b_max(self) -> float:
        """Power budget left for the information covariance."""
        return self.p_t - self.p_a_max

    def rng(self, stream: str, *indices: int) -> np.random.Generator:
        """Named independent substream of the master seed."""
        return rng_stream(self.seed, stream, *indices)


def rng_stream(master_seed: int, stream: str, *indices: int) -> np.random.Generator:
    if stream not in _STREAM_IDS:
        raise ValueError(f"unknown RNG stream {stream!r}; known: {sorted(_STREAM_IDS)}")
    key = (_STREAM_IDS[stream],) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed), spawn_key=key))


def validate_config(cfg: SystemConfig) -> list[str]:
    """Check every invariant; returns one message per violation (empty when valid)."""
    errors = []
    if cfg.n < 1:
        errors.append(f"n: antenna count must be >= 1, got {cfg.n}")
    if cfg.spacing_ratio <= 0:
        errors.append(f"spacing_ratio: must be positive, got {cfg.spacing_ratio}")
    if not (0 < cfg.p_a_min <= cfg.p_a <= cfg.p_a_max):
        errors.append(
            "p_a_min/p_a/p_a_max: require 0 < p_a_min <= p_a <= p_a_max, got "
            f"p_a_min={cfg.p_a_min}, p_a={cfg.p_a}, p_a_max={cfg.p_a_max}"
        )
    if not cfg.p_a_max < cfg.p_t:
        errors.append(f"p_a_max/p_t: require p_a_max < p_t, got p_a_max={cfg.p_a_max}, p_t={cfg.p_t}")
    if not (0.0 < cfg.epsilon < 1.0):
        errors.append(f"epsilon: must lie strictly inside (0, 1), got {cfg.epsilon}")
    if not (0.0 < cfg.rho_c < 1.0):
        errors.append(f"rho_c: must lie strictly inside (0, 1), got {cfg.rho_c}")
    if cfg.r_min < 0:
        errors.append(f"r_min: must be >= 0, got {cfg.r_min}")
    if cfg.w_c < 0:
        errors.append(f"w_c: must be >= 0, got {cfg.w_c}")
    if len(cfg.target_angles) > cfg.n:
        errors.append(
            f"target_angles: at most n={cfg.n} targets supported, got {len(cfg.target_angles)}"
        )
    if any(not -90.0 <= t <= 90.0 for t in cfg.target_angles):
        errors.append(f"target_angles: all angles must lie in [-90, 90], got {cfg.target_angles}")
    if cfg.delta_theta <= 0:
        errors.append(f"delta_theta: must be positive, got {cfg.delta_theta}")
    if cfg.n_angles < 2:
        errors.append(f"n_angles: need at least 2 grid angles, got {cfg.n_angles}")
    if cfg.sigma_b2 <= 0 or cfg.sigma_w2 <= 0:
        errors.append(f"sigma_b2/sigma_w2: noise powers must be positive")
    for name in ("d0", "d_b", "d_w"):
        if getattr(cfg.path_loss, name) <= 0:
            errors.append(f"path_loss.{name}: must be positive")
    return errors


_CONFIG_KEYS = {
    "schema", "n", "spacing_ratio", "p_t", "p_a_min", "p_a_max", "p_a",
    "sigma_b2_dbm", "sigma_w2_dbm", "epsilon", "rho_c", "r_min", "w_c",
    "target_angles", "delta_theta", "n_angles", "seed", "path_loss",
}
_PATH_LOSS_KEYS = {"zeta0_db", "alpha_b", "alpha_w", "d0", "d_b", "d_w"}


def load_config(path) -> SystemConfig:
    """Parse a YAML scenario file into a validated SystemConfig.

    The file is a flat key-value document with a ``schema: 1`` marker.
    Noise powers are given in dBm (``sigma_b2_dbm``/``sigma_w2_dbm``);
    everything else is in watts, degrees, or dimensionless as named.
    A missing ``seed`` defaults to 0.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"could not parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    schema = raw.get("schema")
    if schema != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported or missing schema version {schema!r} (expected {CONFIG_SCHEMA_VERSION})")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")

    kwargs = {}
    for key in ("n", "n_angles", "seed"):
        if key in raw:
            kwargs[key] = int(raw[key])
    for key in ("spacing_ratio", "p_t", "p_a_min", "p_a_max", "p_a",
                "epsilon", "rho_c", "r_min", "w_c", "delta_theta"):
        if key in raw:
            kwargs[key] = float(raw[key])
    if "sigma_b2_dbm" in raw:
        kwargs["sigma_b2"] = dbm_to_watts(float(raw["sigma_b2_dbm"]))
    if "sigma_w2_dbm" in raw:
        kwargs["sigma_w2"] = dbm_to_watts(float(raw["sigma_w2_dbm"]))
    if "target_angles" in raw:
        kwargs["target_angles"] = tuple(float(t) for t in raw["target_angles"])
    if "path_loss" in raw:
        pl = raw["path_loss"]
        if not isinstance(pl, dict) or set(pl) - _PATH_LOSS_KEYS:
            raise ConfigError(f"{path}: path_loss must be a mapping with keys {sorted(_PATH_LOSS_KEYS)}")
        kwargs["path_loss"] = PathLossParams(**{k: float(v) for k, v in pl.items()})

    cfg = SystemConfig(**kwargs)
    errors = validate_config(cfg)
    if errors:
        raise ConfigError(f"{path}: invalid configuration:\n  " + "\n  ".join(errors))
    return cfg


# ---------------------------------------------------------------------------
# Warden-CSI error models


@dataclass(frozen=True, eq=False)
class BoundedWcsi:
    """Estimate plus an error vector confined to a Euclidean ball of radius eps_w."""

    eps_w: float

    def __post_init__(self):
        if self.eps_w < 0:
            raise ValueError(f"eps_w must be >= 0, got {self.eps_w}")


@dataclass(frozen=True, eq=False)
class GaussianWcsi:
    """Estimate plus a circularly-symmetric Gaussian error with covariance gamma_w."""

    gamma_w: np.ndarray

    def __post_init__(self):
        _check_hermitian_psd(self.gamma_w, "gamma_w")


@dataclass(frozen=True, eq=False)
class StatisticalWcsi:
    """Only the distribution is known: channel = sqrt(l_w) * g, g ~ CN(0, omega_w)."""

    omega_w: np.ndarray
    l_w: float

    def __post_init__(self):
        _check_hermitian_psd(self.omega_w, "omega_w")
        if self.l_w <= 0:
            raise ValueError(f"l_w must be positive, got {self.l_w}")


@dataclass(frozen=True, eq=False)
class InstantaneousWcsi:
    """Warden knows its channel exactly; p_b caps the covert power seen there."""

    p_b: float

    def __post_init__(self):
        if self.p_b < 0:
            raise ValueError(f"p_b must be >= 0, got {self.p_b}")


WcsiMode = Union[BoundedWcsi, GaussianWcsi, StatisticalWcsi, InstantaneousWcsi]

MODE_NAMES = ("bounded", "gaussian", "statistical", "instantaneous")


def _check_hermitian_psd(m: np.ndarray, name: str, herm_tol: float = 1e-10,
                         psd_tol: float = -1e-10) -> None:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max()) if m.size else 1.0)
    if np.abs(m - m.conj().T).max() > herm_tol * scale:
        raise ValueError(f"{name} is not Hermitian within tolerance")
    eigmin = float(np.linalg.eigvalsh((m + m.conj().T) / 2).min())
    if eigmin < psd_tol * scale:
        raise ValueError(f"{name} is not PSD (min eigenvalue {eigmin:.3e})")


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Bob channel, warden channel estimate, and the active warden-CSI model."""

    h_b: np.ndarray
    h_w_hat: np.ndarray
    wcsi: WcsiMode

    def __post_init__(self):
        h_b = np.asarray(self.h_b, dtype=complex)
        h_w = np.asarray(self.h_w_hat, dtype=complex)
        if h_b.ndim != 1 or h_w.ndim != 1 or h_b.shape != h_w.shape:
            raise ValueError("h_b and h_w_hat must be 1-D vectors of equal length")
        n = h_b.shape[0]
        if isinstance(self.wcsi, GaussianWcsi) and self.wcsi.gamma_w.shape != (n, n):
            raise ValueError("gamma_w dimension does not match the channel length")
        if isinstance(self.wcsi, StatisticalWcsi) and self.wcsi.omega_w.shape != (n, n):
            raise ValueError("omega_w dimension does not match the channel length")

    @property
    def n(self) -> int:
        return self.h_b.shape[0]

    @property
    def mode(self) -> str:
        return {
            BoundedWcsi: "bounded",
            GaussianWcsi: "gaussian",
            StatisticalWcsi: "statistical",
            InstantaneousWcsi: "instantaneous",
        }[type(self.wcsi)]


def generate_channels(cfg: SystemConfig, mode: str = "bounded") -> ChannelSet:
    """Draw Rayleigh-fading channels and derive the error-model parameters.

    Both links are circularly-symmetric complex Gaussian scaled by the square
    root of the configured path-loss gain.  The error parameters follow the
    reference setup: bounded radius 0.1 * ||h_w_hat||, Gaussian covariance
    0.01 * ||h_w_hat||^2 * I / n, statistical correlation identity with the
    warden path-loss gain, instantaneous power cap epsilon * (p_a_max - p_a_min).

    The draw is a pure function of (cfg.seed, n); the same seed yields the
    same h_b and h_w_hat in every mode.
    """
    if mode not in MODE_NAMES:
        raise ValueError(f"unknown WCSI mode {mode!r}; expected one of {MODE_NAMES}")
    rng = cfg.rng("channels")
    l_b = cfg.path_loss.gain_bob()
    l_w = cfg.path_loss.gain_willie()
    h_b = np.sqrt(l_b) * _crandn(rng, cfg.n)
    h_w_hat = np.sqrt(l_w) * _crandn(rng, cfg.n)

    if mode == "bounded":
        wcsi: WcsiMode = BoundedWcsi(eps_w=0.1 * float(np.linalg.norm(h_w_hat)))
    elif mode == "gaussian":
        scale = 0.01 * float(np.linalg.norm(h_w_hat) ** 2) / cfg.n
        wcsi = GaussianWcsi(gamma_w=scale * np.eye(cfg.n, dtype=complex))
    elif mode == "statistical":
        wcsi = StatisticalWcsi(omega_w=np.eye(cfg.n, dtype=complex), l_w=l_w)
    else:
        wcsi = InstantaneousWcsi(p_b=cfg.epsilon * (cfg.p_a_max - cfg.p_a_min))
    return ChannelSet(h_b=h_b, h_w_hat=h_w_hat, wcsi=wcsi)


def _crandn(rng: np.random.Generator, n: int) -> np.ndarray:
    """CN(0, I) vector: unit-variance circularly-symmetric complex Gaussian."""
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)


def sample_statistical_channel(wcsi: StatisticalWcsi, rng: np.random.Generator,
                               size: int = 1) -> np.ndarray:
    """Draw h_w = sqrt(l_w) * g with g ~ CN(0, omega_w); shape (size, n)."""
    n = wcsi.omega_w.shape[0]
    g = (rng.standard_normal((size, n)) + 1j * rng.standard_normal((size, n))) / np.sqrt(2.0)
    root = _psd_sqrt(wcsi.omega_w)
    return np.sqrt(wcsi.l_w) * (g @ root.T)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((m + m.conj().T) / 2)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T

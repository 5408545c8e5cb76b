"""Deterministic convex constraint builders consumed by the optimizer.

Every builder is affine in the matrix unknowns and works both on numeric
arrays (for verification) and on cvxpy expressions (for program assembly).
The robust covertness constraint over a norm ball becomes one linear matrix
inequality through the S-procedure; the Gaussian outage constraint becomes a
sufficient affine/second-order-cone/semidefinite triple; the
statistics-only covertness condition is a single linear trace inequality.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

SQRT_EIG_WARN = 1e-8


def _is_expr(x) -> bool:
    return isinstance(x, cp.Expression)


def _real(x):
    return cp.real(x) if _is_expr(x) else np.real(x)


def _trace(x):
    return cp.trace(x) if _is_expr(x) else np.trace(x)


def _quad(h: np.ndarray, m):
    """Real quadratic form h^H M h for a constant vector and numeric/affine M."""
    h = np.asarray(h, dtype=complex)
    if _is_expr(m):
        return cp.real(h.conj() @ m @ h)
    return float(np.real(h.conj() @ np.asarray(m) @ h))


def hermitian_sqrt(m: np.ndarray, warn_tol: float = SQRT_EIG_WARN) -> np.ndarray:
    """Hermitian square root with negative eigenvalues floored at zero.

    PSD inputs can carry numerical noise; eigenvalues below -warn_tol times
    the spectral scale trigger a warning before flooring.
    """
    m = np.asarray(m, dtype=complex)
    herm = (m + m.conj().T) / 2.0
    vals, vecs = np.linalg.eigh(herm)
    scale = max(float(vals.max()), 1e-300)
    if vals.min() < -warn_tol * scale:
        warnings.warn(
            f"flooring eigenvalue {vals.min():.3e} of a nominally PSD matrix",
            RuntimeWarning, stacklevel=2,
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def psd_floor(m: np.ndarray, warn_tol: float = SQRT_EIG_WARN) -> np.ndarray:
    """Project a nearly-PSD Hermitian matrix onto the PSD cone."""
    m = np.asarray(m, dtype=complex)
    herm = (m + m.conj().T) / 2.0
    vals, vecs = np.linalg.eigh(herm)
    scale = max(float(vals.max()), 1e-300)
    if vals.min() < -warn_tol * scale:
        warnings.warn(
            f"flooring eigenvalue {vals.min():.3e} of a nominally PSD matrix",
            RuntimeWarning, stacklevel=2,
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * vals) @ vecs.conj().T


# ---------------------------------------------------------------------------
# Complex-to-real embedding


def embed_complex(h: np.ndarray, herm_tol: float = 1e-10) -> np.ndarray:
    """Map an n x n Hermitian matrix to the 2n x 2n real symmetric block form.

    [[Re H, -Im H], [Im H, Re H]]; the embedding preserves definiteness and
    doubles the trace.
    """
    h = np.asarray(h, dtype=complex)
    scale = max(1.0, float(np.abs(h).max()) if h.size else 1.0)
    if np.abs(h - h.conj().T).max() > herm_tol * scale:
        raise ValueError("embed_complex expects a Hermitian matrix")
    x, y = h.real, h.imag
    return np.block([[x, -y], [y, x]])


def lift_real(r: np.ndarray) -> np.ndarray:
    """Inverse of embed_complex; averages the two redundant copies."""
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] % 2:
        raise ValueError("lift_real expects a square matrix of even dimension")
    n = r.shape[0] // 2
    x = (r[:n, :n] + r[n:, n:]) / 2.0
    y = (r[n:, :n] - r[:n, n:]) / 2.0
    h = x + 1j * y
    return (h + h.conj().T) / 2.0


# ---------------------------------------------------------------------------
# Covertness constraints


def s1_matrix(w1, t, epsilon: float, p_a_min: float, p_a_max: float, p_a: float):
    """Difference matrix W1 - epsilon*(p_a_max - p_a_min)*T/p_a.

    The covertness requirement says this matrix must be nonpositive along the
    warden channel.
    """
    return w1 - (epsilon * (p_a_max - p_a_min) / p_a) * t


@dataclass(frozen=True, eq=False)
class LmiBlock:
    """S-procedure block for the ball-robust covertness constraint.

    ``block`` is the (n+1) x (n+1) Hermitian affine matrix that must be PSD;
    ``lam`` is the nonnegative multiplier it was built with.
    """

    block: object
    lam: object

    def as_cvxpy_constraints(self) -> list:
        cons = [self.block >> 0]
        if _is_expr(self.lam):
            cons.append(self.lam >= 0)
        return cons


def s_procedure_lmi(w1, t, h_w_hat: np.ndarray, eps_w: float, lam,
                    epsilon: float, p_a_min: float, p_a_max: float,
                    p_a: float) -> LmiBlock:
    """Lossless matrix reformulation of the ball-robust covertness constraint.

    With S1 = W1 - epsilon*(p_a_max - p_a_min)*T/p_a, feasibility of

        [[lam*I - S1,        -S1 h],
         [-h^H S1,  -lam*eps_w^2 - h^H S1 h]]  >=  0,  lam >= 0

    is equivalent to h_w^H S1 h_w <= 0 for every channel within distance
    eps_w of the estimate h (S-procedure, single quadratic uncertainty).
    """
    h = np.asarray(h_w_hat, dtype=complex)
    n = h.shape[0]
    if eps_w < 0:
        raise ValueError("eps_w must be >= 0")
    s1 = s1_matrix(w1, t, epsilon, p_a_min, p_a_max, p_a)
    if _is_expr(s1):
        if s1.shape != (n, n):
            raise ValueError(f"dimension mismatch: S1 is {s1.shape}, channel has n={n}")
        top = cp.hstack([lam * np.eye(n) - s1, -(s1 @ h.reshape(-1, 1))])
        corner = cp.reshape(-lam * eps_w**2 - cp.real(h.conj()[None, :] @ s1 @ h.reshape(-1, 1)),
                            (1, 1), order="F")
        bottom = cp.hstack([-(h.conj()[None, :] @ s1), corner])
        block = cp.vstack([top, bottom])
    else:
        s1 = np.asarray(s1)
        if s1.shape != (n, n):
            raise ValueError(f"dimension mismatch: S1 is {s1.shape}, channel has n={n}")
        lam = float(lam)
        col = -(s1 @ h)[:, None]
        corner = np.array([[-lam * eps_w**2 - float(np.real(h.conj() @ s1 @ h))]])
        block = np.block([[lam * np.eye(n) - s1, col], [col.conj().T, corner]])
    return LmiBlock(block=block, lam=lam)


def bti_data(w1, t, h_w_hat: np.ndarray, gamma_w: np.ndarray, epsilon: float,
             p_a_min: float, p_a_max: float, p_a: float):
    """Quadratic-form data (A, b, c) of the Gaussian covertness outage event.

    Writing the channel as h + gamma_w^(1/2) e with e standard complex
    Gaussian, the event h_w^H S1 h_w <= 0 reads
    e^H A e + 2 Re(e^H b) + c >= 0 with A = G(-S1)G, b = G(-S1)h,
    c = h^H(-S1)h, G the Hermitian root of gamma_w.
    """
    h = np.asarray(h_w_hat, dtype=complex)
    g = hermitian_sqrt(gamma_w)
    s1 = s1_matrix(w1, t, epsilon, p_a_min, p_a_max, p_a)
    neg = -s1
    a_w = g @ neg @ g
    b_w = neg @ h if _is_expr(neg) else np.asarray(neg) @ h
    b_w = g @ b_w
    c_w = _quad(h, neg)
    return a_w, b_w, c_w


@dataclass(frozen=True, eq=False)
class BtiTriple:
    """Sufficient deterministic rows for a Gaussian chance constraint.

    Feasibility of the three rows (affine scalar, norm bound, shifted PSD)
    with some x, y >= 0 implies the outage probability of the quadratic event
    stays below rho_c.  Conservative: infeasibility proves nothing.
    """

    affine_lhs: object   # must be >= 0
    soc_norm: object     # must be <= x
    psd_block: object    # must be PSD
    x: object
    y: object

    def as_cvxpy_constraints(self) -> list:
        return [self.affine_lhs >= 0, self.soc_norm <= self.x,
                self.psd_block >> 0, self.y >= 0]


def bti_constraints(w1, t, h_w_hat: np.ndarray, gamma_w: np.ndarray, rho_c: float,
                    epsilon: float, p_a_min: float, p_a_max: float, p_a: float,
                    x, y) -> BtiTriple:
    """Assemble the three-row sufficient certificate for covertness outage <= rho_c.

    The auxiliaries x, y enter as extra nonnegative scalars (variables in a
    program, numbers in a check):

        tr(A) - sqrt(2 ln(1/rho_c)) x + ln(rho_c) y + c >= 0
        sqrt(||A||_F^2 + 2 ||b||^2) <= x
        y I + A >= 0, y >= 0
    """
    if not 0.0 < rho_c < 1.0:
        raise ValueError("rho_c must lie strictly inside (0, 1)")
    a_w, b_w, c_w = bti_data(w1, t, h_w_hat, gamma_w, epsilon, p_a_min, p_a_max, p_a)
    n = np.asarray(h_w_hat).shape[0]
    coeff = np.sqrt(2.0 * np.log(1.0 / rho_c))
    if _is_expr(a_w):
        affine = cp.real(cp.trace(a_w)) - coeff * x + np.log(rho_c) * y + c_w
        soc_norm = cp.norm(cp.hstack([cp.vec(a_w, order="F"), np.sqrt(2.0) * b_w]))
        psd = y * np.eye(n) + a_w
    else:
        affine = float(np.real(np.trace(a_w))) - coeff * float(x) + np.log(rho_c) * float(y) + c_w
        soc_norm = float(np.sqrt(np.linalg.norm(a_w, "fro") ** 2
                                 + 2.0 * np.linalg.norm(b_w) ** 2))
        psd = float(y) * np.eye(n) + a_w
    return BtiTriple(affine_lhs=affine, soc_norm=soc_norm, psd_block=psd, x=x, y=y)


def bti_feasible_point(w1: np.ndarray, t: np.ndarray, h_w_hat: np.ndarray,
                       gamma_w: np.ndarray, rho_c: float, epsilon: float,
                       p_a_min: float, p_a_max: float, p_a: float,
                       tol: float = 1e-9) -> bool:
    """Whether some (x, y) satisfies the triple at a numeric design point.

    x is forced by the norm row; the scalar row is increasing in neither
    auxiliary, so y is swept over the smallest admissible value from the PSD
    row.
    """
    a_w, b_w, c_w = bti_data(w1, t, h_w_hat, gamma_w, epsilon, p_a_min, p_a_max, p_a)
    x = float(np.sqrt(np.linalg.norm(a_w, "fro") ** 2 + 2.0 * np.linalg.norm(b_w) ** 2))
    y = max(0.0, -float(np.linalg.eigvalsh((a_w + a_w.conj().T) / 2).min()))
    coeff = np.sqrt(2.0 * np.log(1.0 / rho_c))
    affine = float(np.real(np.trace(a_w))) - coeff * x + np.log(rho_c) * y + c_w
    return affine >= -tol


def statistical_covertness(w1, t, omega_w: np.ndarray, tau_eps: float,
                           p_a_max: float, p_a: float):
    """Linear trace inequality enforcing the statistics-only covertness level.

    Returns the slack expression tr(Omega T)/p_a - tau_eps tr(Omega W1)/p_a_max,
    which must be nonnegative.
    """
    if tau_eps <= 0:
        raise ValueError("tau_eps must be positive")
    omega = np.asarray(omega_w, dtype=complex)
    lhs = _real(_trace(omega @ t)) / p_a
    rhs = _real(_trace(omega @ w1)) * (tau_eps / p_a_max)
    return lhs - rhs


def covert_rate_constraint(w1, t, h_b: np.ndarray, r_min: float, sigma_b2: float):
    """Rate floor as an affine row: h^H W1 h - (2^r_min - 1)(h^H T h + sigma_b2) >= 0.

    A numeric design satisfies the row exactly when its achievable rate
    log2(1 + SINR) reaches r_min.
    """
    if r_min < 0:
        raise ValueError("r_min must be >= 0")
    gain = _quad(h_b, w1)
    interference = _quad(h_b, t)
    factor = 2.0**r_min - 1.0
    return gain - factor * (interference + sigma_b2)


def power_constraint(w1, p_t: float, p_a_max: float):
    """Information power budget slack: (p_t - p_a_max) - tr(W1) >= 0."""
    return (p_t - p_a_max) - _real(_trace(w1))


def dfan_power_constraint(t, p_a: float):
    """Noise-cover power equality residual: tr(T) - p_a == 0."""
    return _real(_trace(t)) - p_a


def dc_penalty(w1, w_l: np.ndarray):
    """Rank-one surrogate tr(W1) - w_l^H W1 w_l for a unit direction w_l.

    Nonnegative on PSD matrices; zero exactly when W1 is a nonnegative
    multiple of w_l w_l^H.  The direction is normalized here; a zero vector
    is rejected.
    """
    w_l = np.asarray(w_l, dtype=complex)
    norm = float(np.linalg.norm(w_l))
    if norm == 0.0:
        raise ValueError("dc_penalty direction must be nonzero")
    u = w_l / norm
    return _real(_trace(w1)) - _quad(u, w1)


# ---------------------------------------------------------------------------
# Sampling verifiers


def sample_ball_errors(rng: np.random.Generator, n: int, eps_w: float,
                       size: int) -> np.ndarray:
    """Uniform draws from the complex n-ball of radius eps_w, shape (size, n)."""
    direction = rng.standard_normal((size, n)) + 1j * rng.standard_normal((size, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radii = eps_w * rng.random(size) ** (1.0 / (2 * n))
    return radii[:, None] * direction


def verify_s_procedure_by_sampling(w1: np.ndarray, t: np.ndarray, h_w_hat: np.ndarray,
                                   eps_w: float, epsilon: float, p_a_min: float,
                                   p_a_max: float, p_a: float, rng: np.random.Generator,
                                   n_samples: int = 10**5) -> float:
    """Largest sampled value of h^H S1 h over the error ball (soundness check).

    A covertness-feasible design keeps this at or below numerical noise.
    Boundary points are included explicitly since the worst case sits there.
    """
    s1 = np.asarray(s1_matrix(w1, t, epsilon, p_a_min, p_a_max, p_a))
    h = np.asarray(h_w_hat, dtype=complex)
    errors = sample_ball_errors(rng, h.shape[0], eps_w, n_samples)
    half = n_samples // 2
    norms = np.linalg.norm(errors[:half], axis=1, keepdims=True)
    errors[:half] = np.where(norms > 0, errors[:half] / norms * eps_w, errors[:half])
    channels = h[None, :] + errors
    vals = np.einsum("kn,nm,km->k", channels.conj(), s1, channels).real
    return float(vals.max())


def verify_bti_outage(w1: np.ndarray, t: np.ndarray, h_w_hat: np.ndarray,
                      gamma_w: np.ndarray, epsilon: float, p_a_min: float,
                      p_a_max: float, p_a: float, rng: np.random.Generator,
                      n_samples: int = 10**5) -> float:
    """Empirical probability that a Gaussian channel error violates covertness.

    The certificate is sufficient only, so feasible designs typically show
    an outage rate well below the target.
    """
    s1 = np.asarray(s1_matrix(w1, t, epsilon, p_a_min, p_a_max, p_a))
    h = np.asarray(h_w_hat, dtype=complex)
    n = h.shape[0]
    root = hermitian_sqrt(gamma_w)
    e = (rng.standard_normal((n_samples, n)) + 1j * rng.standard_normal((n_samples, n))) / np.sqrt(2.0)
    channels = h[None, :] + e @ root.T
    vals = np.einsum("kn,nm,km->k", channels.conj(), s1, channels).real
    return float(np.mean(vals > 0.0))

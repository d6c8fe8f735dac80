#!/usr/bin/env python3
"""
ARCS-CV Controller
Cross-validation error bound, closed-form hypothesis moments, the
minimum-probability-of-error decision with the H0 guard, and one step of
the cross-validation sparsity update
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

try:
    from decoder import DecodeError, SolverConfig, decode, truncate
    from measurement import (BackgroundCalibration, CrossValidationMatrix, MeasurementEnsemble,
                             cv_foreground, cv_row_count, foreground_measurements)
    from phase_diagram import LookupPolicy, PhaseDiagram, lookup_or_clamp
    from signal_model import threshold_count
except ImportError:
    from src.decoder import DecodeError, SolverConfig, decode, truncate
    from src.measurement import (BackgroundCalibration, CrossValidationMatrix, MeasurementEnsemble,
                                 cv_foreground, cv_row_count, foreground_measurements)
    from src.phase_diagram import LookupPolicy, PhaseDiagram, lookup_or_clamp
    from src.signal_model import threshold_count


@dataclass(frozen=True)
class CvConfig:
    epsilon: float
    rho: float
    rows: int
    tau: float
    sigma_b_sq: float
    ambient_dim: int

    def __post_init__(self):
        required = cv_row_count(self.epsilon, self.rho)
        if self.rows < required:
            raise ValueError(f"r = {self.rows} is below the required {required} rows "
                             f"for epsilon={self.epsilon}, rho={self.rho}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.sigma_b_sq < 0:
            raise ValueError("sigma_b_sq must be non-negative")
        if self.ambient_dim < 1:
            raise ValueError("ambient_dim must be positive")

    @classmethod
    def with_minimum_rows(cls, epsilon: float, rho: float, tau: float, sigma_b_sq: float,
                          ambient_dim: int) -> 'CvConfig':
        return cls(epsilon, rho, cv_row_count(epsilon, rho), tau, sigma_b_sq, ambient_dim)


def null_moments(s_hat: int, ambient_dim: int, sigma_b_sq: float) -> Tuple[float, float]:
    """(μ0, σ0²) of e_ŝ(f)₂² when the ŝ retained entries capture the whole foreground"""
    if not 0 <= s_hat <= ambient_dim:
        raise ValueError(f"s_hat {s_hat} outside [0, {ambient_dim}]")
    neglected = ambient_dim - s_hat
    return neglected * sigma_b_sq, 2.0 * neglected * sigma_b_sq ** 2


def hypothesis_moment_arrays(k: np.ndarray, s_hat: int, ambient_dim: int, sigma_b_sq: float,
                             tau: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized (μ_k, σ_k²) for true sparsity k. k = ŝ reproduces the null moments.
    """
    k = np.asarray(k, dtype=np.float64)
    missed = k - s_hat
    background = ambient_dim - k
    c1 = (tau ** 2 + tau + 1.0) / 3.0
    c2 = (tau ** 4 + tau ** 3 + tau ** 2 + tau + 1.0) / 5.0
    mu = background * sigma_b_sq + missed * c1
    # Second moment minus μ_k²; the squared terms cancel in closed form
    sigma_sq = missed * (c2 - c1 ** 2) + 2.0 * background * sigma_b_sq ** 2
    return mu, sigma_sq


def alt_moments(k: int, s_hat: int, ambient_dim: int, sigma_b_sq: float, tau: float) -> Tuple[float, float]:
    """(μ_k, σ_k²) when the true sparsity k exceeds ŝ"""
    if not s_hat < k <= ambient_dim:
        raise ValueError(f"Alternative hypothesis needs s_hat < k <= n, got k={k}, s_hat={s_hat}")
    mu, sigma_sq = hypothesis_moment_arrays(np.array([k]), s_hat, ambient_dim, sigma_b_sq, tau)
    return float(mu[0]), float(sigma_sq[0])


@dataclass
class HypothesisMoments:
    s_hat: int
    mu0: float
    sigma0_sq: float
    k_values: np.ndarray
    mu: np.ndarray
    sigma_sq: np.ndarray

    @classmethod
    def build(cls, s_hat: int, ambient_dim: int, sigma_b_sq: float, tau: float) -> 'HypothesisMoments':
        mu0, sigma0_sq = null_moments(s_hat, ambient_dim, sigma_b_sq)
        k_values = np.arange(s_hat + 1, ambient_dim + 1)
        mu, sigma_sq = hypothesis_moment_arrays(k_values, s_hat, ambient_dim, sigma_b_sq, tau)
        return cls(s_hat, mu0, sigma0_sq, k_values, mu, sigma_sq)


def cv_error_bound(gamma_t: np.ndarray, psi: CrossValidationMatrix, f_hat: np.ndarray,
                   epsilon: float) -> float:
    """(1 + ε)²·‖γ_t − Ψ f̂‖₂²"""
    residual = np.asarray(gamma_t, dtype=np.float64) - psi.apply(f_hat)
    return float((1.0 + epsilon) ** 2 * np.dot(residual, residual))


def _normal_log_density(value: float, mu: np.ndarray, sigma_sq: np.ndarray) -> np.ndarray:
    log_density = np.full(mu.shape, -np.inf)
    positive = sigma_sq > 0
    log_density[positive] = (-0.5 * np.log(2.0 * np.pi * sigma_sq[positive])
                             - (value - mu[positive]) ** 2 / (2.0 * sigma_sq[positive]))
    return log_density


def select_hypothesis(bound_value: float, moments: HypothesisMoments) -> int:
    """
    k** ∈ {0} ∪ {ŝ+1..n}: 0 whenever the bound is below μ0, otherwise the
    normal-approximation maximum-likelihood hypothesis (equal priors).
    Zero-variance hypotheses only win on an exact mean match.
    """
    if bound_value < moments.mu0:
        return 0
    mu = np.concatenate([[moments.mu0], moments.mu])
    sigma_sq = np.concatenate([[moments.sigma0_sq], moments.sigma_sq])
    labels = np.concatenate([[0], moments.k_values])

    exact = np.flatnonzero((sigma_sq == 0) & (mu == bound_value))
    if exact.size:
        return int(labels[exact[0]])
    log_density = _normal_log_density(bound_value, mu, sigma_sq)
    if not np.any(np.isfinite(log_density)):
        return 0
    return int(labels[int(np.argmax(log_density))])


@dataclass
class CvControllerState:
    s_hat: int
    phase_diagram: PhaseDiagram
    policy: LookupPolicy
    config: CvConfig

    def __post_init__(self):
        if not 0 <= self.s_hat <= self.config.ambient_dim:
            raise ValueError(f"s_hat {self.s_hat} outside [0, {self.config.ambient_dim}]")

    def rows_for_current(self) -> int:
        return lookup_or_clamp(self.phase_diagram, self.s_hat, self.policy)


@dataclass
class StepResult:
    """Output of one controller step"""

    f_hat: np.ndarray
    s_hat_next: int
    rows_next: int
    diagnostics: Dict = field(default_factory=dict)
    error: Optional[str] = None


def arcs_cv_step(state: CvControllerState, y_t: np.ndarray, chi_t: np.ndarray,
                 calibration: BackgroundCalibration, ensemble: MeasurementEnsemble,
                 psi: CrossValidationMatrix, solver_config: Optional[SolverConfig] = None) -> StepResult:
    """
    One cross-validation step: form ξ_t and γ_t, decode and truncate to ŝ_t,
    bound the error, pick k** (or count |f| >= τ on the
    untruncated decode when k** = 0) and derive ŝ_{t+1} and M_{t+1}.

    Args:
        state: Controller state holding ŝ_t
        y_t: Measurements acquired with M_t rows
        chi_t: Cross-validation measurements
        calibration: Background calibration (β, ζ)
        ensemble: Measurement ensemble that produced y_t
        psi: Cross-validation matrix
        solver_config: Decoder configuration

    Returns:
        StepResult with f̂_t, ŝ_{t+1}, M_{t+1} and diagnostics
    """
    cfg = state.config
    n = cfg.ambient_dim
    rows = len(y_t)
    op = ensemble.operator(rows)
    xi = foreground_measurements(y_t, calibration, rows)
    gamma = cv_foreground(chi_t, calibration)

    try:
        result = decode(xi, op, solver_config)
    except DecodeError as e:
        s_next = min(2 * max(state.s_hat, 1), n)
        return StepResult(f_hat=np.zeros(n), s_hat_next=s_next,
                          rows_next=lookup_or_clamp(state.phase_diagram, s_next, state.policy),
                          diagnostics={'cv_bound': math.nan, 'k_star_star': -1,
                                       'decode_iters': e.result.iterations if e.result else 0},
                          error=str(e))

    f_hat = truncate(result.estimate, state.s_hat)
    bound = cv_error_bound(gamma, psi, f_hat, cfg.epsilon)
    moments = HypothesisMoments.build(state.s_hat, n, cfg.sigma_b_sq, cfg.tau)
    k_star_star = select_hypothesis(bound, moments)
    if k_star_star == 0:
        # counted on the untruncated decode so the estimate can grow past ŝ_t
        s_next = threshold_count(result.estimate, cfg.tau)
    else:
        s_next = k_star_star
    s_next = int(min(max(s_next, 0), n))

    return StepResult(f_hat=f_hat, s_hat_next=s_next,
                      rows_next=lookup_or_clamp(state.phase_diagram, s_next, state.policy),
                      diagnostics={'cv_bound': bound, 'k_star_star': k_star_star,
                                   'decode_iters': result.iterations})

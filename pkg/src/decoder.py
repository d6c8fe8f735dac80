#!/usr/bin/env python3
"""
Basis Pursuit Decoder
ℓ1 minimization subject to Φz = ξ (ADMM), truncation to the s largest
components and optimal s-sparse approximation errors
"""
import threading
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

try:
    from measurement import RowSubsetOperator
except ImportError:
    from src.measurement import RowSubsetOperator

FEASIBILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rules and ADMM parameters"""

    feasibility_tol: float = 1e-6
    max_iterations: int = 5000
    convergence_tol: float = 1e-9
    relative_tol: float = 1e-6
    rho: float = 1.0
    relaxation: float = 1.6

    def __post_init__(self):
        for name in ('feasibility_tol', 'max_iterations', 'convergence_tol', 'relative_tol', 'rho'):
            if getattr(self, name) <= 0:
                raise ValueError(f"SolverConfig.{name} must be positive")
        if not 0.0 < self.relaxation < 2.0:
            raise ValueError("SolverConfig.relaxation must lie in (0, 2)")

    @classmethod
    def from_dict(cls, data: Dict) -> 'SolverConfig':
        defaults = cls()
        return cls(feasibility_tol=float(data.get('feasibility_tol', defaults.feasibility_tol)),
                   max_iterations=int(data.get('max_iterations', defaults.max_iterations)),
                   convergence_tol=float(data.get('convergence_tol', defaults.convergence_tol)),
                   relative_tol=float(data.get('relative_tol', defaults.relative_tol)),
                   rho=float(data.get('rho', defaults.rho)),
                   relaxation=float(data.get('relaxation', defaults.relaxation)))


@dataclass
class DecodeResult:
    estimate: np.ndarray
    iterations: int
    feasibility_residual: float
    objective: float
    converged: bool = True


class DecodeError(RuntimeError):
    """Decode produced a non-finite or infeasible estimate"""

    def __init__(self, message: str, result: DecodeResult = None):
        super().__init__(message)
        self.result = result


class _AffineProjector:
    """Orthogonal projection onto {z : Az = b} from an SVD of A"""

    def __init__(self, matrix: np.ndarray):
        n = matrix.shape[1]
        u, singular, vt = np.linalg.svd(matrix, full_matrices=matrix.shape[0] < n)
        cutoff = singular[0] * max(matrix.shape) * np.finfo(float).eps * 10 if singular.size else 0.0
        rank = int(np.count_nonzero(singular > cutoff))
        self.rank = rank
        self.ambient_dim = n
        self._u = u[:, :rank]
        self._inv_singular = 1.0 / singular[:rank]
        self._row_basis = vt[:rank].T
        # Project with whichever of the row space / null space is thinner
        self._null_basis = vt[rank:].T if rank > n // 2 else None

    @property
    def is_full_rank(self) -> bool:
        return self.rank == self.ambient_dim

    def particular(self, b: np.ndarray) -> np.ndarray:
        """Minimum-norm solution A⁺b"""
        return self._row_basis @ (self._inv_singular * (self._u.T @ b))

    def project(self, z: np.ndarray, x0: np.ndarray) -> np.ndarray:
        if self._null_basis is not None:
            return self._null_basis @ (self._null_basis.T @ z) + x0
        return z - self._row_basis @ (self._row_basis.T @ z) + x0


_projector_lock = threading.Lock()
_projectors: Dict[Tuple[int, str, int, int], _AffineProjector] = {}


def _projector_for(op: RowSubsetOperator) -> _AffineProjector:
    ensemble = op.ensemble
    key = (id(ensemble), ensemble.kind, ensemble.seed, op.rows)
    with _projector_lock:
        projector = _projectors.get(key)
    if projector is None:
        projector = _AffineProjector(op.real_matrix)
        with _projector_lock:
            _projectors.setdefault(key, projector)
    return projector


def clear_projector_cache() -> None:
    with _projector_lock:
        _projectors.clear()


def soft_threshold(v: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def _feasibility(op: RowSubsetOperator, z: np.ndarray, xi: np.ndarray) -> float:
    return float(np.linalg.norm(op.apply(z) - xi) / max(np.linalg.norm(xi), FEASIBILITY_FLOOR))


def decode(xi: np.ndarray, op: RowSubsetOperator, cfg: SolverConfig = None) -> DecodeResult:
    """
    Basis pursuit: argmin ‖z‖₁ subject to Φ_t z = ξ.

    Complex measurements are handled as two real constraints per row; the
    estimate is real.

    Args:
        xi: Foreground measurements (length M_t)
        op: Row-subset operator that produced them
        cfg: Solver configuration

    Returns:
        DecodeResult; converged=False when max_iterations was reached

    Raises:
        ValueError: dimension mismatch
        DecodeError: non-finite or infeasible estimate
    """
    cfg = cfg or SolverConfig()
    xi = np.asarray(xi)
    if xi.shape != (op.rows,):
        raise ValueError(f"Dimension mismatch: operator has {op.rows} rows, got {xi.shape}")
    n = op.ambient_dim

    if not np.any(xi):
        return DecodeResult(np.zeros(n), 0, 0.0, 0.0, True)

    projector = _projector_for(op)
    x0 = projector.particular(op.to_real(xi))

    if projector.is_full_rank:
        return _finish(x0, 0, True, op, xi, cfg)

    # Penalty scaled to the data keeps decode(c·ξ) = c·decode(ξ)
    rho = cfg.rho / max(np.max(np.abs(x0)), FEASIBILITY_FLOOR)
    z = x0.copy()
    u = np.zeros(n)
    x = x0
    alpha = cfg.relaxation
    sqrt_n = np.sqrt(n)
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_iterations + 1):
        x = projector.project(z - u, x0)
        x_hat = alpha * x + (1.0 - alpha) * z
        z_old = z
        z = soft_threshold(x_hat + u, 1.0 / rho)
        u = u + x_hat - z

        primal = np.linalg.norm(x - z)
        dual = rho * np.linalg.norm(z - z_old)
        eps_primal = sqrt_n * cfg.convergence_tol + cfg.relative_tol * max(np.linalg.norm(x), np.linalg.norm(z))
        eps_dual = sqrt_n * cfg.convergence_tol + cfg.relative_tol * rho * np.linalg.norm(u)
        if primal <= eps_primal and dual <= eps_dual:
            converged = True
            break

        # Residual balancing; u is the scaled dual so it rescales with rho
        if iteration % 10 == 0:
            if primal > 10.0 * dual:
                rho *= 2.0
                u = u / 2.0
            elif dual > 10.0 * primal:
                rho /= 2.0
                u = u * 2.0

    return _finish(_polish(x, z, op, xi, projector, cfg), iteration, converged, op, xi, cfg)


def _polish(x: np.ndarray, z: np.ndarray, op: RowSubsetOperator, xi: np.ndarray,
            projector: _AffineProjector, cfg: SolverConfig) -> np.ndarray:
    """Least squares restricted to the support of z, kept only if feasible and no worse in ℓ1"""
    support = np.flatnonzero(z)
    if support.size == 0 or support.size >= projector.rank:
        return x
    b = op.to_real(xi)
    columns = op.real_matrix[:, support]
    weights = np.linalg.lstsq(columns, b, rcond=None)[0]
    candidate = np.zeros_like(x)
    candidate[support] = weights
    if not np.all(np.isfinite(candidate)) or _feasibility(op, candidate, xi) > cfg.feasibility_tol:
        return x
    if np.sum(np.abs(candidate)) > np.sum(np.abs(x)) * (1.0 + 1e-12):
        return x
    return candidate


def _finish(estimate: np.ndarray, iterations: int, converged: bool, op: RowSubsetOperator,
            xi: np.ndarray, cfg: SolverConfig) -> DecodeResult:
    residual = _feasibility(op, estimate, xi) if np.all(np.isfinite(estimate)) else float('inf')
    result = DecodeResult(estimate=estimate, iterations=iterations, feasibility_residual=residual,
                          objective=float(np.sum(np.abs(estimate))), converged=converged)
    if not np.isfinite(residual):
        raise DecodeError("Decoder produced a non-finite estimate", result)
    if residual > cfg.feasibility_tol:
        raise DecodeError(f"Feasibility residual {residual:.3e} exceeds {cfg.feasibility_tol:.1e}", result)
    return result


def truncate(z: np.ndarray, sparsity: int) -> np.ndarray:
    """
    Keep the `sparsity` largest-magnitude entries; ties go to the lowest index
    """
    z = np.asarray(z)
    if not 0 <= sparsity <= z.size:
        raise ValueError(f"Sparsity {sparsity} outside [0, {z.size}]")
    result = np.zeros_like(z)
    if sparsity == 0:
        return result
    keep = np.argsort(-np.abs(z), kind='stable')[:sparsity]
    result[keep] = z[keep]
    return result


def sparse_approx_error(f: np.ndarray, sparsity: int, p: int = 2) -> float:
    """e_s(f)_p = ‖f − truncate(f, s)‖_p for p in {1, 2}"""
    if p not in (1, 2):
        raise ValueError(f"Norm index must be 1 or 2, got {p}")
    residual = np.asarray(f) - truncate(f, sparsity)
    return float(np.linalg.norm(residual, ord=p))

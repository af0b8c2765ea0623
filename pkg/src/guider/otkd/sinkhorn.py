"""Entropy-regularized optimal transport via Sinkhorn scaling.

Two solvers compute the same fixed point: the linear form scales the kernel
``K = exp(-D / lam)`` directly, the log-domain form updates dual potentials
with log-sum-exp. The linear form switches to the log domain as soon as the
kernel or a scaling vector underflows.
"""

from dataclasses import dataclass

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike
from scipy.special import logsumexp

from ..config import SinkhornConfig
from ..protocols import FloatArray
from ..stats_tracker import TrainingStats

__all__ = ["TransportPlan", "marginal_residual", "sinkhorn"]


@dataclass(frozen=True, kw_only=True)
class TransportPlan:
    """Coupling matrix with solver diagnostics."""

    plan: FloatArray
    iterations: int
    marginal_residual: float
    converged: bool
    log_domain: bool

    @property
    def size(self) -> int:
        return int(self.plan.shape[0])


class _Underflow(Exception):
    pass


def marginal_residual(plan: FloatArray, a: FloatArray, b: FloatArray) -> float:
    """Largest absolute deviation of the row and column sums from their marginals."""
    return float(max(np.max(np.abs(plan.sum(axis=1) - a)), np.max(np.abs(plan.sum(axis=0) - b))))


def _validate(a: FloatArray, b: FloatArray, cost: FloatArray, cfg: SinkhornConfig) -> None:
    if cfg.lam <= 0.0:
        raise ValueError(f"Sinkhorn regularization must be positive, got {cfg.lam}")
    if cfg.tol <= 0.0 or cfg.max_iter <= 0:
        raise ValueError(f"Sinkhorn tol and max_iter must be positive, got tol={cfg.tol}, max_iter={cfg.max_iter}")
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise ValueError(f"Marginals must be non-empty vectors, got shapes {a.shape} and {b.shape}")
    if cost.shape != (a.size, b.size):
        raise ValueError(f"Cost matrix shape {cost.shape} does not match marginals ({a.size}, {b.size})")
    if np.any(a <= 0.0) or np.any(b <= 0.0):
        raise ValueError("Marginals must be strictly positive")
    if not np.all(np.isfinite(cost)):
        raise ValueError("Cost matrix contains non-finite entries")


def _solve_linear(a: FloatArray, b: FloatArray, cost: FloatArray, cfg: SinkhornConfig) -> tuple[FloatArray, int, float]:
    with np.errstate(under="ignore"):
        kernel = np.exp(-cost / cfg.lam)
    if not np.all(kernel > 0.0):
        raise _Underflow
    u = np.ones_like(a)
    v = np.ones_like(b)
    residual = np.inf
    iterations = 0
    with np.errstate(under="ignore", over="ignore", divide="ignore", invalid="ignore"):
        for iterations in range(1, cfg.max_iter + 1):
            u = a / (kernel @ v)
            v = b / (kernel.T @ u)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.all(u > 0.0) and np.all(v > 0.0)):
                raise _Underflow
            # Columns are exact after the v update; rows carry the residual.
            residual = float(np.max(np.abs(u * (kernel @ v) - a)))
            if residual <= cfg.tol:
                break
        plan = u[:, None] * kernel * v[None, :]
    if not np.all(np.isfinite(plan)):
        raise _Underflow
    return plan, iterations, residual


def _solve_log(a: FloatArray, b: FloatArray, cost: FloatArray, cfg: SinkhornConfig) -> tuple[FloatArray, int, float]:
    lam = cfg.lam
    log_a, log_b = np.log(a), np.log(b)
    f = np.zeros_like(a)
    g = np.zeros_like(b)
    residual = np.inf
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        f = lam * (log_a - logsumexp((g[None, :] - cost) / lam, axis=1))
        g = lam * (log_b - logsumexp((f[:, None] - cost) / lam, axis=0))
        row_sums = np.exp(logsumexp((f[:, None] + g[None, :] - cost) / lam, axis=1))
        residual = float(np.max(np.abs(row_sums - a)))
        if residual <= cfg.tol:
            break
    plan = np.exp((f[:, None] + g[None, :] - cost) / lam)
    return plan, iterations, residual


def sinkhorn(a: ArrayLike, b: ArrayLike, cost: ArrayLike, cfg: SinkhornConfig, stats: TrainingStats | None = None) -> TransportPlan:
    """Solve ``min <P, D> - lam H(P)`` subject to ``P 1 = a`` and ``P^T 1 = b``.

    Args:
        a: Row marginal (teacher), strictly positive.
        b: Column marginal (student), strictly positive.
        cost: ``len(a) x len(b)`` cost matrix.
        cfg: Regularization, iteration cap, tolerance and solver choice.
        stats: Counters for non-convergence and log-domain switches.

    Returns:
        The plan; ``converged`` is false when ``max_iter`` was reached first.

    """
    a_vec = np.asarray(a, dtype=np.float64)
    b_vec = np.asarray(b, dtype=np.float64)
    cost_mat = np.asarray(cost, dtype=np.float64)
    _validate(a_vec, b_vec, cost_mat, cfg)

    log_domain = cfg.log_domain
    if not log_domain:
        try:
            plan, iterations, _ = _solve_linear(a_vec, b_vec, cost_mat, cfg)
        except _Underflow:
            logger.debug(f"Sinkhorn kernel underflows at lambda={cfg.lam}; switching to the log domain")
            if stats is not None:
                stats.increment("log_domain_switches")
            log_domain = True
    if log_domain:
        plan, iterations, _ = _solve_log(a_vec, b_vec, cost_mat, cfg)

    residual = marginal_residual(plan, a_vec, b_vec)
    converged = residual <= cfg.tol
    if not converged:
        logger.warning(f"⚠️ Sinkhorn did not converge in {iterations} iterations (residual {residual:.3e}, lambda={cfg.lam})")
        if stats is not None:
            stats.increment("sinkhorn_nonconverged")
    return TransportPlan(plan=plan, iterations=iterations, marginal_residual=residual, converged=converged, log_domain=log_domain)

"""Optimal-transport knowledge distillation."""

from .distill import (
    CostMatrix,
    DistillationResult,
    LogitsBatch,
    SimplexVector,
    cost_matrix,
    distill,
    kd_grad_student,
    kd_grad_student_normalized,
    kd_loss,
    kd_parameter_grad,
    kl_divergence,
    kl_grad_student,
    pairwise_logits,
    to_simplex,
)
from .sinkhorn import TransportPlan, marginal_residual, sinkhorn

__all__ = [
    "CostMatrix",
    "DistillationResult",
    "LogitsBatch",
    "SimplexVector",
    "TransportPlan",
    "cost_matrix",
    "distill",
    "kd_grad_student",
    "kd_grad_student_normalized",
    "kd_loss",
    "kd_parameter_grad",
    "kl_divergence",
    "kl_grad_student",
    "marginal_residual",
    "pairwise_logits",
    "sinkhorn",
    "to_simplex",
]

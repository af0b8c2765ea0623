"""Distillation losses over pairwise-ranking logits.

Teacher and student score the same ``(u, i, j)`` triples; each logit is
``log sigma(s_ui - s_uj)``. The optimal-transport loss couples the softmaxed
logit distributions through a Sinkhorn plan and charges the squared logit
gap of every transported pair. The plan is held fixed when differentiating.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import expit, log_expit, log_softmax, softmax

from ..config import CostMode, KdKind, SinkhornConfig
from ..losses import pairwise_backward, pairwise_deltas
from ..protocols import FloatArray, Recommender
from ..sampling import Triples
from ..stats_tracker import TrainingStats
from ..workers import ChunkedPool
from .sinkhorn import TransportPlan, sinkhorn

__all__ = [
    "CostMatrix",
    "DistillationResult",
    "LogitsBatch",
    "SimplexVector",
    "cost_matrix",
    "distill",
    "kd_grad_student",
    "kd_grad_student_normalized",
    "kd_loss",
    "kd_parameter_grad",
    "kl_divergence",
    "kl_grad_student",
    "pairwise_logits",
    "to_simplex",
]

_SIMPLEX_TOL = 1e-10


@dataclass(frozen=True, kw_only=True)
class LogitsBatch:
    """One pairwise-ranking logit per sampled triple."""

    values: FloatArray
    triples: Triples | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2:
            raise ValueError(f"A logits batch needs at least two entries, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Logits must be finite")
        if self.triples is not None and len(self.triples) != values.size:
            raise ValueError(f"{values.size} logits for {len(self.triples)} triples")
        object.__setattr__(self, "values", values)

    @classmethod
    def of(cls, values: ArrayLike) -> "LogitsBatch":
        return cls(values=np.asarray(values, dtype=np.float64))

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, kw_only=True)
class SimplexVector:
    """Probability vector with its log, both from a stable softmax."""

    mass: FloatArray
    log_mass: FloatArray

    def __post_init__(self) -> None:
        if np.any(self.mass < 0.0) or abs(math.fsum(self.mass) - 1.0) > _SIMPLEX_TOL:
            raise ValueError("Simplex mass must be non-negative and sum to 1")


@dataclass(frozen=True, kw_only=True)
class CostMatrix:
    """Pairwise transport costs ``D[m, n]`` between teacher entry ``m`` and student entry ``n``."""

    matrix: FloatArray

    @property
    def shape(self) -> tuple[int, int]:
        rows, cols = self.matrix.shape
        return int(rows), int(cols)


@dataclass(frozen=True, kw_only=True)
class DistillationResult:
    """KD loss of one batch with its gradient on the student logits."""

    loss: float
    grad_logits: FloatArray
    plan: TransportPlan | None = None


def pairwise_logits(model: Recommender, triples: Triples) -> LogitsBatch:
    """``log sigma(s_ui - s_uj)`` for every triple."""
    if len(triples) == 0:
        raise ValueError("Cannot build logits from an empty triple list")
    return LogitsBatch(values=log_expit(pairwise_deltas(model, triples)), triples=triples)


def to_simplex(z: LogitsBatch) -> SimplexVector:
    """Softmax of the logits."""
    return SimplexVector(mass=softmax(z.values), log_mass=log_softmax(z.values))


def cost_matrix(z_t: LogitsBatch, z_s: LogitsBatch, mode: CostMode = CostMode.RAW) -> CostMatrix:
    """Squared differences of raw logits, or of their softmax masses when ``mode`` is normalized."""
    if len(z_t) != len(z_s):
        raise ValueError(f"Teacher and student batches differ in length: {len(z_t)} vs {len(z_s)}")
    if mode is CostMode.NORMALIZED:
        t, s = to_simplex(z_t).mass, to_simplex(z_s).mass
    else:
        t, s = z_t.values, z_s.values
    return CostMatrix(matrix=np.square(t[:, None] - s[None, :]))


def kd_loss(plan: TransportPlan | FloatArray, cost: CostMatrix) -> float:
    """Frobenius inner product of the plan and the cost matrix."""
    matrix = plan.plan if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    if matrix.shape != cost.shape:
        raise ValueError(f"Plan shape {matrix.shape} does not match cost shape {cost.shape}")
    return math.fsum((matrix * cost.matrix).ravel())


def kd_grad_student(plan: TransportPlan | FloatArray, z_t: LogitsBatch, z_s: LogitsBatch) -> FloatArray:
    """Gradient of ``<P, D(z_s)>`` in the student logits with ``P`` frozen."""
    matrix = plan.plan if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    return 2.0 * (matrix.sum(axis=0) * z_s.values - matrix.T @ z_t.values)


def kd_grad_student_normalized(plan: TransportPlan | FloatArray, z_t: LogitsBatch, z_s: LogitsBatch) -> FloatArray:
    """Frozen-plan gradient when the cost is built on softmax masses."""
    matrix = plan.plan if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    a, b = to_simplex(z_t).mass, to_simplex(z_s).mass
    grad_mass = 2.0 * (matrix.sum(axis=0) * b - matrix.T @ a)
    # softmax Jacobian-vector product
    return b * (grad_mass - b @ grad_mass)


def kl_divergence(a: SimplexVector, b: SimplexVector) -> float:
    """``sum a log(a / b)``."""
    return math.fsum((a.mass * (a.log_mass - b.log_mass)).ravel())


def kl_grad_student(a: SimplexVector, b: SimplexVector) -> FloatArray:
    """Gradient of ``KL(a || softmax(z_s))`` in the student logits."""
    return b.mass - a.mass


def distill(
    z_t: LogitsBatch,
    z_s: LogitsBatch,
    *,
    kind: KdKind,
    cost_mode: CostMode = CostMode.RAW,
    cfg: SinkhornConfig | None = None,
    stats: TrainingStats | None = None,
) -> DistillationResult:
    """KD loss and student-logit gradient for one batch.

    Args:
        z_t: Teacher logits.
        z_s: Student logits on the same triples.
        kind: ``ot``, ``kl`` or ``none``.
        cost_mode: Raw or softmax-normalized transport cost.
        cfg: Sinkhorn settings (``ot`` only).
        stats: Solver warning counters.

    Returns:
        The batch result; ``none`` yields a zero loss and gradient.

    """
    if kind is KdKind.NONE:
        return DistillationResult(loss=0.0, grad_logits=np.zeros(len(z_s)))
    a, b = to_simplex(z_t), to_simplex(z_s)
    if kind is KdKind.KL:
        return DistillationResult(loss=kl_divergence(a, b), grad_logits=kl_grad_student(a, b))

    cost = cost_matrix(z_t, z_s, cost_mode)
    plan = sinkhorn(a.mass, b.mass, cost.matrix, cfg or SinkhornConfig(), stats)
    grad = kd_grad_student_normalized(plan, z_t, z_s) if cost_mode is CostMode.NORMALIZED else kd_grad_student(plan, z_t, z_s)
    return DistillationResult(loss=kd_loss(plan, cost), grad_logits=grad, plan=plan)


def kd_parameter_grad(model: Recommender, triples: Triples, grad_logits: FloatArray, *, pool: ChunkedPool | None = None) -> dict[str, FloatArray]:
    """Chain a student-logit gradient through ``log sigma`` into the model's parameters."""
    delta = pairwise_deltas(model, triples)
    return pairwise_backward(model, triples, grad_logits * expit(-delta), pool=pool)

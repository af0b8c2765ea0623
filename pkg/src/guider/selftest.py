"""Numerical self-test: Sinkhorn against exact oracles, gradients against finite differences, AMSC invariants."""

import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from loguru import logger
from scipy.optimize import linprog
from scipy.special import log_expit

from .amsc import HashProjector, ModalSimilarity, combined_similarity, run_amsc
from .config import CostMode, SinkhornConfig, SynthConfig
from .data.features import ModalFeatureTable, Modality
from .data.split import inject_noise, split_per_user
from .data.synthetic import generate_synthetic
from .losses import LossValue, dbpr_loss, pointwise_loss
from .models import ModelKind, ModelShape, init_model
from .otkd.distill import CostMatrix, LogitsBatch, cost_matrix, kd_grad_student, kd_grad_student_normalized, kd_loss, to_simplex
from .otkd.sinkhorn import TransportPlan, marginal_residual, sinkhorn
from .partition import PartitionInvariantError, UserPartition
from .protocols import FloatArray, Recommender
from .sampling import TripleSampler

__all__ = ["CheckResult", "SelfTestReport", "lp_oracle_cost", "run_selftest"]

FEASIBILITY_TOL = 1e-8
FD_EPS = 1e-5
FD_REL_TOL = 1e-5
KD_FD_TOL = 1e-6
LP_REL_TOL = 0.01
LP_ABS_TOL = 2e-3
MODE_AGREEMENT_TOL = 1e-8
SYMMETRY_TOL = 1e-8

# Solver settings of the self-test; stricter than the training defaults.
DEFAULT_SELFTEST_SINKHORN = SinkhornConfig(lam=0.1, max_iter=20_000, tol=1e-10, log_domain=True)


@dataclass(frozen=True, kw_only=True)
class CheckResult:
    """Outcome of one check: the worst observed value against its threshold."""

    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "value": self.value, "threshold": self.threshold, "detail": self.detail}


@dataclass(kw_only=True)
class SelfTestReport:
    """All checks plus the per-case Sinkhorn oracle table."""

    checks: list[CheckResult] = field(default_factory=lambda: list[CheckResult]())
    sinkhorn_cases: list[dict[str, Any]] = field(default_factory=lambda: list[dict[str, Any]]())

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def add(self, name: str, value: float, threshold: float, *, passed: bool | None = None, detail: str = "") -> CheckResult:
        ok = (math.isfinite(value) and value <= threshold) if passed is None else passed
        result = CheckResult(name=name, passed=ok, value=value, threshold=threshold, detail=detail)
        self.checks.append(result)
        logger.log("SUCCESS" if ok else "ERROR", f"{'✅' if ok else '❌'} {name}: {value:.3e} (threshold {threshold:.1e}) {detail}".rstrip())
        return result

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "failed": self.failed,
            "checks": [c.to_dict() for c in self.checks],
            "sinkhorn": self.sinkhorn_cases,
        }


def lp_oracle_cost(a: FloatArray, b: FloatArray, cost: FloatArray) -> float:
    """Exact unregularized transport cost from the HiGHS linear-program solver."""
    rows, cols = cost.shape
    row_sums = np.kron(np.eye(rows), np.ones(cols))
    col_sums = np.kron(np.ones(rows), np.eye(cols))
    result = linprog(cost.ravel(), A_eq=np.vstack([row_sums, col_sums]), b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if not result.success:
        raise RuntimeError(f"LP oracle failed: {result.message}")
    return float(result.fun)


def _random_instance(rng: np.random.Generator, size: int, scale: float = 2.0) -> tuple[LogitsBatch, LogitsBatch]:
    # Logits as the trainers produce them: log sigma of score gaps.
    z_t = LogitsBatch.of(log_expit(scale * rng.standard_normal(size)))
    z_s = LogitsBatch.of(log_expit(scale * rng.standard_normal(size)))
    return z_t, z_s


def _solve(z_t: LogitsBatch, z_s: LogitsBatch, cfg: SinkhornConfig) -> tuple[TransportPlan, FloatArray, FloatArray, FloatArray]:
    a, b = to_simplex(z_t).mass, to_simplex(z_s).mass
    cost = cost_matrix(z_t, z_s).matrix
    return sinkhorn(a, b, cost, cfg), a, b, cost


def _case_row(cfg: SinkhornConfig, plan: TransportPlan, cost: FloatArray, lp_cost: float | None) -> dict[str, Any]:
    return {
        "lambda": cfg.lam,
        "B": plan.size,
        "iterations": plan.iterations,
        "residual": plan.marginal_residual,
        "cost": kd_loss(plan, CostMatrix(matrix=cost)),
        "lp_oracle_cost": lp_cost,
    }


def check_sinkhorn_oracles(report: SelfTestReport, cfg: SinkhornConfig, rng: np.random.Generator) -> None:
    """Closed-form, LP and regularization-path checks of the transport solver."""
    single = sinkhorn(np.ones(1), np.ones(1), np.array([[3.0]]), cfg)
    report.sinkhorn_cases.append(_case_row(cfg, single, np.array([[3.0]]), 3.0))
    _ = report.add("sinkhorn.single_entry", abs(float(single.plan[0, 0]) - 1.0), FEASIBILITY_TOL)

    # Uniform 2x2 swap cost: the entropic plan is diag p, off-diagonal 1/2 - p with p = 1 / (2 (1 + e^(-1/lam))).
    two_cfg = replace(cfg, lam=0.1)
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    half = np.full(2, 0.5)
    two = sinkhorn(half, half, swap, two_cfg)
    p = 0.5 / (1.0 + math.exp(-1.0 / two_cfg.lam))
    expected = np.array([[p, 0.5 - p], [0.5 - p, p]])
    report.sinkhorn_cases.append(_case_row(two_cfg, two, swap, lp_oracle_cost(half, half, swap)))
    _ = report.add("sinkhorn.closed_form_2x2", float(np.max(np.abs(two.plan - expected))), 1e-10)

    lp_errors: list[float] = []
    for _ in range(20):
        small_cfg = replace(cfg, lam=1e-3)
        third = np.full(3, 1.0 / 3.0)
        cost = rng.uniform(0.0, 1.0, size=(3, 3))
        plan = sinkhorn(third, third, cost, small_cfg)
        exact = lp_oracle_cost(third, third, cost)
        entropic = float(np.sum(plan.plan * cost))
        report.sinkhorn_cases.append(_case_row(small_cfg, plan, cost, exact))
        below = max(0.0, exact - entropic - FEASIBILITY_TOL)
        lp_errors.append(below + max(0.0, entropic - exact - (LP_REL_TOL * exact + LP_ABS_TOL)))
    _ = report.add("sinkhorn.lp_oracle_agreement", max(lp_errors), 0.0, passed=max(lp_errors) == 0.0, detail="excess over 1% of the exact LP cost")

    third = np.full(3, 1.0 / 3.0)
    cost = rng.uniform(0.0, 1.0, size=(3, 3))
    exact = lp_oracle_cost(third, third, cost)
    path = [float(np.sum(sinkhorn(third, third, cost, replace(cfg, lam=lam)).plan * cost)) for lam in (1.0, 0.1, 0.01, 0.001)]
    rises = [max(0.0, later - earlier) for earlier, later in zip(path, path[1:], strict=False)]
    undershoot = max(0.0, exact - min(path))
    _ = report.add("sinkhorn.monotone_regularization", max([*rises, undershoot]), 1e-7, detail=f"path {', '.join(f'{c:.5f}' for c in path)} vs LP {exact:.5f}")


def check_sinkhorn_feasibility(report: SelfTestReport, cfg: SinkhornConfig, rng: np.random.Generator) -> None:
    """Marginal residuals of random instances across sizes and regularizations."""
    worst = 0.0
    worst_case = ""
    for size in (4, 16, 64):
        for lam in (0.01, 0.1, 1.0):
            case_cfg = replace(cfg, lam=lam)
            for _ in range(3):
                a, b = rng.dirichlet(np.ones(size)), rng.dirichlet(np.ones(size))
                cost = rng.uniform(0.0, 1.0, size=(size, size))
                plan = sinkhorn(a, b, cost, case_cfg)
                residual = marginal_residual(plan.plan, a, b)
                if plan.plan.min() < 0.0:
                    residual = math.inf
                if residual > worst or not math.isfinite(residual):
                    worst, worst_case = residual, f"B={size} lambda={lam}"
            report.sinkhorn_cases.append(_case_row(case_cfg, plan, cost, None))
    _ = report.add("sinkhorn.marginal_feasibility", worst, FEASIBILITY_TOL, detail=worst_case)


def check_sinkhorn_properties(report: SelfTestReport, cfg: SinkhornConfig, rng: np.random.Generator) -> None:
    """Symmetry of the distance, linear/log agreement and self-distance."""
    gaps: list[float] = []
    for _ in range(50):
        z_a, z_b = _random_instance(rng, 8)
        forward, _, _, cost_ab = _solve(z_a, z_b, cfg)
        backward, _, _, cost_ba = _solve(z_b, z_a, cfg)
        gaps.append(abs(float(np.sum(forward.plan * cost_ab)) - float(np.sum(backward.plan * cost_ba))))
    _ = report.add("sinkhorn.symmetry", max(gaps), SYMMETRY_TOL)

    agreement: list[float] = []
    for lam in (0.1, 1.0):
        z_t, z_s = _random_instance(rng, 16)
        linear, _, _, _ = _solve(z_t, z_s, replace(cfg, lam=lam, log_domain=False))
        logged, _, _, _ = _solve(z_t, z_s, replace(cfg, lam=lam, log_domain=True))
        if not linear.log_domain:
            agreement.append(float(np.max(np.abs(linear.plan - logged.plan))))
    _ = report.add("sinkhorn.linear_log_agreement", max(agreement, default=0.0), MODE_AGREEMENT_TOL)

    self_costs: list[float] = []
    for size in (2, 3, 4, 5):
        z, _ = _random_instance(rng, size)
        plan, _, _, cost = _solve(z, z, replace(cfg, lam=1e-3))
        self_costs.append(float(np.sum(plan.plan * cost)))
    _ = report.add("sinkhorn.self_distance", max(self_costs), 1e-3)


def _fd_error(model: Recommender, loss_fn: Callable[[], LossValue], rng: np.random.Generator, n_coords: int = 6) -> float:
    """Worst relative error (unit floor) between analytic and central-difference gradients."""
    model.invalidate()
    analytic = loss_fn().grad
    worst = 0.0
    for name, block in model.params.items():
        for _ in range(n_coords):
            index = tuple(int(rng.integers(0, n)) for n in block.shape)
            original = float(block[index])
            block[index] = original + FD_EPS
            model.invalidate()
            plus = loss_fn().value
            block[index] = original - FD_EPS
            model.invalidate()
            minus = loss_fn().value
            block[index] = original
            model.invalidate()
            numeric = (plus - minus) / (2.0 * FD_EPS)
            exact = float(analytic[name][index])
            worst = max(worst, abs(exact - numeric) / max(1.0, abs(exact), abs(numeric)))
    return worst


def _tiny_features(rng: np.random.Generator, n_items: int) -> tuple[ModalFeatureTable, ModalFeatureTable]:
    text = ModalFeatureTable(modality=Modality.TEXT, matrix=rng.standard_normal((n_items, 5)))
    vision = ModalFeatureTable(modality=Modality.VISION, matrix=rng.standard_normal((n_items, 4)))
    return text, vision


def check_gradients(report: SelfTestReport, rng: np.random.Generator) -> None:
    """DBPR and BCE parameter gradients on small teacher and student instances, KD logit gradients."""
    corpus = generate_synthetic(SynthConfig(n_users=12, n_items=15, n_clusters=3, interactions_per_user=5, text_dim=5, vision_dim=4), seed=int(rng.integers(0, 2**31)))
    train = corpus.dataset
    sampler = TripleSampler(train)
    text, vision = _tiny_features(rng, train.n_items)

    dbpr_worst = 0.0
    bce_worst = 0.0
    for instance in range(20):
        kind = ModelKind.TEACHER if instance % 2 == 0 else ModelKind.STUDENT
        shape = ModelShape(n_users=train.n_users, n_items=train.n_items, d=8, n_layers=instance % 3 if kind is ModelKind.TEACHER else 0)
        model = init_model(kind, shape, seed=instance, train=train, text=text, vision=vision)
        partitions = {
            u: UserPartition(user=u, reliable=items[:2], spurious=items[2:], true_set=items[:3], false_set=items[3:])
            for u, items in train.per_user_items.items()
        }
        draw_seed = int(rng.integers(0, 2**31))
        dbpr_worst = max(dbpr_worst, _fd_error(model, lambda m=model, s=draw_seed: dbpr_loss(m, partitions, sampler, 16, np.random.default_rng(s)), rng))
        batch = sampler.pointwise_epoch(16, np.random.default_rng(draw_seed))[0]
        bce_worst = max(bce_worst, _fd_error(model, lambda m=model, b=batch: pointwise_loss(m, b), rng))
    _ = report.add("gradients.dbpr", dbpr_worst, FD_REL_TOL)
    _ = report.add("gradients.bce", bce_worst, FD_REL_TOL)

    kd_worst = 0.0
    for mode in (CostMode.RAW, CostMode.NORMALIZED):
        for _ in range(10):
            z_t, z_s = _random_instance(rng, 6)
            plan, _, _, _ = _solve(z_t, z_s, SinkhornConfig(lam=0.5, max_iter=2000, tol=1e-12))
            grad_fn = kd_grad_student_normalized if mode is CostMode.NORMALIZED else kd_grad_student
            analytic = grad_fn(plan, z_t, z_s)
            for n in range(len(z_s)):
                shift = np.zeros(len(z_s))
                shift[n] = FD_EPS
                plus = kd_loss(plan, cost_matrix(z_t, LogitsBatch.of(z_s.values + shift), mode))
                minus = kd_loss(plan, cost_matrix(z_t, LogitsBatch.of(z_s.values - shift), mode))
                numeric = (plus - minus) / (2.0 * FD_EPS)
                kd_worst = max(kd_worst, abs(float(analytic[n]) - numeric) / max(1.0, abs(numeric)))
    _ = report.add("gradients.kd_frozen_plan", kd_worst, KD_FD_TOL)


def _brute_force_calibration(
    reliable: tuple[int, ...], spurious: tuple[int, ...], proj: HashProjector, text: ModalFeatureTable, vision: ModalFeatureTable, s_thres: float
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    rescued = [i for i in spurious if any(combined_similarity(i, r, proj, text, vision) > s_thres for r in reliable)]
    true_set = tuple(sorted([*reliable, *rescued]))
    false_set = tuple(sorted(set(spurious) - set(rescued)))
    return true_set, false_set


def check_amsc(report: SelfTestReport, rng: np.random.Generator) -> None:
    """Calibration against a double-loop oracle, partition invariants of a noisy run, hash properties."""
    n_items = 40
    text, vision = _tiny_features(rng, n_items)
    proj = HashProjector(32, text.dim, vision.dim, seed=int(rng.integers(0, 2**31)))
    similarity = ModalSimilarity(proj, text, vision)
    mismatches = 0
    for _ in range(100):
        items = rng.permutation(n_items)[: int(rng.integers(2, 12))]
        cut = int(rng.integers(1, items.size))
        reliable = tuple(sorted(int(i) for i in items[:cut]))
        spurious = tuple(sorted(int(i) for i in items[cut:]))
        s_thres = float(rng.uniform(-0.2, 0.9))
        if similarity.calibrate(reliable, spurious, s_thres) != _brute_force_calibration(reliable, spurious, proj, text, vision, s_thres):
            mismatches += 1
    _ = report.add("amsc.calibration_oracle", float(mismatches), 0.0, detail="mismatching users of 100")

    confidences = similarity.confidences
    out_of_range = float(max(0.0, np.max(np.abs(confidences)) - 1.0))
    rescaled = ModalSimilarity(proj, ModalFeatureTable(modality=Modality.TEXT, matrix=3.0 * text.matrix), vision)
    drift = float(np.max(np.abs(rescaled.confidences - confidences)))
    _ = report.add("amsc.confidence_range", out_of_range, 0.0)
    _ = report.add("amsc.hash_scale_invariance", drift, 0.0)

    cfg = SynthConfig(n_users=40, n_items=30, n_clusters=3, interactions_per_user=6, text_dim=6, vision_dim=6)
    corpus = generate_synthetic(cfg, seed=int(rng.integers(0, 2**31)))
    split = split_per_user(corpus.dataset, (8, 1, 1), seed=1)
    noisy, _ = inject_noise(split, 0.1, seed=2)
    teacher = init_model(ModelKind.TEACHER, ModelShape(n_users=noisy.n_users, n_items=noisy.n_items, d=8, n_layers=1), seed=3, train=noisy.train)
    partitions = run_amsc(teacher, noisy.train, ModalSimilarity(HashProjector(16, cfg.text_dim, cfg.vision_dim, seed=4), corpus.text, corpus.vision), 0.5)
    violations = 0
    for user, partition in partitions.items():
        try:
            partition.check(noisy.train.items_of(user))
        except PartitionInvariantError as e:
            violations += 1
            logger.error(f"❌ {e}")
    missing = len({u for u, items in noisy.train.per_user_items.items() if items} - set(partitions))
    _ = report.add("amsc.partition_invariants", float(violations + missing), 0.0, detail=f"{len(partitions)} users")


def run_selftest(cfg: SinkhornConfig | None = None, *, seed: int = 0) -> SelfTestReport:
    """Run every check.

    Args:
        cfg: Solver settings for the Sinkhorn checks; the regularization is
            set per case. A loose ``tol`` makes the feasibility checks fail.
        seed: Seed of every random instance.

    Returns:
        The report; ``report.passed`` is the overall verdict.

    """
    solver = cfg or DEFAULT_SELFTEST_SINKHORN
    report = SelfTestReport()
    rng = np.random.default_rng(seed)
    logger.info(f"🚀 Self-test (tol={solver.tol:g}, max_iter={solver.max_iter}, seed={seed})")
    check_sinkhorn_oracles(report, solver, rng)
    check_sinkhorn_feasibility(report, solver, rng)
    check_sinkhorn_properties(report, solver, rng)
    check_gradients(report, rng)
    check_amsc(report, rng)
    if report.passed:
        logger.info(f"✅ All {len(report.checks)} self-test checks passed")
    else:
        logger.error(f"Self-test failed: {', '.join(report.failed)}")
    return report


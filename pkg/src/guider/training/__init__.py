"""Teacher and student training loops and the end-to-end pipeline."""

from .denoise import DenoisingTrainer, train_teacher
from .distillation import DistillationTrainer, StudentLoss, kd_triples, student_batch_loss, train_student
from .early_stopping import EarlyStopping
from .loop import EpochLosses, EpochTrainer
from .optimizer import AdamW, NonFiniteGradientError, OptimizerState, adamw_step
from .pipeline import PreparedData, RunResult, StageError, load_data, run_experiments, run_guider, stage, with_noise
from .report import EpochRecord, TrainReport

__all__ = [
    "AdamW",
    "DenoisingTrainer",
    "DistillationTrainer",
    "EarlyStopping",
    "EpochLosses",
    "EpochRecord",
    "EpochTrainer",
    "NonFiniteGradientError",
    "OptimizerState",
    "PreparedData",
    "RunResult",
    "StageError",
    "StudentLoss",
    "TrainReport",
    "adamw_step",
    "kd_triples",
    "load_data",
    "run_experiments",
    "run_guider",
    "stage",
    "student_batch_loss",
    "train_student",
    "train_teacher",
    "with_noise",
]

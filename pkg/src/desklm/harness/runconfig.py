"""Run configuration: one record wiring model, schedule, strategies, and paths.

Config files are UTF-8 JSON mirroring this structure section by section.
Fine-tuning presets are constrained to the published grid (lr in
{8e-6, 1e-5, 2e-5, 3e-5}, batch in {16, 24, 32}, epochs in [2, 5]) unless
allow_off_grid is set.
"""

import json
from dataclasses import dataclass, field

from ..errors import ConfigError
from ..finetune import StrategyConfig, TaskSpec
from ..model.config import ModelConfig
from ..pretrain import PretrainLossWeights, TrainingSchedule

__all__ = [
    "RunConfig",
    "FinetuneParams",
    "FINETUNE_LR_GRID",
    "FINETUNE_BATCH_GRID",
    "FINETUNE_EPOCH_RANGE",
]

MODES = ("pretrain", "finetune", "verify", "corpus")
FINETUNE_LR_GRID = (8e-6, 1e-5, 2e-5, 3e-5)
FINETUNE_BATCH_GRID = (16, 24, 32)
FINETUNE_EPOCH_RANGE = (2, 5)


@dataclass(frozen=True)
class FinetuneParams:
    lr: float = 2e-5
    batch_size: int = 16
    epochs: int = 3

    def validate(self, allow_off_grid: bool) -> None:
        if allow_off_grid:
            if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1:
                raise ConfigError("off-grid fine-tune params must still be positive")
            return
        if self.lr not in FINETUNE_LR_GRID:
            raise ConfigError(f"lr {self.lr} not in the preset grid {FINETUNE_LR_GRID}; "
                              "set allow_off_grid to override")
        if self.batch_size not in FINETUNE_BATCH_GRID:
            raise ConfigError(f"batch_size {self.batch_size} not in {FINETUNE_BATCH_GRID}; "
                              "set allow_off_grid to override")
        lo, hi = FINETUNE_EPOCH_RANGE
        if not lo <= self.epochs <= hi:
            raise ConfigError(f"epochs {self.epochs} outside [{lo}, {hi}]; "
                              "set allow_off_grid to override")


@dataclass
class RunConfig:
    mode: str
    model: ModelConfig
    schedule: TrainingSchedule | None = None
    strategies: StrategyConfig = field(default_factory=StrategyConfig)
    seed: int = 0
    paths: dict = field(default_factory=dict)
    loss_weights: PretrainLossWeights = field(default_factory=PretrainLossWeights)
    finetune: FinetuneParams = field(default_factory=FinetuneParams)
    task: TaskSpec | None = None
    lr_peak: float = 2e-2
    weight_decay: float = 0.01
    grad_transform: str = "identity"
    eval_every: int = 100
    eval_batch_rows: int = 16
    allow_off_grid: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.lr_peak <= 0:
            raise ConfigError(f"lr_peak must be positive, got {self.lr_peak}")
        if self.mode == "pretrain" and self.schedule is None:
            raise ConfigError("pretrain mode needs a schedule section")
        if self.mode == "finetune":
            self.finetune.validate(self.allow_off_grid)
            if self.task is None:
                raise ConfigError("finetune mode needs a task section")

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "model": self.model.to_dict(),
            "strategies": self.strategies.to_dict(),
            "seed": self.seed,
            "paths": dict(self.paths),
            "loss_weights": self.loss_weights.as_dict(),
            "finetune": vars(self.finetune).copy(),
            "lr_peak": self.lr_peak,
            "weight_decay": self.weight_decay,
            "grad_transform": self.grad_transform,
            "eval_every": self.eval_every,
            "eval_batch_rows": self.eval_batch_rows,
            "allow_off_grid": self.allow_off_grid,
        }
        if self.schedule is not None:
            out["schedule"] = self.schedule.to_dict()
        if self.task is not None:
            out["task"] = {k: v for k, v in vars(self.task).items() if v is not None}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        kwargs = {
            "mode": d["mode"],
            "model": ModelConfig.from_dict(d["model"]),
            "seed": d.get("seed", 0),
            "paths": dict(d.get("paths", {})),
        }
        if "schedule" in d:
            kwargs["schedule"] = TrainingSchedule.from_dict(d["schedule"])
        if "strategies" in d:
            kwargs["strategies"] = StrategyConfig.from_dict(d["strategies"])
        if "loss_weights" in d:
            kwargs["loss_weights"] = PretrainLossWeights(**d["loss_weights"])
        if "finetune" in d:
            kwargs["finetune"] = FinetuneParams(**d["finetune"])
        if "task" in d:
            kwargs["task"] = TaskSpec(**d["task"])
        for key in ("lr_peak", "weight_decay", "grad_transform", "eval_every",
                    "eval_batch_rows", "allow_off_grid"):
            if key in d:
                kwargs[key] = d[key]
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

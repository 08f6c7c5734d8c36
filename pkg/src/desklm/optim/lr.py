"""Linear warmup / linear decay learning-rate schedule.

The rate climbs 0 -> peak over the first ``warmup_fraction`` of the budget and
decays linearly to 0 at ``total_steps``.  At an integral warmup boundary the
peak is attained exactly.
"""

from dataclasses import dataclass

from ..errors import ConfigError, ContractError

__all__ = ["LrSchedule", "lr_at"]


@dataclass(frozen=True)
class LrSchedule:
    peak: float
    total_steps: int
    warmup_fraction: float = 0.1

    def __post_init__(self):
        if self.peak < 0:
            raise ConfigError(f"peak must be nonnegative, got {self.peak}")
        if self.total_steps <= 0:
            raise ConfigError(f"total_steps must be positive, got {self.total_steps}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError(f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}")


def lr_at(step: int, schedule: LrSchedule) -> float:
    if not 0 <= step <= schedule.total_steps:
        raise ContractError(f"step {step} outside [0, {schedule.total_steps}]")
    warmup = schedule.warmup_fraction * schedule.total_steps
    if warmup > 0 and step < warmup:
        return schedule.peak * (step / warmup)
    return schedule.peak * (schedule.total_steps - step) / (schedule.total_steps - warmup)

"""Adaptive ensembling factor: cosine annealing scaled by the loss ratio.

beta_raw(t) = (1 + cos(pi * t / (2 T))) / (2 * gamma)
              * (L_train + L_zero_shot) / L_zero_shot

beta is beta_raw clamped into [clamp_lo, clamp_hi].  Raw values above 1
would extrapolate past the zero-shot anchor, so the default clamp is
[0, 1]; beta_raw is always recorded so the clamp can be audited.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import NumericError


@dataclass(frozen=True)
class AdaptiveFactorConfig:
    gamma: float = 5.0
    total_epochs: int = 10
    clamp_lo: float = 0.0
    clamp_hi: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise NumericError(f"gamma must be positive, got {self.gamma}")
        if self.total_epochs < 1:
            raise NumericError(f"total_epochs must be >= 1, got {self.total_epochs}")
        if not (0.0 <= self.clamp_lo <= self.clamp_hi <= 1.0):
            raise NumericError(
                f"clamp interval [{self.clamp_lo}, {self.clamp_hi}] must be nonempty within [0, 1]"
            )


def cosine_term(t: int, total_epochs: int) -> float:
    """Annealing factor (1 + cos(pi*t/(2T))) / 2; decreases from 1 to 0.5."""
    if total_epochs < 1:
        raise NumericError(f"total_epochs must be >= 1, got {total_epochs}")
    if not (0 <= t <= total_epochs):
        raise NumericError(f"epoch {t} outside [0, {total_epochs}]")
    return (1.0 + math.cos(math.pi * t / (2.0 * total_epochs))) / 2.0


def adaptive_factor(
    t: int,
    total_epochs: int,
    gamma: float,
    loss_train: float,
    loss_zero_shot: float,
    clamp: tuple[float, float] = (0.0, 1.0),
) -> tuple[float, float]:
    """Return (beta_raw, beta) for epoch t."""
    if gamma <= 0:
        raise NumericError(f"gamma must be positive, got {gamma}")
    if not (math.isfinite(loss_train) and math.isfinite(loss_zero_shot)):
        raise NumericError("losses must be finite")
    if loss_train < 0:
        raise NumericError(f"training loss must be nonnegative, got {loss_train}")
    if loss_zero_shot <= 0:
        raise NumericError(
            f"zero-shot loss must be strictly positive, got {loss_zero_shot}"
        )
    beta_raw = (
        cosine_term(t, total_epochs)
        / gamma
        * (loss_train + loss_zero_shot)
        / loss_zero_shot
    )
    lo, hi = clamp
    beta = min(hi, max(lo, beta_raw))
    return beta_raw, beta


@dataclass
class TraceRow:
    epoch: int
    loss_train: float
    loss_zero_shot: float
    beta_raw: float
    beta: float


@dataclass
class FactorTrace:
    """Append-only per-epoch record of losses and ensembling factors."""

    config: AdaptiveFactorConfig
    rows: list[TraceRow] = field(default_factory=list)

    def record(self, epoch: int, loss_train: float, loss_zero_shot: float) -> TraceRow:
        if self.rows and epoch != self.rows[-1].epoch + 1:
            raise NumericError(
                f"epochs must be consecutive; got {epoch} after {self.rows[-1].epoch}"
            )
        if not self.rows and epoch != 0:
            raise NumericError(f"trace must start at epoch 0, got {epoch}")
        beta_raw, beta = adaptive_factor(
            epoch,
            self.config.total_epochs,
            self.config.gamma,
            loss_train,
            loss_zero_shot,
            clamp=(self.config.clamp_lo, self.config.clamp_hi),
        )
        row = TraceRow(epoch, loss_train, loss_zero_shot, beta_raw, beta)
        self.rows.append(row)
        return row

    @property
    def betas(self) -> list[float]:
        return [row.beta for row in self.rows]

    def to_csv(self, path: str | Path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "L_train", "L_zero_shot", "beta_raw", "beta"])
            for row in self.rows:
                writer.writerow(
                    [row.epoch, row.loss_train, row.loss_zero_shot, row.beta_raw, row.beta]
                )

    @classmethod
    def from_csv(cls, path: str | Path, config: AdaptiveFactorConfig) -> "FactorTrace":
        trace = cls(config=config)
        with open(Path(path), newline="") as fh:
            for rec in csv.DictReader(fh):
                trace.rows.append(
                    TraceRow(
                        int(rec["epoch"]),
                        float(rec["L_train"]),
                        float(rec["L_zero_shot"]),
                        float(rec["beta_raw"]),
                        float(rec["beta"]),
                    )
                )
        return trace

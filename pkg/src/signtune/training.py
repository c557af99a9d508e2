"""Loss functions and the five fine-tuning strategy drivers.

Strategies: zero-shot (no training), linear probe, full fine-tune,
Wise-FT (post-hoc interpolation), and adaptive dynamic weight ensembling
(per-epoch interpolation toward the frozen zero-shot anchor with the
annealed, loss-scaled factor from the schedule module).

All training is plain SGD, single-threaded, and bit-deterministic for a
fixed seed.  The zero-shot anchor is captured before any update and is
never re-anchored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DataError, NormalizationError, NumericError
from .model import EncoderPair, build_class_text_embeddings
from .prompts import PromptTemplate, prompt_set_digest
from .schedule import AdaptiveFactorConfig, FactorTrace
from .weights import Checkpoint, ParameterSet, interpolate, squared_distance


class Strategy(str, Enum):
    ZERO_SHOT = "zero_shot"
    LINEAR_PROBE = "linear_probe"
    FULL_FT = "full_ft"
    WISE_FT = "wise_ft"
    ADWE = "adwe"


class LossMode(str, Enum):
    CONTRASTIVE = "contrastive"
    CROSS_ENTROPY = "cross_entropy"


@dataclass
class TrainConfig:
    strategy: Strategy = Strategy.ADWE
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.05
    lambda_anchor: float = 0.0
    alpha: float = 0.5
    factor: AdaptiveFactorConfig = field(default_factory=AdaptiveFactorConfig)
    seed: int = 0
    loss_mode: LossMode = LossMode.CONTRASTIVE

    def __post_init__(self):
        if self.epochs < 1:
            raise NumericError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise NumericError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise NumericError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.lambda_anchor < 0:
            raise NumericError(f"lambda must be nonnegative, got {self.lambda_anchor}")
        if not (0.0 <= self.alpha <= 1.0):
            raise NumericError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass
class EpochResult:
    epoch: int
    train_loss: float
    zero_shot_loss: float | None
    beta: float | None
    param_digest: str
    val_accuracy: float | None = None
    val_accuracy_pre: float | None = None  # before the ensembling step


def save_epoch_results(results: list[EpochResult], path: str | Path) -> None:
    with open(Path(path), "w") as fh:
        for r in results:
            fh.write(json.dumps(r.__dict__) + "\n")


# -- losses ---------------------------------------------------------------


def _as_tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x))


def _check_unit_rows(mat: torch.Tensor, what: str, atol: float = 1e-4) -> None:
    norms = torch.linalg.norm(mat.detach(), dim=-1)
    if not torch.allclose(norms, torch.ones_like(norms), atol=atol):
        raise NormalizationError(f"{what} rows must be unit-norm (max |1-norm| = "
                                 f"{float((norms - 1).abs().max()):.3g})")


def contrastive_loss(image_embs, text_embs, logit_scale) -> torch.Tensor:
    """Symmetric cross-entropy over the scaled cosine-similarity matrix.

    Pair i matches caption i; rows must be unit-normalized already.
    """
    z = _as_tensor(image_embs)
    t = _as_tensor(text_embs)
    if z.shape[0] < 2:
        raise NumericError(f"contrastive loss needs a batch of >= 2, got {z.shape[0]}")
    if z.shape != t.shape:
        raise NumericError(f"image/text batch shapes disagree: {z.shape} vs {t.shape}")
    _check_unit_rows(z, "image embedding")
    _check_unit_rows(t, "text embedding")
    scale = logit_scale if isinstance(logit_scale, torch.Tensor) else torch.as_tensor(
        logit_scale, dtype=z.dtype
    )
    logits = scale * (z @ t.T)
    targets = torch.arange(z.shape[0], device=z.device)
    return (F.cross_entropy(logits, targets) + F.cross_entropy(logits.T, targets)) / 2


def lp_loss(features, labels, weight) -> torch.Tensor:
    """Mean cross-entropy of softmax(W z_i) against y_i."""
    z = _as_tensor(features)
    w = _as_tensor(weight)
    y = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    n_classes = w.shape[0]
    if y.numel() and (int(y.min()) < 0 or int(y.max()) >= n_classes):
        raise NumericError(f"labels must lie in [0, {n_classes})")
    return F.cross_entropy(z @ w.T, y)


def _anchor_penalty(theta, theta0, lam) -> torch.Tensor:
    if isinstance(theta, ParameterSet) or isinstance(theta0, ParameterSet):
        if not (isinstance(theta, ParameterSet) and isinstance(theta0, ParameterSet)):
            raise NumericError("theta and theta0 must both be ParameterSets or both tensor maps")
        return torch.as_tensor(lam * squared_distance(theta, theta0))
    names = list(theta)
    if sorted(names) != sorted(theta0):
        raise NumericError("theta and theta0 name sets differ")
    total = None
    for name in names:
        a, b = _as_tensor(theta[name]), _as_tensor(theta0[name])
        if a.shape != b.shape:
            raise NumericError(f"parameter {name!r} shape mismatch: {a.shape} vs {b.shape}")
        term = ((a - b) ** 2).sum()
        total = term if total is None else total + term
    return lam * total


def fft_loss(features, labels, weight, theta, theta0, lam) -> torch.Tensor:
    """Classifier cross-entropy plus lam * ||theta - theta0||^2."""
    if lam < 0:
        raise NumericError(f"lambda must be nonnegative, got {lam}")
    loss = lp_loss(features, labels, weight)
    if lam == 0:
        return loss
    return loss + _anchor_penalty(theta, theta0, lam)


# -- training internals ---------------------------------------------------


class _TrainModel(torch.nn.Module):
    """EncoderPair plus an optional classifier head (cross-entropy mode)."""

    def __init__(self, encoders: EncoderPair, head: np.ndarray | None = None):
        super().__init__()
        self.encoders = encoders
        self.head = (
            torch.nn.Parameter(torch.from_numpy(np.asarray(head, dtype=np.float32).copy()))
            if head is not None
            else None
        )

    def to_parameter_set(self) -> ParameterSet:
        entries = {n: p.detach().numpy().copy() for n, p in self.encoders.named_parameters()}
        if self.head is not None:
            entries["head.weight"] = self.head.detach().numpy().copy()
        return ParameterSet(entries)

    def load_parameter_set(self, params: ParameterSet) -> None:
        encoder_entries = {n: params[n] for n in params if n != "head.weight"}
        self.encoders.load_parameter_set(ParameterSet(encoder_entries))
        if self.head is not None:
            with torch.no_grad():
                self.head.copy_(torch.from_numpy(np.array(params["head.weight"])))


def _normalize(x: torch.Tensor) -> torch.Tensor:
    return F.normalize(x, dim=-1)


def _templates_by_class(prompt_set: list[PromptTemplate]) -> dict[int, list[int]]:
    by_class: dict[int, list[int]] = {}
    for idx, t in enumerate(prompt_set):
        by_class.setdefault(t.class_id, []).append(idx)
    return by_class


def _batch_loss(
    model: _TrainModel,
    image_feats: torch.Tensor,
    labels: np.ndarray,
    text_feats_all: torch.Tensor,
    template_choice: np.ndarray,
    cfg: TrainConfig,
    anchor_tensors: dict[str, torch.Tensor] | None,
) -> torch.Tensor:
    z = _normalize(model.encoders.image(image_feats))
    if cfg.loss_mode is LossMode.CONTRASTIVE:
        t = _normalize(model.encoders.text(text_feats_all[template_choice]))
        loss = contrastive_loss(z, t, model.encoders.logit_scale)
    else:
        loss = lp_loss(z, labels, model.head)
    if cfg.lambda_anchor > 0 and anchor_tensors is not None:
        current = {n: p for n, p in model.encoders.named_parameters()}
        if model.head is not None:
            current["head.weight"] = model.head
        loss = loss + _anchor_penalty(current, anchor_tensors, cfg.lambda_anchor)
    return loss


def _fixed_template_choice(labels: np.ndarray, by_class: dict[int, list[int]]) -> np.ndarray:
    """Deterministic per-sample template assignment for validation loss."""
    out = np.empty(len(labels), dtype=np.int64)
    for i, y in enumerate(labels):
        options = by_class[int(y)]
        out[i] = options[i % len(options)]
    return out


def _eval_loss(
    model: _TrainModel,
    image_feats: torch.Tensor,
    labels: np.ndarray,
    text_feats_all: torch.Tensor,
    by_class: dict[int, list[int]],
    cfg: TrainConfig,
) -> float:
    with torch.no_grad():
        z = _normalize(model.encoders.image(image_feats))
        if cfg.loss_mode is LossMode.CONTRASTIVE:
            choice = _fixed_template_choice(labels, by_class)
            t = _normalize(model.encoders.text(text_feats_all[choice]))
            return float(contrastive_loss(z, t, model.encoders.logit_scale))
        return float(lp_loss(z, labels, model.head))


def _eval_accuracy(
    model: _TrainModel,
    image_feats: torch.Tensor,
    labels: np.ndarray,
    text_feats_all: torch.Tensor,
    by_class: dict[int, list[int]],
    cfg: TrainConfig,
) -> float:
    """Top-1 accuracy of the current weights on a held-out split."""
    with torch.no_grad():
        z = _normalize(model.encoders.image(image_feats))
        if cfg.loss_mode is LossMode.CONTRASTIVE:
            rows = []
            for c in sorted(by_class):
                t = _normalize(model.encoders.text(text_feats_all[by_class[c]]))
                rows.append(_normalize(t.mean(dim=0, keepdim=True))[0])
            class_embs = torch.stack(rows)
            preds = (z @ class_embs.T).argmax(dim=1).numpy()
        else:
            preds = (z @ model.head.T).argmax(dim=1).numpy()
    return float(np.mean(preds == labels))


def _initial_head(encoders: EncoderPair, prompt_set, n_classes: int) -> np.ndarray:
    return build_class_text_embeddings(prompt_set, encoders.encode_text, n_classes)


def _run_training(
    encoders: EncoderPair,
    data: tuple[np.ndarray, np.ndarray],
    val_split: tuple[np.ndarray, np.ndarray] | None,
    prompt_set: list[PromptTemplate],
    cfg: TrainConfig,
    ensemble: bool,
) -> tuple[Checkpoint, FactorTrace | None, list[EpochResult]]:
    torch.set_num_threads(1)
    torch.manual_seed(cfg.seed)
    images, labels = data
    if len(images) == 0:
        raise DataError("empty training split")
    n_classes = max(int(t.class_id) for t in prompt_set) + 1
    by_class = _templates_by_class(prompt_set)

    head = None
    if cfg.loss_mode is LossMode.CROSS_ENTROPY:
        head = _initial_head(encoders, prompt_set, n_classes)
    model = _TrainModel(encoders, head=head)
    anchor_params = model.to_parameter_set()
    anchor_model = _TrainModel(encoders.clone(), head=head)
    anchor_model.load_parameter_set(anchor_params)
    anchor_tensors = (
        {n: torch.from_numpy(np.array(anchor_params[n])) for n in anchor_params}
        if cfg.lambda_anchor > 0
        else None
    )

    image_feats = model.encoders.image_features(images)
    text_feats_all = model.encoders.text_features([t.text for t in prompt_set])
    if val_split is not None:
        val_images, val_labels = val_split
        if len(val_images) == 0:
            raise DataError("empty validation split")
        val_feats = model.encoders.image_features(val_images)

    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    trace = FactorTrace(config=cfg.factor) if ensemble else None
    results: list[EpochResult] = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(images))
        template_choice = np.array(
            [by_class[int(y)][rng.integers(len(by_class[int(y)]))] for y in labels],
            dtype=np.int64,
        )
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2 and cfg.loss_mode is LossMode.CONTRASTIVE:
                continue
            optimizer.zero_grad()
            loss = _batch_loss(
                model,
                image_feats[idx],
                labels[idx],
                text_feats_all,
                template_choice[idx],
                cfg,
                anchor_tensors,
            )
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        mean_train_loss = float(np.mean(losses))

        zs_loss = None
        beta = None
        val_acc_pre = None
        if val_split is not None:
            zs_loss = _eval_loss(anchor_model, val_feats, val_labels, text_feats_all, by_class, cfg)
            val_acc_pre = _eval_accuracy(model, val_feats, val_labels, text_feats_all, by_class, cfg)
        if ensemble:
            if zs_loss is None:
                raise DataError("adaptive ensembling requires a validation split")
            row = trace.record(epoch, mean_train_loss, zs_loss)
            beta = row.beta
            mixed = interpolate(anchor_params, model.to_parameter_set(), beta)
            model.load_parameter_set(mixed)
        params = model.to_parameter_set()
        val_acc = None
        if val_split is not None:
            val_acc = _eval_accuracy(model, val_feats, val_labels, text_feats_all, by_class, cfg)
        results.append(
            EpochResult(epoch, mean_train_loss, zs_loss, beta, params.digest(),
                        val_acc, val_acc_pre)
        )

    final = model.to_parameter_set()
    meta = {
        "strategy": cfg.strategy.value,
        "loss_mode": cfg.loss_mode.value,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "gamma": cfg.factor.gamma if ensemble else None,
        "beta_history": trace.betas if ensemble else [],
        "train_losses": [r.train_loss for r in results],
        "zero_shot_losses": [r.zero_shot_loss for r in results],
        "prompt_digest": prompt_set_digest(prompt_set),
        "encoder_config": encoders.config.to_dict(),
    }
    return Checkpoint(params=final, meta=meta), trace, results


# -- strategy drivers -----------------------------------------------------


def zero_shot_checkpoint(encoders: EncoderPair, prompt_set, seed: int = 0) -> Checkpoint:
    """Snapshot of the untouched pretrained weights."""
    return Checkpoint(
        params=encoders.to_parameter_set(),
        meta={
            "strategy": Strategy.ZERO_SHOT.value,
            "epochs": 0,
            "seed": seed,
            "beta_history": [],
            "prompt_digest": prompt_set_digest(prompt_set),
            "encoder_config": encoders.config.to_dict(),
        },
    )


def train_linear_probe(
    encoders: EncoderPair,
    data: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    prompt_set: list[PromptTemplate],
) -> Checkpoint:
    """Train only a linear head on frozen image features."""
    torch.set_num_threads(1)
    torch.manual_seed(cfg.seed)
    images, labels = data
    if len(images) == 0:
        raise DataError("empty training split")
    n_classes = max(int(t.class_id) for t in prompt_set) + 1
    encoder_params = encoders.to_parameter_set()

    with torch.no_grad():
        feats = _normalize(encoders.image(encoders.image_features(images)))
    head = torch.nn.Parameter(
        torch.from_numpy(_initial_head(encoders, prompt_set, n_classes).copy())
    )
    optimizer = torch.optim.SGD([head], lr=cfg.learning_rate)
    y = torch.as_tensor(labels, dtype=torch.long)
    for _ in range(cfg.epochs):
        optimizer.zero_grad()
        loss = F.cross_entropy(feats @ head.T, y)
        loss.backward()
        optimizer.step()

    entries = {n: encoder_params[n] for n in encoder_params}
    entries["head.weight"] = head.detach().numpy()
    return Checkpoint(
        params=ParameterSet(entries),
        meta={
            "strategy": Strategy.LINEAR_PROBE.value,
            "loss_mode": LossMode.CROSS_ENTROPY.value,
            "epochs": cfg.epochs,
            "seed": cfg.seed,
            "beta_history": [],
            "final_loss": float(loss.detach()),
            "prompt_digest": prompt_set_digest(prompt_set),
            "encoder_config": encoders.config.to_dict(),
        },
    )


def train_full(
    encoders: EncoderPair,
    data: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    prompt_set: list[PromptTemplate],
    val_split: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[Checkpoint, list[EpochResult]]:
    """Gradient training over all parameters, no ensembling."""
    ckpt, _, results = _run_training(encoders, data, val_split, prompt_set, cfg, ensemble=False)
    return ckpt, results


def wise_ft_ensemble(zs: ParameterSet, ft: ParameterSet, alpha: float) -> ParameterSet:
    """Post-hoc interpolation: alpha * zero-shot + (1 - alpha) * fine-tuned."""
    return interpolate(zs, ft, alpha)


def train_adwe(
    encoders: EncoderPair,
    data: tuple[np.ndarray, np.ndarray],
    val_split: tuple[np.ndarray, np.ndarray],
    prompt_set: list[PromptTemplate],
    cfg: TrainConfig,
) -> tuple[Checkpoint, FactorTrace, list[EpochResult]]:
    """Per-epoch ensembling toward the frozen zero-shot anchor.

    After each training epoch: record the epoch-mean train loss, evaluate
    the frozen anchor's loss on the validation split, compute beta, and
    replace the weights with interpolate(anchor, current, beta).
    """
    if cfg.factor.total_epochs != cfg.epochs:
        raise NumericError(
            f"factor.total_epochs ({cfg.factor.total_epochs}) must equal "
            f"epochs ({cfg.epochs}) for per-epoch ensembling"
        )
    ckpt, trace, results = _run_training(encoders, data, val_split, prompt_set, cfg, ensemble=True)
    return ckpt, trace, results

"""Sklearn-style estimator surface over the toolkit.

SignClassifier predicts canonical class ids for sign rasters, either
zero-shot (cosine similarity against prompt-derived class text
embeddings) or through a trained linear head.  FineTuner wraps the
strategy drivers behind fit().
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .errors import NumericError
from .model import (
    EncoderConfig,
    EncoderPair,
    build_class_text_embeddings,
    normalize_rows,
    zero_shot_classify,
)
from .schedule import AdaptiveFactorConfig
from .training import (
    LossMode,
    Strategy,
    TrainConfig,
    train_adwe,
    train_full,
    train_linear_probe,
    wise_ft_ensemble,
    zero_shot_checkpoint,
)
from .weights import Checkpoint, ParameterSet


def check_images(X) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 4:
        raise NumericError(f"expected image batch of shape (n, H, W, C), got {X.shape}")
    return X


def check_labels(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise NumericError(f"labels must lie in [0, {n_classes})")
    return y


class SignClassifier(BaseEstimator, ClassifierMixin):
    """Classify sign rasters with an encoder pair.

    With head=None, fit() builds class text embeddings from the prompt
    set and predict() takes the argmax cosine similarity (zero-shot
    path).  With a head matrix (linear probe / cross-entropy training),
    predict() takes the argmax of head logits.
    """

    def __init__(self, encoders: EncoderPair, prompt_set, head=None):
        self.encoders = encoders
        self.prompt_set = prompt_set
        self.head = head

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, prompt_set) -> "SignClassifier":
        config = EncoderConfig.from_dict(ckpt.meta["encoder_config"])
        encoders = EncoderPair(config, seed=0)
        names = [n for n in ckpt.params if n != "head.weight"]
        encoders.load_parameter_set(ParameterSet({n: ckpt.params[n] for n in names}))
        head = (
            np.array(ckpt.params["head.weight"]) if "head.weight" in ckpt.params else None
        )
        return cls(encoders, prompt_set, head=head)

    def fit(self, X=None, y=None):
        n_classes = max(int(t.class_id) for t in self.prompt_set) + 1
        self.classes_ = np.arange(n_classes)
        if self.head is None:
            self.class_embeddings_ = build_class_text_embeddings(
                self.prompt_set, self.encoders.encode_text, n_classes
            )
        else:
            self.class_embeddings_ = np.asarray(self.head, dtype=np.float32)
        return self

    def _check_fitted(self):
        if not hasattr(self, "class_embeddings_"):
            raise NotFittedError("call fit() before predict()")

    def embed(self, X) -> np.ndarray:
        return self.encoders.encode_image(check_images(X))

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        embs = self.embed(X)
        if self.head is None:
            ids, _ = zero_shot_classify(embs, self.class_embeddings_)
            return ids
        logits = normalize_rows(embs) @ np.asarray(self.head).T
        return np.argmax(logits, axis=1)

    def predict_scores(self, X) -> np.ndarray:
        """Per-image score of the predicted class (cosine or logit)."""
        self._check_fitted()
        embs = self.embed(X)
        if self.head is None:
            _, scores = zero_shot_classify(embs, self.class_embeddings_)
            return scores
        logits = normalize_rows(embs) @ np.asarray(self.head).T
        return logits[np.arange(len(logits)), np.argmax(logits, axis=1)]


class FineTuner(BaseEstimator):
    """Strategy dispatcher with a fit() surface.

    After fit(): checkpoint_, classifier_, and (ADWE) trace_ are set.
    """

    def __init__(
        self,
        encoders: EncoderPair,
        prompt_set,
        strategy: str = "adwe",
        epochs: int = 10,
        batch_size: int = 32,
        learning_rate: float = 0.05,
        lambda_anchor: float = 0.0,
        alpha: float = 0.5,
        gamma: float = 5.0,
        clamp_lo: float = 0.0,
        clamp_hi: float = 1.0,
        seed: int = 0,
        loss_mode: str = "contrastive",
    ):
        self.encoders = encoders
        self.prompt_set = prompt_set
        self.strategy = strategy
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lambda_anchor = lambda_anchor
        self.alpha = alpha
        self.gamma = gamma
        self.clamp_lo = clamp_lo
        self.clamp_hi = clamp_hi
        self.seed = seed
        self.loss_mode = loss_mode

    def _config(self) -> TrainConfig:
        return TrainConfig(
            strategy=Strategy(self.strategy),
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lambda_anchor=self.lambda_anchor,
            alpha=self.alpha,
            factor=AdaptiveFactorConfig(
                gamma=self.gamma,
                total_epochs=self.epochs,
                clamp_lo=self.clamp_lo,
                clamp_hi=self.clamp_hi,
            ),
            seed=self.seed,
            loss_mode=LossMode(self.loss_mode),
        )

    def fit(self, X, y, X_val=None, y_val=None):
        cfg = self._config()
        X = check_images(X) if X is not None else None
        n_classes = max(int(t.class_id) for t in self.prompt_set) + 1
        y = check_labels(y, n_classes) if y is not None else None
        val = None
        if X_val is not None:
            val = (check_images(X_val), check_labels(y_val, n_classes))
        self.trace_ = None
        self.results_ = []

        # train on a copy so the caller's (zero-shot) encoders stay pristine
        encoders = self.encoders.clone()
        strategy = Strategy(self.strategy)
        if strategy is Strategy.ZERO_SHOT:
            self.checkpoint_ = zero_shot_checkpoint(encoders, self.prompt_set, cfg.seed)
        elif strategy is Strategy.LINEAR_PROBE:
            self.checkpoint_ = train_linear_probe(encoders, (X, y), cfg, self.prompt_set)
        elif strategy is Strategy.FULL_FT:
            self.checkpoint_, self.results_ = train_full(
                encoders, (X, y), cfg, self.prompt_set, val_split=val
            )
        elif strategy is Strategy.WISE_FT:
            anchor = encoders.to_parameter_set()
            ft_ckpt, self.results_ = train_full(
                encoders, (X, y), cfg, self.prompt_set, val_split=val
            )
            mixed = wise_ft_ensemble(anchor, ft_ckpt.params, cfg.alpha)
            meta = dict(ft_ckpt.meta, strategy=Strategy.WISE_FT.value, alpha=cfg.alpha)
            self.checkpoint_ = Checkpoint(params=mixed, meta=meta)
        elif strategy is Strategy.ADWE:
            if val is None:
                raise NumericError("ADWE requires a validation split (X_val, y_val)")
            self.checkpoint_, self.trace_, self.results_ = train_adwe(
                encoders, (X, y), val, self.prompt_set, cfg
            )
        else:  # pragma: no cover
            raise NumericError(f"unknown strategy {self.strategy!r}")

        self.classifier_ = SignClassifier.from_checkpoint(
            self.checkpoint_, self.prompt_set
        ).fit()
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "classifier_"):
            raise NotFittedError("call fit() before predict()")
        return self.classifier_.predict(X)

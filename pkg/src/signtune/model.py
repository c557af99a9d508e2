"""Encoder pair and zero-shot classification.

The tiny reference encoders are two affine+tanh stacks (flattened raster
-> d for images, hashed bag-of-tokens -> d for text) that train on CPU in
seconds.  Real pretrained vision-language backbones plug in through the
same surface: encode_image / encode_text / to_parameter_set /
load_parameter_set.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .errors import CoverageError, DegenerateInputError, NumericError
from .prompts import PromptTemplate
from .weights import ParameterSet


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 32
    channels: int = 3
    vocab_size: int = 512
    hidden: int = 64
    dim: int = 64
    logit_scale_init: float = 5.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "EncoderConfig":
        return cls(**doc)


def _mlp(n_in: int, hidden: int, n_out: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(n_in, hidden), nn.Tanh(), nn.Linear(hidden, n_out))


class EncoderPair(nn.Module):
    """Image and text encoders sharing an embedding dimension, plus a
    trainable logit scale."""

    def __init__(self, config: EncoderConfig = EncoderConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        n_pixels = config.image_size * config.image_size * config.channels
        self.image = _mlp(n_pixels, config.hidden, config.dim)
        self.text = _mlp(config.vocab_size, config.hidden, config.dim)
        self.logit_scale = nn.Parameter(torch.tensor(float(config.logit_scale_init)))
        self._seeded_init(seed)

    def _seeded_init(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        for module in list(self.image) + list(self.text):
            if isinstance(module, nn.Linear):
                fan_in = module.weight.shape[1]
                bound = 1.0 / float(np.sqrt(fan_in))
                with torch.no_grad():
                    module.weight.uniform_(-bound, bound, generator=gen)
                    module.bias.zero_()

    # -- featurization ---------------------------------------------------

    def image_features(self, images: np.ndarray) -> torch.Tensor:
        """uint8 (n, H, W, C) or float (n, H, W, C) rasters -> flat float32."""
        arr = np.asarray(images)
        if arr.ndim != 4:
            raise NumericError(f"expected (n, H, W, C) images, got shape {arr.shape}")
        if arr.dtype == np.uint8:
            arr = arr.astype(np.float32) / 255.0
        return torch.from_numpy(arr.astype(np.float32).reshape(arr.shape[0], -1))

    def text_features(self, texts: list[str]) -> torch.Tensor:
        """Hashed bag-of-tokens count vectors, l2-normalized per row."""
        out = np.zeros((len(texts), self.config.vocab_size), dtype=np.float32)
        for i, text in enumerate(texts):
            for token in text.lower().split():
                token = token.strip(".,;:'\"()")
                if token:
                    out[i, zlib.crc32(token.encode("utf-8")) % self.config.vocab_size] += 1.0
            norm = np.linalg.norm(out[i])
            if norm > 0:
                out[i] /= norm
        return torch.from_numpy(out)

    # -- encoding --------------------------------------------------------

    def encode_image(self, images: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return self.image(self.image_features(images)).numpy()

    def encode_text(self, texts: list[str]) -> np.ndarray:
        with torch.no_grad():
            return self.text(self.text_features(texts)).numpy()

    # -- parameter-set bridge --------------------------------------------

    def to_parameter_set(self) -> ParameterSet:
        return ParameterSet(
            {name: p.detach().numpy().copy() for name, p in self.named_parameters()}
        )

    def load_parameter_set(self, params: ParameterSet) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(params.names):
            raise NumericError(
                f"parameter names do not match encoder architecture: "
                f"{sorted(set(own) ^ set(params.names))}"
            )
        with torch.no_grad():
            for name, p in own.items():
                p.copy_(torch.from_numpy(np.array(params[name])))

    def clone(self) -> "EncoderPair":
        twin = EncoderPair(self.config, seed=0)
        twin.load_parameter_set(self.to_parameter_set())
        return twin


# -- zero-shot classification --------------------------------------------


def normalize_rows(mat: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=-1, keepdims=True)
    if np.any(norms <= atol):
        raise DegenerateInputError("cannot normalize a zero-norm row")
    return mat / norms


def cosine_similarity(z: np.ndarray, t: np.ndarray) -> float:
    z = np.asarray(z, dtype=np.float64).ravel()
    t = np.asarray(t, dtype=np.float64).ravel()
    if z.shape != t.shape:
        raise NumericError(f"dimension mismatch: {z.shape} vs {t.shape}")
    nz, nt = np.linalg.norm(z), np.linalg.norm(t)
    if nz == 0.0 or nt == 0.0:
        raise DegenerateInputError("cosine similarity undefined for zero-norm input")
    return float(np.clip(np.dot(z, t) / (nz * nt), -1.0, 1.0))


def build_class_text_embeddings(
    prompt_set: list[PromptTemplate],
    encode_text,
    n_classes: int,
) -> np.ndarray:
    """Per class: encode templates, l2-normalize each, mean, renormalize."""
    by_class: dict[int, list[str]] = {}
    for t in prompt_set:
        by_class.setdefault(t.class_id, []).append(t.text)
    missing = [c for c in range(n_classes) if c not in by_class]
    if missing:
        raise CoverageError(f"prompt set missing classes: {missing}")
    rows = []
    for c in range(n_classes):
        embs = np.asarray(encode_text(by_class[c]), dtype=np.float64)
        mean = normalize_rows(embs).mean(axis=0)
        rows.append(normalize_rows(mean[None, :])[0])
    return np.stack(rows).astype(np.float32)


def zero_shot_classify(
    image_embs: np.ndarray, class_embs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Argmax cosine similarity per image; ties break to the lowest class id.

    Returns (class_ids, scores).
    """
    image_embs = np.asarray(image_embs, dtype=np.float64)
    class_embs = np.asarray(class_embs, dtype=np.float64)
    if image_embs.ndim == 1:
        image_embs = image_embs[None, :]
    if image_embs.shape[1] != class_embs.shape[1]:
        raise NumericError(
            f"embedding dims disagree: {image_embs.shape[1]} vs {class_embs.shape[1]}"
        )
    sims = np.clip(normalize_rows(image_embs) @ normalize_rows(class_embs).T, -1.0, 1.0)
    ids = np.argmax(sims, axis=1)
    return ids, sims[np.arange(len(ids)), ids]

"""Zero-shot classification math and the tiny reference encoders."""

import numpy as np
import pytest

from signtune.errors import CoverageError, DegenerateInputError
from signtune.model import (
    EncoderConfig,
    EncoderPair,
    build_class_text_embeddings,
    cosine_similarity,
    zero_shot_classify,
)
from signtune.prompts import PromptTemplate


class TestCosineSimilarity:
    def test_identical_unit_vectors(self):
        assert cosine_similarity([1, 0], [1, 0]) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_hand_value(self):
        assert cosine_similarity([3, 4], [4, 3]) == pytest.approx(24 / 25, abs=1e-12)

    def test_zero_norm_raises(self):
        with pytest.raises(DegenerateInputError):
            cosine_similarity([0, 0], [1, 0])

    def test_clamped_to_unit_interval(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            z, t = rng.normal(size=8), rng.normal(size=8)
            assert -1.0 <= cosine_similarity(z, t) <= 1.0


def identity_encoder(vectors):
    lookup = {}

    def encode(texts):
        return np.stack([vectors[t] for t in texts])

    return encode


class TestClassTextEmbeddings:
    def test_mean_of_one_is_the_vector(self):
        vecs = {"t0": np.array([1.0, 0.0]), "t1": np.array([0.0, 1.0])}
        prompts = [PromptTemplate(0, 0, "t0"), PromptTemplate(1, 1, "t1")]
        mat = build_class_text_embeddings(prompts, identity_encoder(vecs), 2)
        np.testing.assert_allclose(mat, np.eye(2), atol=1e-7)

    def test_duplicate_templates_idempotent(self):
        vecs = {"a": np.array([0.6, 0.8])}
        prompts = [PromptTemplate(0, 0, "a"), PromptTemplate(1, 0, "a")]
        mat = build_class_text_embeddings(prompts, identity_encoder(vecs), 1)
        np.testing.assert_allclose(mat[0], [0.6, 0.8], atol=1e-7)

    def test_orthogonal_pair_mean(self):
        vecs = {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 1.0])}
        prompts = [PromptTemplate(0, 0, "a"), PromptTemplate(1, 0, "b")]
        mat = build_class_text_embeddings(prompts, identity_encoder(vecs), 1)
        np.testing.assert_allclose(mat[0], np.array([1.0, 1.0]) / np.sqrt(2), atol=1e-7)

    def test_rows_unit_norm(self):
        rng = np.random.default_rng(1)
        vecs = {f"t{i}": rng.normal(size=5) for i in range(12)}
        prompts = [PromptTemplate(i, i % 4, f"t{i}") for i in range(12)]
        mat = build_class_text_embeddings(prompts, identity_encoder(vecs), 4)
        np.testing.assert_allclose(np.linalg.norm(mat, axis=1), 1.0, atol=1e-6)

    def test_missing_class_raises(self):
        prompts = [PromptTemplate(0, 0, "a")]
        with pytest.raises(CoverageError):
            build_class_text_embeddings(prompts, identity_encoder({"a": np.ones(2)}), 3)


class TestZeroShotClassify:
    def test_hand_cosine(self):
        class_embs = np.array([[1.0, 0.0], [0.0, 1.0]])
        ids, scores = zero_shot_classify(np.array([[0.9, 0.1]]), class_embs)
        assert ids[0] == 0
        assert scores[0] == pytest.approx(0.9 / np.hypot(0.9, 0.1), abs=1e-9)

    def test_self_match_scores_one(self):
        class_embs = np.array([[1.0, 0.0], [0.0, 1.0]])
        ids, scores = zero_shot_classify(class_embs[1], class_embs)
        assert ids[0] == 1
        assert scores[0] == 1.0

    def test_scale_invariance(self):
        rng = np.random.default_rng(2)
        class_embs = rng.normal(size=(5, 8))
        class_embs /= np.linalg.norm(class_embs, axis=1, keepdims=True)
        images = rng.normal(size=(20, 8))
        ids, scores = zero_shot_classify(images, class_embs)
        for c in (0.01, 3.0, 1e4):
            ids_c, scores_c = zero_shot_classify(c * images, class_embs)
            np.testing.assert_array_equal(ids, ids_c)
            np.testing.assert_allclose(scores, scores_c, atol=1e-6)

    def test_tie_breaks_to_lowest_class_id(self):
        class_embs = np.array([[1.0, 0.0], [1.0, 0.0]])
        ids, _ = zero_shot_classify(np.array([[2.0, 0.0]]), class_embs)
        assert ids[0] == 0

    def test_zero_norm_image_raises(self):
        with pytest.raises(DegenerateInputError):
            zero_shot_classify(np.zeros((1, 2)), np.eye(2))


class TestEncoderPair:
    def test_seeded_init_is_bit_deterministic(self):
        a = EncoderPair(EncoderConfig(), seed=42)
        b = EncoderPair(EncoderConfig(), seed=42)
        assert a.to_parameter_set().digest() == b.to_parameter_set().digest()

    def test_different_seeds_differ(self):
        a = EncoderPair(EncoderConfig(), seed=1)
        b = EncoderPair(EncoderConfig(), seed=2)
        assert a.to_parameter_set().digest() != b.to_parameter_set().digest()

    def test_parameter_set_round_trip(self):
        a = EncoderPair(EncoderConfig(), seed=3)
        b = EncoderPair(EncoderConfig(), seed=4)
        b.load_parameter_set(a.to_parameter_set())
        assert b.to_parameter_set().digest() == a.to_parameter_set().digest()

    def test_encoders_share_embedding_dim(self):
        enc = EncoderPair(EncoderConfig(dim=16), seed=0)
        rng = np.random.default_rng(0)
        images = rng.integers(0, 255, size=(2, 32, 32, 3), dtype=np.uint8)
        assert enc.encode_image(images).shape == (2, 16)
        assert enc.encode_text(["a stop sign", "a yield sign"]).shape == (2, 16)

    def test_text_featurization_deterministic(self):
        enc = EncoderPair(EncoderConfig(), seed=0)
        a = enc.encode_text(["a 'stop' traffic sign."])
        b = enc.encode_text(["a 'stop' traffic sign."])
        np.testing.assert_array_equal(a, b)

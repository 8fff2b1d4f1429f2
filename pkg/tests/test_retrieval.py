import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from triembed.diffcore import Tensor
from triembed.encoders import ImageGridFeatures, SequenceFeatures
from triembed.matchmap import ModeError, similarity
from triembed.oracles import loop_recall
from triembed.retrieval import (
    SimilarityMatrix,
    ranks_of_truth,
    recall_at_k,
    recall_from_scores,
    recall_report,
    similarity_matrix,
)

EXAMPLE = np.array([[0.1, 0.9, 0.0], [0.8, 0.2, 0.1], [0.0, 0.1, 0.7]])


def test_worked_recall():
    assert recall_from_scores(EXAMPLE, 1) == pytest.approx(1 / 3)
    assert recall_from_scores(EXAMPLE, 2) == 1.0
    assert recall_from_scores(EXAMPLE, 1) == loop_recall(EXAMPLE, 1)


def test_identity_recall_is_one():
    for k in (1, 2, 4):
        assert recall_from_scores(np.eye(4), k) == 1.0


def test_k_out_of_range():
    with pytest.raises(ValueError, match="K"):
        recall_from_scores(EXAMPLE, 0)
    with pytest.raises(ValueError, match="K"):
        recall_from_scores(EXAMPLE, 4)


def test_ties_break_by_index():
    # query 1 ties its target with target 0; the lower index ranks first
    scores = np.array([[1.0, 0.0], [0.5, 0.5]])
    np.testing.assert_array_equal(ranks_of_truth(scores), [0, 1])


def test_direction_uses_transpose():
    S = SimilarityMatrix(EXAMPLE, "image", "audio", "SIMA")
    assert recall_at_k(S, 1, "audio") == recall_from_scores(EXAMPLE.T, 1)
    with pytest.raises(ValueError):
        recall_at_k(S, 1, "text")


def test_report_clips_k_to_batch():
    rep = recall_report(SimilarityMatrix(EXAMPLE, "image", "audio", "SIMA"), "image", (1, 5, 10))
    assert rep.recalls == {1: pytest.approx(1 / 3), 3: 1.0}


square = st.integers(1, 12).flatmap(
    lambda b: arrays(np.float64, (b, b), elements=st.integers(-20, 20).map(float)))


@given(square)
@settings(max_examples=200, deadline=None)
def test_metric_invariants(S):
    B = S.shape[0]
    recalls = [recall_from_scores(S, k) for k in range(1, B + 1)]
    assert all(a <= b for a, b in zip(recalls, recalls[1:]))
    assert recalls[-1] == 1.0
    for f in (lambda x: x ** 3, lambda x: np.exp(x / 8.0), lambda x: 2.0 * x + 7.0):
        assert [recall_from_scores(f(S), k) for k in range(1, B + 1)] == recalls
    assert recalls == [loop_recall(S, k) for k in range(1, B + 1)]


@given(square, st.randoms())
@settings(max_examples=100, deadline=None)
def test_permutation_consistency(S, rnd):
    B = S.shape[0]
    perm = np.array(rnd.sample(range(B), B))
    # reorder queries and targets together; with distinct scores the recall is unchanged
    S = S + np.arange(B * B).reshape(B, B) * 1e-3
    P = S[perm][:, perm]
    for k in range(1, B + 1):
        assert recall_from_scores(P, k) == recall_from_scores(S, k)


def _feats(rng, B):
    images = [ImageGridFeatures(Tensor(rng.standard_normal((2, 2, 3)))) for _ in range(B)]
    audio = [SequenceFeatures(Tensor(rng.standard_normal((4, 3))), "audio") for _ in range(B)]
    return images, audio


def test_similarity_matrix_single_pair():
    rng = np.random.default_rng(0)
    images, audio = _feats(rng, 1)
    S = similarity_matrix(images, audio, "SIMA")
    assert S.values.shape == (1, 1)
    assert S.values[0, 0] == similarity(images[0], audio[0], "SIMA").item()


def test_similarity_matrix_entries_and_orientation():
    rng = np.random.default_rng(1)
    images, audio = _feats(rng, 4)
    S = similarity_matrix(images, audio, "MISA")
    for i in range(4):
        for j in range(4):
            assert S.values[i, j] == pytest.approx(similarity(images[i], audio[j], "MISA").item(), abs=1e-12)
    R = similarity_matrix(audio, images, "MISA")
    assert R.row_modality == "audio"
    np.testing.assert_allclose(R.values, S.values.T, atol=1e-12)


def test_ragged_inputs_fall_back_to_pairwise():
    rng = np.random.default_rng(2)
    images = [ImageGridFeatures(Tensor(rng.standard_normal((1 + i, 2, 3)))) for i in range(3)]
    audio = [SequenceFeatures(Tensor(rng.standard_normal((2 + i, 3))), "audio") for i in range(3)]
    S = similarity_matrix(images, audio, "SIMA")
    assert S.values[2, 1] == pytest.approx(similarity(images[2], audio[1], "SIMA").item())


def test_self_similarity_cosine_diagonal_dominates():
    rng = np.random.default_rng(3)
    sigs = rng.standard_normal((5, 6))
    images = [ImageGridFeatures(Tensor(np.tile(s, (2, 2, 1)))) for s in sigs]
    audio = [SequenceFeatures(Tensor(np.tile(s, (3, 1))), "audio") for s in sigs]
    S = similarity_matrix(images, audio, "SIMA", normalize=True).values
    np.testing.assert_allclose(np.diag(S), S.max(axis=1))
    assert recall_from_scores(S, 1) == 1.0


def test_similarity_matrix_errors():
    rng = np.random.default_rng(4)
    images, audio = _feats(rng, 3)
    with pytest.raises(ValueError, match="length"):
        similarity_matrix(images, audio[:2], "SIMA")
    with pytest.raises(ModeError):
        similarity_matrix(images, audio, "STMA")

import numpy as np
import pytest
import torch

from src.errors import ShapeError
from src.models.selection import (BowSelector, ChunkedBowSelector, CnnSelector, as_ids, bow_repr, build_selector,
                                  score_bow, score_chunked, score_cnn)
from src.nn.init import init_parameters
from src.parsing.document import ONEHOT_DIM
from src.parsing.vocab import PAD
from tests.helpers import FD_TOLERANCE, finite_difference_error, random_example, relu_margin, tiny_model


def random_table(rng, vocab=10, embed=2):
    return torch.tensor(rng.normal(size=(vocab, embed)))


def random_grid(rng, num_sentences, row_length, vocab=10, min_len=1):
    rows = []
    for _ in range(num_sentences):
        n = int(rng.integers(min_len, row_length + 1))
        rows.append([int(t) for t in rng.integers(1, vocab, size=n)] + [PAD] * (row_length - n))
    return rows


def seeded(selector, seed, scale=0.5):
    init_parameters(selector, scale=scale, seed=seed)
    return selector


# -- bag of words ------------------------------------------------------------

def test_bow_repr_single_and_repeated_token():
    E = random_table(np.random.default_rng(0))
    np.testing.assert_allclose(bow_repr(as_ids([3]), E).numpy(), E[3].numpy())
    np.testing.assert_allclose(bow_repr(as_ids([3, 3]), E).numpy(), E[3].numpy())


def test_bow_repr_excludes_pads():
    E = random_table(np.random.default_rng(1))
    np.testing.assert_allclose(bow_repr(as_ids([4, 7, PAD]), E).numpy(), ((E[4] + E[7]) / 2).numpy(), atol=1e-15)


def test_bow_repr_rejects_all_pad_input():
    with pytest.raises(ShapeError):
        bow_repr(as_ids([PAD, PAD]), random_table(np.random.default_rng(2)))


def test_single_sentence_gets_probability_one():
    sel = seeded(BowSelector(2, 3), 0)
    dist = score_bow([1, 2], [[3, 4, PAD]], random_table(np.random.default_rng(0)), sel)
    assert dist.probs.tolist() == [1.0]


def test_identical_sentences_split_evenly_without_index_weights():
    sel = seeded(BowSelector(2, 3), 1)
    with torch.no_grad():
        sel.scorer.W[:, 4:].zero_()
    dist = score_bow([1, 2], [[3, 4, PAD], [3, 4, PAD]], random_table(np.random.default_rng(1)), sel)
    np.testing.assert_allclose(dist.numpy(), [0.5, 0.5], atol=1e-15)


def reference_bow(x, d, E, W, v):
    """Straight-line numpy forward of the BoW scorer."""
    E, W, v = E.numpy(), W.detach().numpy(), v.detach().numpy()
    q = E[x].mean(axis=0)
    logits = []
    for l, row in enumerate(d):
        tokens = [t for t in row if t != PAD]
        onehot = np.zeros(ONEHOT_DIM)
        onehot[l] = 1.0
        h = np.concatenate([q, E[tokens].mean(axis=0), onehot])
        logits.append(v @ np.maximum(W @ h, 0.0))
    logits = np.array(logits)
    e = np.exp(logits - logits.max())
    return e / e.sum()


@pytest.mark.parametrize("seed", range(5))
def test_bow_matches_reference_forward(seed):
    rng = np.random.default_rng(seed)
    E = random_table(rng)
    sel = seeded(BowSelector(2, 3), seed)
    x, d = [1, 5], random_grid(rng, 3, 4)
    dist = score_bow(x, d, E, sel)
    np.testing.assert_allclose(dist.numpy(), reference_bow(x, d, E, sel.scorer.W, sel.scorer.v), atol=1e-9)


# -- chunked -----------------------------------------------------------------

def test_short_sentences_collapse_to_bow():
    rng = np.random.default_rng(3)
    E = random_table(rng)
    bow = seeded(BowSelector(2, 3), 5)
    chunked = seeded(ChunkedBowSelector(2, 3, chunk_size=7), 5)
    d = random_grid(rng, 4, 6)
    np.testing.assert_allclose(score_chunked([1, 2], d, E, chunked).numpy(), score_bow([1, 2], d, E, bow).numpy(),
                               atol=1e-12)


def test_chunk_probabilities_marginalize_to_sentences():
    rng = np.random.default_rng(4)
    for seed in range(100):
        sel = seeded(ChunkedBowSelector(2, 3, chunk_size=3), seed)
        E = random_table(rng)
        dist = score_chunked([1, 2, 3], random_grid(rng, int(rng.integers(1, 6)), 10), E, sel)
        assert dist.chunk_probs is not None
        for l, chunk_probs in enumerate(dist.chunk_probs):
            assert abs(float(chunk_probs.sum()) - float(dist.probs[l])) < 1e-9
        assert abs(float(dist.probs.sum()) - 1.0) < 1e-6


def test_two_chunk_sentences_match_enumeration():
    rng = np.random.default_rng(6)
    E = random_table(rng)
    sel = seeded(ChunkedBowSelector(2, 3, chunk_size=7), 6)
    x = [1, 2]
    d = [[int(t) for t in rng.integers(1, 10, size=14)] for _ in range(2)]
    dist = score_chunked(x, d, E, sel)

    W, v = sel.scorer.W.detach().numpy(), sel.scorer.v.detach().numpy()
    En = E.numpy()
    q = En[x].mean(axis=0)
    logits = []
    for l in range(2):
        for j in range(2):
            onehot = np.zeros(ONEHOT_DIM)
            onehot[l] = 1.0
            h = np.concatenate([q, En[d[l][7 * j:7 * j + 7]].mean(axis=0), onehot])
            logits.append(v @ np.maximum(W @ h, 0.0))
    p = np.exp(logits) / np.exp(logits).sum()
    np.testing.assert_allclose(dist.numpy(), [p[0] + p[1], p[2] + p[3]], atol=1e-9)
    np.testing.assert_allclose(torch.cat(dist.chunk_probs).detach().numpy(), p, atol=1e-9)


def test_fixed_chunk_count_uses_padded_rows():
    sel = ChunkedBowSelector(2, 3, chunk_size=3, fixed_j=True)
    grid = torch.tensor([[5, 6, PAD, PAD, PAD, PAD, PAD], [5, 6, 7, 8, PAD, PAD, PAD]])
    chunks, owners = sel.chunk_grid(grid, [2, 4])
    assert owners.tolist() == [0, 0, 0, 1, 1, 1]
    assert chunks.shape == (6, 3)


def test_invalid_chunk_size():
    with pytest.raises(ShapeError):
        ChunkedBowSelector(2, 3, chunk_size=0)


# -- CNN ---------------------------------------------------------------------

def test_cnn_with_zero_filters_is_uniform():
    sel = seeded(CnnSelector(2, 3, filters=1, width=2), 0)
    with torch.no_grad():
        sel.filters.zero_()
        sel.b_conv.fill_(0.7)
        sel.scorer.W[:, 1:].zero_()
    dist = score_cnn([1, 2], random_grid(np.random.default_rng(0), 3, 4), random_table(np.random.default_rng(1)), sel)
    np.testing.assert_allclose(dist.numpy(), [1 / 3] * 3, atol=1e-12)


def test_cnn_identical_sentences_get_equal_probability():
    sel = seeded(CnnSelector(2, 3, filters=2, width=2), 2)
    with torch.no_grad():
        sel.scorer.W[:, 2:].zero_()
    dist = score_cnn([1, 2], [[3, 4, 5], [3, 4, 5]], random_table(np.random.default_rng(2)), sel)
    assert float(dist.probs[0]) == pytest.approx(float(dist.probs[1]), abs=1e-15)


def reference_cnn(x, d, E, filters, bias, W, v):
    E, filters, bias = E.numpy(), filters.detach().numpy(), bias.detach().numpy()
    W, v = W.detach().numpy(), v.detach().numpy()
    F, _, w = filters.shape
    logits = []
    for l, row in enumerate(d):
        seq = E[list(x) + list(row)]
        T = seq.shape[0]
        conv = np.array([[np.sum(filters[f] * seq[t:t + w].T) + bias[f] for f in range(F)] for t in range(T - w + 1)])
        onehot = np.zeros(ONEHOT_DIM)
        onehot[l] = 1.0
        h = np.concatenate([conv.max(axis=0), onehot])
        logits.append(v @ np.maximum(W @ h, 0.0))
    logits = np.array(logits)
    e = np.exp(logits - logits.max())
    return e / e.sum()


@pytest.mark.parametrize("seed", range(5))
def test_cnn_matches_reference_forward(seed):
    rng = np.random.default_rng(seed)
    E = random_table(rng)
    sel = seeded(CnnSelector(2, 3, filters=2, width=2), seed)
    with torch.no_grad():
        sel.b_conv.copy_(torch.tensor(rng.normal(size=2)))
    x, d = [1, 2], random_grid(rng, 2, 3)
    dist = score_cnn(x, d, E, sel)
    expected = reference_cnn(x, d, E, sel.filters, sel.b_conv, sel.scorer.W, sel.scorer.v)
    np.testing.assert_allclose(dist.numpy(), expected, atol=1e-9)


def test_cnn_pads_inputs_shorter_than_the_filter():
    sel = seeded(CnnSelector(2, 3, filters=2, width=6), 1)
    dist = score_cnn([1], [[2, 3], [4, PAD]], random_table(np.random.default_rng(3)), sel)
    assert len(dist) == 2


# -- shared properties -------------------------------------------------------

def row_lengths(grid):
    return [sum(t != PAD for t in row) for row in grid]


@pytest.mark.parametrize("kind", ["bow", "chunk", "cnn"])
def test_outputs_are_distributions(kind):
    rng = np.random.default_rng(10)
    for seed in range(100):
        sel = seeded(build_selector(kind, 2, 3, chunk_size=2, filters=2, width=3), seed, scale=1.0)
        d = random_grid(rng, int(rng.integers(1, 8)), 5)
        p = sel(as_ids([1, 2]), torch.tensor(d), row_lengths(d), random_table(rng)).numpy()
        assert np.all(p >= 0.0)
        assert abs(p.sum() - 1.0) < 1e-6


@pytest.mark.parametrize("kind", ["bow", "cnn"])
def test_permuting_sentences_with_their_indices_permutes_probabilities(kind):
    rng = np.random.default_rng(12)
    E = random_table(rng)
    sel = seeded(build_selector(kind, 2, 3, filters=2, width=2), 3)
    permuted = seeded(build_selector(kind, 2, 3, filters=2, width=2), 3)
    d = random_grid(rng, 3, 4)
    perm = [2, 0, 1]
    # the index one-hot weights travel with their sentences
    feature_dim = sel.scorer.W.shape[1] - ONEHOT_DIM
    with torch.no_grad():
        for new, old in enumerate(perm):
            permuted.scorer.W[:, feature_dim + new] = sel.scorer.W[:, feature_dim + old]
    original = sel(as_ids([1, 2]), torch.tensor(d), row_lengths(d), E).numpy()
    d_perm = [d[i] for i in perm]
    moved = permuted(as_ids([1, 2]), torch.tensor(d_perm), row_lengths(d_perm), E).numpy()
    np.testing.assert_allclose(moved, original[perm], atol=1e-12)


@pytest.mark.parametrize("kind", ["bow", "chunk", "cnn"])
def test_selection_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(20)
    checked = 0
    for seed in range(60):
        model = tiny_model(vocab_size=12, embed=2, hidden=3, selector=kind, seed=seed, scale=0.5,
                           chunk_size=2, filters=2, width=2)
        ex = random_example(rng, 12, num_sentences=3, row_length=4)
        if relu_margin(model, ex) < 1e-3:
            continue
        target = ex.gold_sentence

        def loss():
            return -model.select(ex).log_probs[target]

        params = [model.embedding] + list(model.selector.parameters())
        assert finite_difference_error(loss, params, seed=seed) < FD_TOLERANCE
        checked += 1
        if checked == 20:
            break
    assert checked == 20


def test_too_many_sentences_for_the_index_one_hot():
    sel = seeded(BowSelector(2, 3), 0)
    with pytest.raises(ShapeError):
        score_bow([1], [[2]] * (ONEHOT_DIM + 1), random_table(np.random.default_rng(0)), sel)


def test_unknown_selector_kind():
    with pytest.raises(ValueError):
        build_selector("rnn", 2, 3)

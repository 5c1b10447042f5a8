from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainqa.templates import (
    MASK,
    HashingEmbedder,
    QuestionTemplate,
    TemplateError,
    TemplateRegistry,
    _bucket,
    cosine,
    fill_mask,
    mask_question,
    match_templates,
    tokenize,
)
from oracles import token_cosine

VOCAB = ["who", "what", "which", "directed", "director", "of", "the", "movie", "film", "acted", "in",
         "wrote", "writer", "year", "released", "language", "genre", "was", "is", "did", MASK]
SENTENCE = st.lists(st.sampled_from(VOCAB), min_size=1, max_size=10).map(" ".join)

FIVE = [
    QuestionTemplate("a_director", "who directed [mask]?"),
    QuestionTemplate("b_writer", "who wrote the movie [mask]?"),
    QuestionTemplate("c_year", "what year was [mask] released?"),
    QuestionTemplate("d_actor", "who acted in [mask]?"),
    QuestionTemplate("e_lang", "what language is the film [mask] in?"),
]


def test_vocabulary_has_no_bucket_collisions():
    # precondition for comparing hashed vectors with raw token counts
    assert len({_bucket(w, 1024) for w in VOCAB}) == len(VOCAB)


def test_frozen_regression_values():
    e = HashingEmbedder()
    a = e.embed("who directed [mask]?")
    assert cosine(a, e.embed("what color is [mask]?")) == pytest.approx(1 / math.sqrt(12), abs=1e-12)
    assert cosine(a, e.embed("who was the director of [mask]?")) == pytest.approx(2 / math.sqrt(18), abs=1e-12)


def test_tokenizer_keeps_mask_whole():
    assert tokenize("Who directed [MASK]?") == ["who", "directed", "[mask]"]


@settings(max_examples=100, deadline=None)
@given(SENTENCE, SENTENCE)
def test_cosine_matches_token_count_oracle(a, b):
    e = HashingEmbedder()
    assert cosine(e.embed(a), e.embed(b)) == pytest.approx(token_cosine(a, b), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(SENTENCE, SENTENCE)
def test_cosine_symmetric_and_bounded(a, b):
    e = HashingEmbedder()
    x, y = e.embed(a), e.embed(b)
    assert cosine(x, y) == pytest.approx(cosine(y, x), abs=1e-12)
    assert -1e-9 <= cosine(x, y) <= 1 + 1e-9
    assert cosine(x, x) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(SENTENCE, SENTENCE, st.floats(0.01, 100))
def test_scale_invariance(a, b, s):
    e = HashingEmbedder()
    x, y = e.embed(a), e.embed(b)
    assert cosine(s * x, y) == pytest.approx(cosine(x, y), abs=1e-9)


def test_embedding_is_deterministic_and_sparse_agrees():
    e = HashingEmbedder()
    texts = ["who directed [mask]?", "what year was [mask] released?"]
    dense = np.vstack([e.embed(t) for t in texts])
    assert np.array_equal(dense, e.embed_sparse(texts).toarray())
    assert np.array_equal(e.embed(texts[0]), HashingEmbedder().embed(texts[0]))


def test_zero_vector_guard():
    assert cosine(np.zeros(4), np.ones(4)) == 0.0
    with pytest.raises(TemplateError):
        HashingEmbedder().embed("   ")


@settings(max_examples=100, deadline=None)
@given(SENTENCE, st.integers(1, 5))
def test_ranking_matches_brute_force(q, k):
    reg = TemplateRegistry(FIVE)
    got = match_templates(reg, q, k)
    brute = sorted(((-round(token_cosine(q, t.pattern), 12), t.id) for t in FIVE))[:k]
    assert [m.score for m in got] == pytest.approx([-s for s, _ in brute], abs=1e-9)
    assert [m.template_id for m in got] == [tid for _, tid in brute]
    assert len(got) == k
    assert all(got[i].score >= got[i + 1].score for i in range(k - 1))


@settings(max_examples=30, deadline=None)
@given(SENTENCE, st.permutations(FIVE))
def test_full_k_is_permutation_of_registry(q, order):
    got = match_templates(TemplateRegistry(order), q, len(FIVE))
    assert sorted(m.template_id for m in got) == sorted(t.id for t in FIVE)
    assert got == match_templates(TemplateRegistry(FIVE), q, len(FIVE))


def test_exact_template_is_top_match():
    reg = TemplateRegistry(FIVE)
    for t in FIVE:
        top = match_templates(reg, t.pattern, 1)[0]
        assert top.template_id == t.id and top.score == pytest.approx(1.0)


def test_registry_validation():
    with pytest.raises(TemplateError):
        QuestionTemplate("x", "no mask here")
    with pytest.raises(TemplateError):
        QuestionTemplate("x", "[mask] and [mask]")
    with pytest.raises(TemplateError):
        TemplateRegistry([FIVE[0], FIVE[0]])
    with pytest.raises(TemplateError):
        match_templates(TemplateRegistry([]), "who?", 1)


def test_mask_question():
    assert mask_question("who directed Written on the Wind?", ["Written on the Wind"]) == "who directed [mask]?"
    assert mask_question("who acted in <GENERATED>-1?", []) == "who acted in [mask]?"
    assert mask_question("who directed [mask]?", ["x"]) == "who directed [mask]?"
    # longest mention wins
    assert mask_question("who directed The Big Sleep?", ["Big", "The Big Sleep"]) == "who directed [mask]?"
    assert fill_mask("who acted in [mask]?", ["A", "B"]) == "who acted in A, B?"


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["who directed X?", "X was released when?", "which films star X"]),
       st.text(alphabet="abcdefgh ", min_size=1, max_size=12).map(str.strip).filter(bool))
def test_masking_replaces_exactly_one_mention(pattern, seed):
    q = pattern.replace("X", seed)
    masked = mask_question(q, [seed])
    assert masked.count(MASK) == 1
    assert fill_mask(masked, [seed]) == q

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainqa.chains import Candidate, CandidateSet, LogicalChain, execute_chain
from chainqa.kg import loads_kg
from chainqa.reasoner import (
    ANSWER_REMINDER,
    NO_FACTS,
    SEPARATOR,
    TEXT_MODE,
    TUPLE_MODE,
    DenseIndex,
    build_context,
    count_tokens,
    dense_supplement,
    merge_candidates,
    parse_answer_list,
    reason,
)
from chainqa.templates import _bucket
from oracles import token_cosine

# Context sentences as printed in Table 1 (including the lowercase "wilder").
TABLE1_SENTENCES = [
    "Written on the Wind written by Robert wilder.",
    "Written on the Wind written by George Zuckerman.",
    "Written on the Wind directed by Douglas Sirk.",
    "Written on the Wind starred actors Dorothy Malone.",
]


def _table1_graph():
    return loads_kg(
        "Written on the Wind|written_by|Robert wilder\n"
        "Written on the Wind|written_by|George Zuckerman\n"
        "Written on the Wind|directed_by|Douglas Sirk\n"
        "Written on the Wind|starred_actors|Dorothy Malone\n"
    )


def _one_hop(g, seed, rels):
    cands = CandidateSet()
    for r in rels:
        cands.extend(execute_chain(g, [g.entity_id(seed)], LogicalChain.parse(f"{r}:forward")))
    return cands


def test_table1_serialized_text_sentences():
    g = _table1_graph()
    cands = _one_hop(g, "Written on the Wind", ["written_by", "directed_by", "starred_actors"])
    freq = {"written_by": 3, "directed_by": 2, "starred_actors": 1}
    ctx = build_context(g, cands, TEXT_MODE, 3000, lambda c: freq[c[0].relation])
    assert sorted(ctx.lines) == sorted(TABLE1_SENTENCES)
    assert ctx.lines[2:] == TABLE1_SENTENCES[2:]
    assert ctx.instruction().split("\n", 2)[1] == SEPARATOR


def test_tuple_mode_rendering():
    g = _table1_graph()
    ctx = build_context(g, _one_hop(g, "Written on the Wind", ["directed_by"]), TUPLE_MODE)
    assert ctx.lines == ["(Written on the Wind, directed_by, Douglas Sirk)"]
    assert "(s, r, o)" in ctx.instruction()


def test_multi_hop_path_is_rendered_edge_by_edge():
    g = loads_kg("A|directed_by|D\nB|directed_by|D\n")
    cands = execute_chain(g, [g.entity_id("A")], LogicalChain.parse("directed_by:forward,directed_by:backward"))
    ctx = build_context(g, cands, TEXT_MODE)
    assert ctx.lines == ["A directed by D, A directed by D.", "A directed by D, B directed by D."]


def test_empty_context():
    g = _table1_graph()
    ctx = build_context(g, CandidateSet(), TEXT_MODE)
    assert ctx.text == NO_FACTS and ctx.candidates == []


def _hub(n=1000, seed=7):
    rng = random.Random(seed)
    lines = [f"hub|r{rng.randrange(8)}|e{i:04d}_{'x ' * rng.randrange(3)}".strip() for i in range(n)]
    text = "\n".join(lines) + "\n"
    g = loads_kg(text)
    cands = CandidateSet()
    for r in range(8):
        if g.has_relation(f"r{r}"):
            cands.extend(execute_chain(g, [g.entity_id("hub")], LogicalChain.parse(f"r{r}:forward"), cap=10_000))
    freq = {f"r{r}": rng.randrange(1, 50) for r in range(8)}
    return g, cands, freq


@pytest.mark.parametrize("budget", [1, 7, 100, 1500, 100_000])
def test_truncation_matches_full_sort_oracle(budget):
    g, cands, freq = _hub()
    assert len(cands) == 1000
    ctx = build_context(g, cands, TEXT_MODE, budget, lambda c: freq[c[0].relation])
    # oracle: full sort by (-frequency, answer surface order == id order), greedy prefix
    ordered = sorted(cands, key=lambda c: (-freq[c.chain[0].relation], c.answer))
    want, used = [], 0
    for c in ordered:
        n = len(f"hub {c.chain[0].relation} {g.entity(c.answer)}.".split())
        if used + n > budget:
            break
        want.append(c)
        used += n
    assert ctx.candidates == want
    assert sum(count_tokens(l) for l in ctx.lines) <= budget


def test_zero_budget_rejected():
    g = _table1_graph()
    with pytest.raises(ValueError):
        build_context(g, CandidateSet(), TEXT_MODE, 0)


class _Reply:
    def __init__(self, *replies):
        self.replies = list(replies)
        self.calls = []

    def complete(self, instruction, input):
        self.calls.append((instruction, input))
        return self.replies.pop(0)


def _ctx():
    g = _table1_graph()
    return g, build_context(g, _one_hop(g, "Written on the Wind", ["directed_by", "starred_actors"]), TEXT_MODE, seeds=["Written on the Wind"])


def test_reason_keeps_only_context_entities():
    g, ctx = _ctx()
    b = _Reply('["Douglas  Sirk", "Alfred Hitchcock"]')
    sel = reason("who was the director of [mask]?", ctx, b, g)
    assert sel.answers == ("Douglas Sirk",)
    assert sel.dropped == ("Alfred Hitchcock",)
    assert b.calls[0][1] == "who was the director of Written on the Wind?"
    assert b.calls[0][0] == ctx.instruction()


def test_reason_abstains():
    g, ctx = _ctx()
    sel = reason("who was the director of [mask]?", ctx, _Reply("I don't know."), g)
    assert sel.abstained and sel.answers == ()


def test_reason_retries_then_abstains_on_garbage():
    g, ctx = _ctx()
    b = _Reply("[oops]", "[still, broken]")
    sel = reason("who was the director of [mask]?", ctx, b, g)
    assert sel.abstained and len(b.calls) == 2
    assert b.calls[1][1].endswith(ANSWER_REMINDER)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["Douglas Sirk", "Dorothy Malone", "Written on the Wind", "Nobody", "X Y"]), max_size=6))
def test_answers_are_subset_of_context(names):
    g, ctx = _ctx()
    import json

    sel = reason("q [mask]", ctx, _Reply(json.dumps(names)), g)
    shown = {"Douglas Sirk", "Dorothy Malone", "Written on the Wind"}
    assert set(sel.answers) <= shown
    assert set(sel.answers) == set(names) & shown


def test_parse_answer_list_forms():
    assert parse_answer_list('Sure: ["a", "b"]') == ["a", "b"]
    assert parse_answer_list("['a']") == ["a"]
    assert parse_answer_list("- a\n- b") == ["a", "b"]
    assert parse_answer_list("") is None
    assert parse_answer_list("[1, 2]") is None


DENSE_KB = """\
Casablanca|directed_by|Michael Curtiz
Casablanca|release_year|1942
Casablanca|in_language|English
The Big Sleep|directed_by|Howard Hawks
The Big Sleep|written_by|Leigh Brackett
The Big Sleep|starred_actors|Lauren Bacall
To Have and Have Not|directed_by|Howard Hawks
To Have and Have Not|release_year|1944
Lured|directed_by|Douglas Sirk
Lured|starred_actors|Lucille Ball
"""


def test_dense_supplement_matches_exhaustive_cosine():
    g = loads_kg(DENSE_KB)
    texts = [g.serialize(t) for t in g.triplets]
    words = {w for t in texts for w in t.lower().split()} | {"who", "directed", "was", "released"}
    assert len({_bucket(w, 1024) for w in words}) == len(words)
    for q in ["who directed The Big Sleep?", "Casablanca released year", "Lucille Ball"]:
        exhaustive = sorted(token_cosine(q, t) for t in texts)[::-1]
        for budget in (1, 3, 10):
            got = dense_supplement(q, g, budget, DenseIndex(g))
            got_scores = [token_cosine(q, g.serialize(g.triplets[g.triplets.index(_trip(g, c))])) for c in got]
            assert got_scores == pytest.approx(exhaustive[:budget], abs=1e-9)
    assert len(dense_supplement("who", g, 0)) == 0


def _trip(g, c):
    s, r, o = c.fact
    return next(t for t in g.triplets if (t.subject, g.relation(t.relation), t.object) == (s, r, o))


def test_merge_skips_facts_already_on_a_chain():
    g = loads_kg(DENSE_KB)
    chain = execute_chain(g, [g.entity_id("Lured")], LogicalChain.parse("directed_by:forward"))
    dense = dense_supplement("Lured directed by Douglas Sirk", g, 2, DenseIndex(g))
    merged = merge_candidates(chain, dense)
    facts = [c.fact for c in merged if c.fact]
    assert (g.entity_id("Lured"), "directed_by", g.entity_id("Douglas Sirk")) not in facts
    assert len(merged) == 2

"""Candidate reasoning: context rendering, answer selection, dense supplement."""
from __future__ import annotations

import ast
import json
import logging
import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chains import Candidate, CandidateSet, LogicalChain
from .kg import KnowledgeGraph, relation_surface
from .templates import Embedder, HashingEmbedder, fill_mask

log = logging.getLogger(__name__)

TUPLE_MODE = "tuple-explained"
TEXT_MODE = "serialized-text"
MODES = (TUPLE_MODE, TEXT_MODE)
DEFAULT_TOKEN_BUDGET = 3000

REASON_INSTRUCTION = (
    "Use the following pieces of context to answer the users question. "
    "If you don't know the answer, just say that you don't know, don't try to make up an answer."
)
TUPLE_RULES = (
    "Each tuple (s, r, o) means that the subject s has the relation r to the object o. "
    "The answer must be based on the given tuples and be exactly the subject s or the object o of a tuple."
)
SEPARATOR = "-------------"
NO_FACTS = "No relevant facts were found in the knowledge graph."
ANSWER_REMINDER = 'Reply only with a JSON list of answer names, e.g. ["name"].'

_WS = re.compile(r"\s+")


def _norm(s: str) -> str:
    return _WS.sub(" ", s).strip()


@dataclass
class ReasoningContext:
    mode: str
    text: str
    candidates: list[Candidate]
    source: CandidateSet
    budget: int
    seeds: tuple[str, ...] = ()
    lines: list[str] = field(default_factory=list)

    def instruction(self) -> str:
        head = REASON_INSTRUCTION if self.mode == TEXT_MODE else f"{REASON_INSTRUCTION} {TUPLE_RULES}"
        return f"{head}\n{SEPARATOR}\n{self.text}"

    def surfaces(self, graph: KnowledgeGraph) -> dict[str, str]:
        """Normalized -> canonical surface for every entity shown in the context."""
        out = {}
        for c in self.candidates:
            for s, _, o in c.edges():
                for e in (s, o):
                    name = graph.entity(e)
                    out.setdefault(_norm(name), name)
            for e in c.path:
                name = graph.entity(e)
                out.setdefault(_norm(name), name)
        return out


@dataclass
class Selection:
    answers: tuple[str, ...] = ()
    abstained: bool = False
    dropped: tuple[str, ...] = ()
    diagnostic: str | None = None


def render_candidate(graph: KnowledgeGraph, c: Candidate, mode: str) -> str:
    edges = c.edges()
    if not edges:
        name = graph.entity(c.answer)
        return f"({name})" if mode == TUPLE_MODE else f"{name}."
    if mode == TUPLE_MODE:
        return "; ".join(f"({graph.entity(s)}, {r}, {graph.entity(o)})" for s, r, o in edges)
    return ", ".join(
        f"{graph.entity(s)} {relation_surface(r)} {graph.entity(o)}" for s, r, o in edges
    ) + "."


def count_tokens(text: str) -> int:
    return len(text.split())


def priority_key(frequency: Callable[[LogicalChain], int], rank: Callable[[LogicalChain], int] | None = None):
    def key(c: Candidate):
        r = rank(c.chain) if rank is not None else 0
        return (r, -frequency(c.chain), len(c.chain), c.answer, c.seed, str(c.chain), c.path, c.fact or ())

    return key


def build_context(
    graph: KnowledgeGraph,
    candidates: CandidateSet,
    mode: str = TEXT_MODE,
    budget: int = DEFAULT_TOKEN_BUDGET,
    frequency: Callable[[LogicalChain], int] = lambda chain: 0,
    seeds: Sequence[str] = (),
    rank: Callable[[LogicalChain], int] | None = None,
) -> ReasoningContext:
    """Render candidates, highest priority first, until ``budget`` tokens are used.

    Priority is the rank of the matched template owning the chain (when ``rank``
    is given), then chain frequency (descending), chain length and answer entity
    id. The kept set is always a prefix of that order.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    ordered = sorted(candidates, key=priority_key(frequency, rank))
    kept, lines, used = [], [], 0
    for c in ordered:
        line = render_candidate(graph, c, mode)
        n = count_tokens(line)
        if used + n > budget:
            break
        kept.append(c)
        lines.append(line)
        used += n
    text = "\n".join(lines) if lines else NO_FACTS
    return ReasoningContext(mode, text, kept, candidates, budget, tuple(seeds), lines)


def parse_answer_list(raw: str) -> list[str] | None:
    """Bracketed list of strings, or one name per line. ``None`` if neither fits."""
    text = raw.strip()
    if not text:
        return None
    start, end = text.find("["), text.rfind("]")
    if start >= 0 and end > start:
        chunk = text[start : end + 1]
        for loader in (json.loads, ast.literal_eval):
            try:
                value = loader(chunk)
            except (ValueError, SyntaxError):
                continue
            if isinstance(value, list) and all(isinstance(v, str) for v in value):
                return [v.strip() for v in value if v.strip()]
        return None
    names = []
    for line in text.splitlines():
        line = re.sub(r"^\s*(?:[-*•]|\d+[.)])\s*", "", line).strip().strip("\"'").strip()
        if line:
            names.append(line)
    return names or None


def reason(
    subq: str,
    ctx: ReasoningContext,
    backend,
    graph: KnowledgeGraph,
) -> Selection:
    """Ask ``backend`` to pick answers for ``subq`` out of the context.

    ``subq`` is in template space; its ``[mask]`` is filled with the context seeds
    for the prompt. Backends exposing ``select_answers(subq, ctx, graph)`` bypass
    the text protocol (used by deterministic oracles). Answers not shown in the
    context are dropped.
    """
    if hasattr(backend, "select_answers"):
        names = list(backend.select_answers(subq, ctx, graph))
    else:
        question = fill_mask(subq, ctx.seeds)
        instruction = ctx.instruction()
        names = None
        raw = ""
        for text in (question, f"{question}\n\n{ANSWER_REMINDER}"):
            raw = backend.complete(instruction, text)
            if "don't know" in raw.lower() or "do not know" in raw.lower():
                return Selection(abstained=True, diagnostic="backend abstained")
            names = parse_answer_list(raw)
            if names is not None:
                break
        if names is None:
            return Selection(abstained=True, diagnostic=f"unparseable reply: {raw[:200]!r}")

    allowed = ctx.surfaces(graph)
    answers, dropped = [], []
    for name in names:
        canon = allowed.get(_norm(name))
        if canon is None:
            dropped.append(name)
        elif canon not in answers:
            answers.append(canon)
    if dropped:
        log.info("dropped %d answers not present in context: %s", len(dropped), dropped[:5])
    return Selection(tuple(answers), False, tuple(dropped))


class DenseIndex:
    """Embeds every serialized triplet once; ranks them by cosine to a query."""

    def __init__(self, graph: KnowledgeGraph, embedder: Embedder | None = None):
        self.graph = graph
        self.embedder = embedder or HashingEmbedder()
        texts = [graph.serialize(t) for t in graph.triplets]
        if not texts:
            self._matrix = None
            return
        if hasattr(self.embedder, "embed_sparse"):
            m = self.embedder.embed_sparse(texts)
            norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
            self._matrix, self._norms = m, norms
        else:
            m = np.vstack([self.embedder.embed(t) for t in texts])
            self._matrix, self._norms = m, np.linalg.norm(m, axis=1)

    def scores(self, text: str) -> np.ndarray:
        if self._matrix is None:
            return np.zeros(0)
        q = self.embedder.embed(text)
        qn = np.linalg.norm(q)
        dots = np.asarray(self._matrix @ q).ravel()
        denom = self._norms * qn
        out = np.zeros_like(dots)
        np.divide(dots, denom, out=out, where=denom > 0)
        return out

    def top(self, text: str, budget: int) -> list[int]:
        scores = self.scores(text)
        if budget <= 0 or scores.size == 0:
            return []
        order = np.lexsort((np.arange(scores.size), -scores))
        return [int(i) for i in order[:budget]]


_index_lock = threading.Lock()


def dense_supplement(
    subq: str,
    graph: KnowledgeGraph,
    budget: int,
    index: DenseIndex | None = None,
) -> CandidateSet:
    """Top-``budget`` triplets by cosine to ``subq``, as zero-length-chain candidates."""
    if budget <= 0:
        return CandidateSet()
    if index is None:
        with _index_lock:
            index = getattr(graph, "_dense_index", None)
            if index is None:
                index = DenseIndex(graph)
                graph._dense_index = index
    items = []
    for i in index.top(subq, budget):
        t = graph.triplets[i]
        fact = (t.subject, graph.relations[t.relation], t.object)
        items.append(Candidate(t.subject, LogicalChain(), t.object, (t.subject,), fact))
    return CandidateSet(items)


def merge_candidates(chain_cands: CandidateSet, dense: CandidateSet) -> CandidateSet:
    """Chain candidates plus dense facts not already covered by a chain edge."""
    covered = {e for c in chain_cands for e in c.edges()}
    out = CandidateSet(list(chain_cands.items))
    out.extend(c for c in dense if c.fact not in covered)
    return out

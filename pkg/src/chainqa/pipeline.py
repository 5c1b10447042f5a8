"""Four-stage question answering: decompose, retrieve, reason, respond."""
from __future__ import annotations

import json
import logging
import re
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, TextIO

from .backends import TemplateSummarizer
from .chains import DEFAULT_CAP, CandidateSet, ChainError, LogicalChain, Projection, execute_chain
from .gateway import GatewayError
from .kg import KnowledgeGraph
from .plan import DecompositionFailed, DecompositionPlan, decompose, render_plan, resolve_seeds
from .reasoner import (
    DEFAULT_TOKEN_BUDGET,
    TEXT_MODE,
    DenseIndex,
    Selection,
    build_context,
    dense_supplement,
    merge_candidates,
    reason,
)
from .templates import DEFAULT_TOP_K, TemplateRegistry, fill_mask, mask_question, match_templates

log = logging.getLogger(__name__)

RESPONSE_INSTRUCTION = (
    "With the task execution logs, the AI assistant needs to describe the process and inference results. "
    "Please first think carefully and directly answer my request based on the inference results. "
    "Then please detail your workflow step by step including the used models and inference results "
    "for my request in your friendly tone. Please filter out information that is not relevant to my "
    "request. If there is nothing in the results, please tell me you can't make it."
)
INABILITY = "Sorry, I can't make it: no answer to your request could be found in the knowledge graph."
DECOMPOSITION_FAILURE = "Sorry, I can't make it: your request could not be broken down into answerable sub-questions."

ANSWERED = "answered"
ABSTAINED = "abstained"
UNANSWERABLE = "unanswerable"


@dataclass
class EngineConfig:
    top_k: int = DEFAULT_TOP_K
    cap: int = DEFAULT_CAP
    mode: str = TEXT_MODE
    token_budget: int = DEFAULT_TOKEN_BUDGET
    dense_budget: int = 0
    dense_policy: str = "always"  # or "when-empty"

    def __post_init__(self):
        if self.dense_policy not in ("always", "when-empty"):
            raise ValueError("dense_policy must be 'always' or 'when-empty'")
        if not 1 <= self.top_k <= 10:
            raise ValueError("top_k must be in [1, 10]")


@dataclass
class ChainRun:
    chain: str
    frequency: int
    candidates: int


@dataclass
class StepRecord:
    step: int
    question: str
    masked_question: str
    dep: list[int]
    seeds: list[str] = field(default_factory=list)
    unresolved_seeds: list[str] = field(default_factory=list)
    matches: list[tuple[str, float]] = field(default_factory=list)
    chains: list[ChainRun] = field(default_factory=list)
    candidates: int = 0
    dense_candidates: int = 0
    context_lines: int = 0
    answers: list[str] = field(default_factory=list)
    abstained: bool = False
    dropped: list[str] = field(default_factory=list)
    diagnostic: str | None = None
    status: str = ANSWERED
    elapsed_ms: float = 0.0

    def to_dict(self, timings: bool = True) -> dict[str, Any]:
        d = asdict(self)
        d["matches"] = [{"template": t, "score": round(s, 6)} for t, s in self.matches]
        if not timings:
            d.pop("elapsed_ms")
        return d


@dataclass
class ExecutionLog:
    query: str
    plan: str | None = None
    steps: list[StepRecord] = field(default_factory=list)
    final_answers: list[str] = field(default_factory=list)
    backends: dict[str, str] = field(default_factory=dict)
    error: str | None = None
    elapsed_ms: float = 0.0

    def render(self) -> str:
        """Timing-free text form handed to the summarizer."""
        lines = [f"Request: {self.query}"]
        for r in self.steps:
            lines.append(json.dumps(r.to_dict(timings=False), ensure_ascii=False, sort_keys=True))
        lines.append("Final answers: " + json.dumps(self.final_answers, ensure_ascii=False))
        return "\n".join(lines)

    def records(self, timings: bool = True) -> list[dict[str, Any]]:
        head = {"type": "query", "query": self.query, "plan": self.plan, "backends": self.backends, "error": self.error}
        out = [head]
        out.extend({"type": "step", **r.to_dict(timings)} for r in self.steps)
        tail = {"type": "final", "answers": self.final_answers}
        if timings:
            tail["elapsed_ms"] = self.elapsed_ms
        out.append(tail)
        return out

    def dump_jsonl(self, out: TextIO, timings: bool = True) -> None:
        for rec in self.records(timings):
            out.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")

    def save(self, path: str | Path, timings: bool = True) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            self.dump_jsonl(fh, timings)


@dataclass
class Response:
    answers: tuple[str, ...]
    narrative: str
    log: ExecutionLog


def _mentions(text: str, answer: str) -> bool:
    squash = lambda s: re.sub(r"\s+", " ", s)  # noqa: E731
    return squash(answer) in squash(text)


def template_narrative(log_: ExecutionLog) -> str:
    if not log_.final_answers:
        return INABILITY
    parts = [f"Based on the inference results, the answer to your request is {_join(log_.final_answers)}."]
    for r in log_.steps:
        seeds = _join(r.seeds) if r.seeds else "no seed entity"
        if r.answers:
            found = f"the knowledge graph gives {_join(r.answers)}"
        else:
            found = "no answer was found"
        parts.append(f'Step {r.step + 1}: for the sub-question "{r.question}" starting from {seeds}, {found}.')
    return " ".join(parts)


def _join(items: list[str]) -> str:
    if len(items) == 1:
        return items[0]
    return ", ".join(items[:-1]) + " and " + items[-1]


def generate_response(log_: ExecutionLog, backend) -> str:
    """Narrative from the backend, or the template renderer when it has no text protocol or fails."""
    if isinstance(backend, TemplateSummarizer) or not hasattr(backend, "complete"):
        return template_narrative(log_)
    try:
        text = backend.complete(RESPONSE_INSTRUCTION, log_.render()).strip()
    except GatewayError as exc:
        log.warning("summarizer failed, using template narrative: %s", exc)
        return template_narrative(log_)
    if not log_.final_answers:
        return text or INABILITY
    missing = [a for a in log_.final_answers if not _mentions(text, a)]
    if missing:
        text = f"{text} Final answers: {_join(log_.final_answers)}."
    return text


def _name(backend) -> str:
    return getattr(backend, "name", type(backend).__name__)


class Engine:
    """Holds the shared, immutable KG state plus the stage backends."""

    def __init__(
        self,
        graph: KnowledgeGraph,
        registry: TemplateRegistry,
        projection: Projection,
        decomposer,
        reasoner,
        summarizer=None,
        config: EngineConfig | None = None,
    ):
        self.graph = graph
        self.registry = registry
        self.projection = projection
        self.decomposer = decomposer
        self.reasoner = reasoner
        self.summarizer = summarizer or TemplateSummarizer()
        self.config = config or EngineConfig()
        self._dense: DenseIndex | None = None
        self._dense_lock = threading.Lock()

    def dense_index(self) -> DenseIndex:
        with self._dense_lock:
            if self._dense is None:
                self._dense = DenseIndex(self.graph)
            return self._dense

    def retrieve(self, masked: str, seed_ids: list[int], top_k: int | None = None):
        """Match templates, union their projected chains and execute them."""
        k = top_k or self.config.top_k
        matches = match_templates(self.registry, masked, k)
        freq: dict[LogicalChain, int] = {}
        rank: dict[LogicalChain, int] = {}
        for i, m in enumerate(matches):
            for chain, n in self.projection[m.template_id]:
                if chain not in rank:
                    rank[chain] = i
                    freq[chain] = n
        cands = CandidateSet()
        runs = []
        for chain in freq:
            try:
                got = execute_chain(self.graph, seed_ids, chain, self.config.cap)
            except ChainError as exc:
                log.warning("skipping chain %s: %s", chain, exc)
                continue
            runs.append(ChainRun(str(chain), freq[chain], len(got)))
            cands.extend(got)
        return matches, freq, rank, runs, cands

    def run_step(self, plan: DecompositionPlan, step_id: int, prior: dict[int, tuple[str, ...]]) -> StepRecord:
        t0 = time.perf_counter()
        step = plan[step_id]
        masked = mask_question(step.question, step.literal_seeds)
        rec = StepRecord(step.id, step.question, masked, list(step.dep))
        resolved = resolve_seeds(plan, step_id, prior)
        ids = []
        for s in resolved:
            eid = self.graph.find_entity(s)
            if eid is None:
                rec.unresolved_seeds.append(s)
            else:
                ids.append(eid)
        ids.sort()
        rec.unresolved_seeds.sort()
        rec.seeds = [self.graph.entity(i) for i in ids]
        if not ids:
            rec.status = UNANSWERABLE
            rec.elapsed_ms = (time.perf_counter() - t0) * 1000
            return rec

        matches, freq, rank, runs, cands = self.retrieve(masked, ids)
        rec.matches = [(m.template_id, m.score) for m in matches]
        rec.chains = runs
        rec.candidates = len(cands)
        cfg = self.config
        if cfg.dense_budget > 0 and (cfg.dense_policy == "always" or not cands):
            dense = dense_supplement(fill_mask(masked, rec.seeds), self.graph, cfg.dense_budget, self.dense_index())
            merged = merge_candidates(cands, dense)
            rec.dense_candidates = len(merged) - len(cands)
            cands = merged
        ctx = build_context(
            self.graph,
            cands,
            cfg.mode,
            cfg.token_budget,
            lambda c: freq.get(c, 0),
            rec.seeds,
            lambda c: rank.get(c, len(matches)),
        )
        rec.context_lines = len(ctx.candidates)
        sel: Selection = reason(masked, ctx, self.reasoner, self.graph)
        rec.answers = list(sel.answers)
        rec.abstained = sel.abstained
        rec.dropped = list(sel.dropped)
        rec.diagnostic = sel.diagnostic
        rec.status = ABSTAINED if sel.abstained else (ANSWERED if sel.answers else UNANSWERABLE)
        rec.elapsed_ms = (time.perf_counter() - t0) * 1000
        return rec

    def answer(self, query: str) -> Response:
        t0 = time.perf_counter()
        log_ = ExecutionLog(
            query,
            backends={
                "decompose": _name(self.decomposer),
                "reason": _name(self.reasoner),
                "summarize": _name(self.summarizer),
            },
        )
        try:
            plan = decompose(query, self.decomposer)
        except DecompositionFailed as exc:
            log_.error = f"decomposition failed: {exc}"
            log_.elapsed_ms = (time.perf_counter() - t0) * 1000
            return Response((), DECOMPOSITION_FAILURE, log_)
        log_.plan = render_plan(plan)
        prior: dict[int, tuple[str, ...]] = {}
        for step in plan.steps:
            rec = self.run_step(plan, step.id, prior)
            prior[step.id] = tuple(rec.answers)
            log_.steps.append(rec)
        finals: list[str] = []
        for sid in plan.terminal_steps():
            for a in prior[sid]:
                if a not in finals:
                    finals.append(a)
        log_.final_answers = finals
        narrative = generate_response(log_, self.summarizer)
        log_.elapsed_ms = (time.perf_counter() - t0) * 1000
        return Response(tuple(finals), narrative, log_)


def answer(query: str, engine: Engine) -> Response:
    return engine.answer(query)

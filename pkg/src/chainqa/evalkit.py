"""Benchmark loading, Hits@1 / F1 metrics and the top-K sweep."""
from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence, TextIO

log = logging.getLogger(__name__)

_BRACKET = re.compile(r"\[([^\[\]]+)\]")
_WS = re.compile(r"\s+")
_HOP = re.compile(r"(\d)-?hop")


class QaFormatError(ValueError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def normalize_answer(s: str) -> str:
    return _WS.sub(" ", s).strip()


@dataclass(frozen=True)
class QaExample:
    question: str
    seed: str
    answers: frozenset[str]
    split: str = "test"
    hop: int | None = None
    template_id: str | None = None

    @property
    def query(self) -> str:
        """Question with the seed brackets removed, as a user would type it."""
        return self.question.replace(f"[{self.seed}]", self.seed)


def _metaqa(lines: Iterable[str], split: str, hop: int | None) -> list[QaExample]:
    out = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise QaFormatError("expected question<TAB>answers", line_no)
        question, answers = parts[0], parts[1]
        gold = frozenset(a.strip() for a in answers.split("|") if a.strip())
        if not gold:
            raise QaFormatError("empty answer list", line_no)
        seeds = _BRACKET.findall(question)
        if len(seeds) != 1:
            raise QaFormatError(f"expected exactly one [bracketed] entity, found {len(seeds)}", line_no)
        tid = parts[2].strip() if len(parts) > 2 and parts[2].strip() else None
        out.append(QaExample(question.strip(), seeds[0].strip(), gold, split, hop, tid))
    return out


def _webqsp(lines: Iterable[str], split: str, hop: int | None) -> list[QaExample]:
    """Flat JSONL: ``{"question": str, "seed": str, "answers": [str, ...]}`` per line."""
    out = []
    for line_no, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
            question, seed = rec["question"], rec["seed"]
            gold = frozenset(a.strip() for a in rec["answers"] if a.strip())
        except (ValueError, KeyError, TypeError) as exc:
            raise QaFormatError(f"bad record: {exc}", line_no) from None
        if not gold:
            raise QaFormatError("empty answer list", line_no)
        out.append(QaExample(question, seed, gold, split, hop, rec.get("template_id")))
    return out


def load_qa(
    source: str | Path | TextIO,
    format: str = "metaqa",
    split: str = "test",
    hop: int | None = None,
) -> list[QaExample]:
    """Load QA pairs. For paths, ``hop`` defaults to the ``Nhop`` in the file name."""
    parser = {"metaqa": _metaqa, "webqsp-simplified": _webqsp}.get(format)
    if parser is None:
        raise ValueError(f"unknown QA format {format!r}")
    if isinstance(source, (str, Path)):
        if hop is None:
            m = _HOP.search(Path(source).name)
            hop = int(m.group(1)) if m else None
        with open(source, encoding="utf-8") as fh:
            return parser(fh, split, hop)
    return parser(source, split, hop)


def hits_at_1(predictions: Sequence[Sequence[str]], gold: Sequence[Iterable[str]], any_in_set: bool = False) -> float:
    """Fraction of examples whose top prediction is a gold answer.

    ``any_in_set`` counts a hit when any predicted answer is gold instead.
    """
    if len(predictions) != len(gold):
        raise ValueError(f"{len(predictions)} predictions for {len(gold)} gold sets")
    if not predictions:
        return 0.0
    hits = 0
    for pred, g in zip(predictions, gold):
        gs = {normalize_answer(x) for x in g}
        if any_in_set:
            hits += any(normalize_answer(p) in gs for p in pred)
        else:
            hits += bool(pred) and normalize_answer(pred[0]) in gs
    return hits / len(predictions)


def f1(pred: Iterable[str], gold: Iterable[str]) -> float:
    p = {normalize_answer(x) for x in pred}
    g = {normalize_answer(x) for x in gold}
    if not p or not g:
        return 0.0
    tp = len(p & g)
    if tp == 0:
        return 0.0
    precision, recall = tp / len(p), tp / len(g)
    return 2 * precision * recall / (precision + recall)


def macro_f1(predictions: Sequence[Iterable[str]], gold: Sequence[Iterable[str]]) -> float:
    if len(predictions) != len(gold):
        raise ValueError(f"{len(predictions)} predictions for {len(gold)} gold sets")
    if not predictions:
        return 0.0
    return sum(f1(p, g) for p, g in zip(predictions, gold)) / len(predictions)


@dataclass
class ExampleResult:
    question: str
    predictions: list[str]
    gold: list[str]
    hop: int | None = None
    candidates: int = 0
    error: str | None = None
    log_ref: str | None = None


@dataclass
class EvalReport:
    results: list[ExampleResult] = field(default_factory=list)
    hits_at_1: float = 0.0
    f1: float = 0.0
    failures: int = 0
    candidates: int = 0
    by_hop: dict[str, float] = field(default_factory=dict)

    def footer(self) -> dict:
        return {
            "type": "aggregate",
            "examples": len(self.results),
            "hits_at_1": self.hits_at_1,
            "f1": self.f1,
            "failures": self.failures,
            "candidates": self.candidates,
            "hits_at_1_by_hop": self.by_hop,
        }

    def write(self, out: TextIO) -> None:
        for r in self.results:
            rec = {"type": "example", **r.__dict__}
            out.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
        out.write(json.dumps(self.footer(), sort_keys=True) + "\n")


def evaluate(
    examples: Sequence[QaExample],
    answer_fn: Callable[[str], "object"],
    workers: int = 1,
    any_in_set: bool = False,
    log_dir: str | Path | None = None,
) -> EvalReport:
    """Run ``answer_fn(query) -> Response`` over every example and aggregate.

    Per-example exceptions count as misses and are tallied in ``failures``.
    """

    def run(i_ex):
        i, ex = i_ex
        try:
            resp = answer_fn(ex.query)
        except Exception as exc:  # one bad example must not sink the run
            log.warning("example %d failed: %s", i, exc)
            return ExampleResult(ex.question, [], sorted(ex.answers), ex.hop, error=repr(exc))
        ref = None
        if log_dir is not None:
            ref = str(Path(log_dir) / f"example_{i:05d}.jsonl")
            resp.log.save(ref)
        cands = sum(r.candidates for r in resp.log.steps)
        return ExampleResult(ex.question, list(resp.answers), sorted(ex.answers), ex.hop, cands, None, ref)

    if log_dir is not None:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
    items = list(enumerate(examples))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(x) for x in items]

    preds = [r.predictions for r in results]
    golds = [ex.answers for ex in examples]
    report = EvalReport(
        results=results,
        hits_at_1=hits_at_1(preds, golds, any_in_set),
        f1=macro_f1(preds, golds),
        failures=sum(r.error is not None for r in results),
        candidates=sum(r.candidates for r in results),
    )
    hops = sorted({ex.hop for ex in examples if ex.hop is not None})
    for h in hops:
        idx = [i for i, ex in enumerate(examples) if ex.hop == h]
        report.by_hop[f"{h}hop"] = hits_at_1([preds[i] for i in idx], [golds[i] for i in idx], any_in_set)
    return report


@dataclass
class SweepRow:
    k: int
    hits_at_1: float
    f1: float
    candidates: int
    failures: int


def sweep_k(
    examples: Sequence[QaExample],
    engine,
    k_values: Iterable[int],
    workers: int = 1,
    any_in_set: bool = False,
) -> list[SweepRow]:
    """Evaluate the same engine at several top-K values."""
    from .pipeline import Engine  # local: pipeline imports are heavy and optional here

    rows = []
    for k in k_values:
        eng = Engine(
            engine.graph,
            engine.registry,
            engine.projection,
            engine.decomposer,
            engine.reasoner,
            engine.summarizer,
            replace(engine.config, top_k=k),
        )
        rep = evaluate(examples, eng.answer, workers, any_in_set)
        rows.append(SweepRow(k, rep.hits_at_1, rep.f1, rep.candidates, rep.failures))
    return rows


def write_sweep(rows: Sequence[SweepRow], out: TextIO, metric: str = "hits_at_1") -> None:
    """Two-column TSV ``k<TAB>metric``."""
    out.write(f"k\t{metric}\n")
    for r in rows:
        out.write(f"{r.k}\t{getattr(r, metric):.6f}\n")


def sweep_json(rows: Sequence[SweepRow]) -> str:
    """Plot-ready export: parallel arrays keyed by column."""
    cols = {name: [getattr(r, name) for r in rows] for name in ("k", "hits_at_1", "f1", "candidates", "failures")}
    return json.dumps(cols, sort_keys=True)

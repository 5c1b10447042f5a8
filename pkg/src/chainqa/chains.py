"""Logical chains: execution over a graph, mining from QA pairs, template projection."""
from __future__ import annotations

import io
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence, TextIO

from .kg import BACKWARD, DIRECTIONS, FORWARD, KnowledgeGraph, UnknownIdError

log = logging.getLogger(__name__)

DEFAULT_MAX_HOPS = 3
DEFAULT_CAP = 512
PROJECTION_HEADER = "# chainqa projection v1"


class ChainError(ValueError):
    pass


class Step(NamedTuple):
    relation: str
    direction: str = FORWARD

    def __str__(self) -> str:
        return f"{self.relation}:{self.direction}"


class LogicalChain(tuple):
    """Ordered ``(relation, direction)`` steps. Hashable and totally ordered."""

    def __new__(cls, steps: Iterable[Step | tuple[str, str]] = ()):
        out = []
        for st in steps:
            st = Step(*st)
            if st.direction not in DIRECTIONS:
                raise ChainError(f"bad direction {st.direction!r}")
            out.append(st)
        return super().__new__(cls, out)

    @classmethod
    def parse(cls, text: str) -> "LogicalChain":
        """Parse ``rel:dir,rel:dir``; an empty string is the zero-length chain."""
        text = text.strip()
        if not text:
            return cls()
        steps = []
        for part in text.split(","):
            rel, sep, direction = part.strip().rpartition(":")
            if not sep or not rel:
                raise ChainError(f"bad chain step {part!r}")
            steps.append(Step(rel, direction))
        return cls(steps)

    def __str__(self) -> str:
        return ",".join(str(s) for s in self)

    def __repr__(self) -> str:
        return f"LogicalChain({str(self)!r})"


@dataclass(frozen=True)
class Candidate:
    """One retrieved answer with the path that reached it (``path[0]`` is the seed)."""

    seed: int
    chain: LogicalChain
    answer: int
    path: tuple[int, ...]
    # set only for supplementary facts retrieved outside chain execution
    fact: tuple[int, str, int] | None = None

    def edges(self) -> list[tuple[int, str, int]]:
        """Edges of the path in graph orientation (backward steps flipped)."""
        if self.fact is not None:
            return [self.fact]
        out = []
        for i, step in enumerate(self.chain):
            a, b = self.path[i], self.path[i + 1]
            out.append((a, step.relation, b) if step.direction == FORWARD else (b, step.relation, a))
        return out


@dataclass
class CandidateSet:
    items: list[Candidate] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Candidate]:
        return iter(self.items)

    @property
    def answers(self) -> set[int]:
        return {c.answer for c in self.items}

    def extend(self, other: Iterable[Candidate]) -> None:
        seen = {(c.seed, c.chain, c.answer, c.path, c.fact) for c in self.items}
        for c in other:
            key = (c.seed, c.chain, c.answer, c.path, c.fact)
            if key not in seen:
                seen.add(key)
                self.items.append(c)


def _resolve_chain(graph: KnowledgeGraph, chain: LogicalChain) -> list[tuple[int, str]]:
    out = []
    for st in chain:
        try:
            out.append((graph.relation_id(st.relation), st.direction))
        except UnknownIdError:
            raise ChainError(f"chain {chain} uses unknown relation {st.relation!r}") from None
    return out


def execute_chain(
    graph: KnowledgeGraph,
    seeds: Iterable[int],
    chain: LogicalChain,
    cap: int = DEFAULT_CAP,
) -> CandidateSet:
    """Follow ``chain`` from every seed; one candidate per reachable terminal entity.

    The frontier is a set per step, so revisiting entities across steps is allowed.
    When several paths reach the same entity the lexicographically smallest
    id-path is kept. Per seed, answers are truncated to the ``cap`` smallest ids.
    """
    seeds = sorted(set(seeds))
    if not seeds:
        raise ChainError("execute_chain needs at least one seed")
    if cap < 1:
        raise ChainError("cap must be >= 1")
    for s in seeds:
        graph.entity(s)
    steps = _resolve_chain(graph, chain)

    items: list[Candidate] = []
    for seed in seeds:
        frontier: dict[int, tuple[int, ...]] = {seed: (seed,)}
        for rid, direction in steps:
            nxt: dict[int, tuple[int, ...]] = {}
            for ent in sorted(frontier):
                path = frontier[ent]
                for n in graph.neighbors(ent, rid, direction):
                    cand = path + (n,)
                    prev = nxt.get(n)
                    if prev is None or cand < prev:
                        nxt[n] = cand
            frontier = nxt
            if not frontier:
                break
        for ans in sorted(frontier)[:cap]:
            items.append(Candidate(seed, chain, ans, frontier[ans]))
    return CandidateSet(items)


def reachable(graph: KnowledgeGraph, seeds: set[int], step: tuple[int, str]) -> set[int]:
    rid, direction = step
    out: set[int] = set()
    for e in seeds:
        out |= graph.neighbors(e, rid, direction)
    return out


@dataclass
class QaPair:
    template_id: str
    seed: str
    answers: frozenset[str]


@dataclass
class MiningResult:
    mined: list[tuple[str, LogicalChain, int]]
    skipped: list[int] = field(default_factory=list)


def enumerate_chains(
    graph: KnowledgeGraph, seed: int, answers: set[int], max_hops: int
) -> set[LogicalChain]:
    """All chains of length 1..max_hops whose endpoint set from ``seed`` hits ``answers``."""
    found: set[LogicalChain] = set()

    def walk(prefix: tuple[tuple[int, str], ...], frontier: set[int]) -> None:
        if len(prefix) == max_hops:
            return
        options: set[tuple[int, str]] = set()
        for e in frontier:
            options.update((r, FORWARD) for r in graph.forward.get(e, {}))
            options.update((r, BACKWARD) for r in graph.backward.get(e, {}))
        for opt in sorted(options):
            nxt = reachable(graph, frontier, opt)
            path = prefix + (opt,)
            if nxt & answers:
                found.add(LogicalChain((graph.relations[r], d) for r, d in path))
            walk(path, nxt)

    walk((), {seed})
    return found


def mine_chains(
    graph: KnowledgeGraph, qa: Sequence[QaPair], max_hops: int = DEFAULT_MAX_HOPS
) -> MiningResult:
    """Count (template, chain) co-occurrences over training pairs, once per pair.

    Pairs whose seed is not in the graph are skipped; their indices are reported
    in ``MiningResult.skipped``.
    """
    if not 1 <= max_hops <= 4:
        raise ChainError("max_hops must be in [1, 4]")
    counts: Counter[tuple[str, LogicalChain]] = Counter()
    skipped = []
    for i, pair in enumerate(qa):
        seed = graph.find_entity(pair.seed)
        if seed is None:
            skipped.append(i)
            continue
        answers = {a for a in (graph.find_entity(x) for x in pair.answers) if a is not None}
        if not answers:
            continue
        for chain in enumerate_chains(graph, seed, answers, max_hops):
            counts[(pair.template_id, chain)] += 1
    if skipped:
        log.warning("skipped %d QA pairs with seeds missing from the graph", len(skipped))
    mined = sorted(
        ((t, c, n) for (t, c), n in counts.items()), key=lambda x: (x[0], -x[2], x[1])
    )
    return MiningResult(mined, skipped)


@dataclass
class Projection:
    """template id -> [(chain, frequency)] sorted by frequency desc, then chain."""

    chains: dict[str, list[tuple[LogicalChain, int]]] = field(default_factory=dict)

    def __getitem__(self, template_id: str) -> list[tuple[LogicalChain, int]]:
        return self.chains.get(template_id, [])

    def __contains__(self, template_id: str) -> bool:
        return template_id in self.chains

    def templates(self) -> list[str]:
        return sorted(self.chains)

    def frequency(self, chain: LogicalChain) -> int:
        return max((n for rows in self.chains.values() for c, n in rows if c == chain), default=0)

    def dumps(self) -> str:
        buf = io.StringIO()
        self.dump(buf)
        return buf.getvalue()

    def dump(self, out: TextIO) -> None:
        out.write(PROJECTION_HEADER + "\n")
        for tid in self.templates():
            rows = self.chains[tid]
            if not rows:
                out.write(f"{tid}\t0\t-\n")
            for chain, n in rows:
                out.write(f"{tid}\t{n}\t{chain}\n")

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            self.dump(fh)

    @classmethod
    def load(cls, source: str | Path | TextIO) -> "Projection":
        if isinstance(source, (str, Path)):
            with open(source, encoding="utf-8") as fh:
                return cls._parse(fh)
        return cls._parse(source)

    @classmethod
    def loads(cls, text: str) -> "Projection":
        return cls._parse(io.StringIO(text))

    @classmethod
    def _parse(cls, lines: Iterable[str]) -> "Projection":
        it = iter(lines)
        header = next(it, "").rstrip("\n")
        if header != PROJECTION_HEADER:
            raise ChainError(f"not a projection file (header {header!r})")
        chains: dict[str, list[tuple[LogicalChain, int]]] = {}
        for line_no, line in enumerate(it, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ChainError(f"line {line_no}: expected 3 tab-separated fields")
            tid, n, chain = parts
            rows = chains.setdefault(tid, [])
            if chain != "-":
                rows.append((LogicalChain.parse(chain), int(n)))
        return cls(chains)


def build_projection(
    mined: Iterable[tuple[str, LogicalChain, int]],
    templates: Iterable[str] = (),
    top_n: int | None = None,
) -> Projection:
    """Assign each chain to its most frequent template, then invert.

    Ties go to the lexicographically smallest template id. ``templates`` lists ids
    that must appear even if no chain was assigned to them. ``top_n`` keeps only
    the most frequent chains per template.
    """
    best: dict[LogicalChain, tuple[str, int]] = {}
    for tid, chain, n in mined:
        cur = best.get(chain)
        if cur is None or n > cur[1] or (n == cur[1] and tid < cur[0]):
            best[chain] = (tid, n)
    out: dict[str, list[tuple[LogicalChain, int]]] = {t: [] for t in templates}
    for chain, (tid, n) in best.items():
        out.setdefault(tid, []).append((chain, n))
    for tid, rows in out.items():
        rows.sort(key=lambda x: (-x[1], x[0]))
        if top_n is not None:
            del rows[top_n:]
    return Projection(out)

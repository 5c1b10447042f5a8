"""Independent reference implementations used as test oracles.

None of these import chainqa's execution, mining or metric code: they work on
raw (subject, relation, object) string triples and token counts.
"""
from __future__ import annotations

import math
import re
from collections import Counter, defaultdict


def read_kb(text: str) -> list[tuple[str, str, str]]:
    out = []
    for line in text.splitlines():
        if line.strip():
            s, r, o = (p.strip() for p in line.split("|"))
            out.append((s, r, o))
    return out


def distinct_counts(text: str) -> tuple[int, int, int]:
    """(entities, relations, distinct triplets) by plain set counting."""
    trips = set(read_kb(text))
    ents = {s for s, _, _ in trips} | {o for _, _, o in trips}
    rels = {r for _, r, _ in trips}
    return len(ents), len(rels), len(trips)


def nested_scan(triples, seeds: set[str], chain: list[tuple[str, str]]) -> set[str]:
    """Endpoints of ``chain`` from ``seeds`` by scanning every triple at every step."""
    cur = set(seeds)
    for rel, direction in chain:
        nxt = set()
        for s, r, o in triples:
            if r == rel:
                if direction == "forward" and s in cur:
                    nxt.add(o)
                if direction == "backward" and o in cur:
                    nxt.add(s)
        cur = nxt
    return cur


def all_paths(triples, seed: str, chain: list[tuple[str, str]]) -> set[tuple[str, ...]]:
    """Every entity path (not just endpoints) realising ``chain`` from ``seed``."""
    paths = {(seed,)}
    for rel, direction in chain:
        nxt = set()
        for p in paths:
            for s, r, o in triples:
                if r != rel:
                    continue
                if direction == "forward" and s == p[-1]:
                    nxt.add(p + (o,))
                if direction == "backward" and o == p[-1]:
                    nxt.add(p + (s,))
        paths = nxt
    return paths


def count_projection(triples, qa, max_hops: int, templates=()) -> str:
    """Mine + project by brute force and render the projection file text.

    ``qa`` holds (template id, seed, answers). Chains are enumerated over the
    full relation/direction alphabet rather than by graph exploration.
    """
    rels = sorted({r for _, r, _ in triples})
    alphabet = [(r, d) for r in rels for d in ("backward", "forward")]
    ents = {s for s, _, _ in triples} | {o for _, _, o in triples}

    chains = [[]]
    every = []
    for _ in range(max_hops):
        chains = [c + [step] for c in chains for step in alphabet]
        every.extend(chains)

    counts = Counter()
    for tid, seed, answers in qa:
        if seed not in ents:
            continue
        for chain in every:
            if nested_scan(triples, {seed}, chain) & set(answers):
                counts[(tid, tuple(chain))] += 1

    by_chain = defaultdict(list)
    for (tid, chain), n in counts.items():
        by_chain[chain].append((n, tid))
    table = {t: [] for t in templates}
    for chain, rows in by_chain.items():
        best = max(n for n, _ in rows)
        tid = min(t for n, t in rows if n == best)
        table.setdefault(tid, []).append((best, chain))

    def fmt(chain):
        return ",".join(f"{r}:{d}" for r, d in chain)

    lines = ["# chainqa projection v1"]
    for tid in sorted(table):
        rows = sorted(table[tid], key=lambda x: (-x[0], [(r, d) for r, d in x[1]]))
        if not rows:
            lines.append(f"{tid}\t0\t-")
        for n, chain in rows:
            lines.append(f"{tid}\t{n}\t{fmt(chain)}")
    return "\n".join(lines) + "\n"


def token_cosine(a: str, b: str) -> float:
    """Cosine of raw token-count vectors (no hashing)."""
    tok = lambda s: Counter(re.findall(r"\[mask\]|\w+", s.lower()))  # noqa: E731
    ca, cb = tok(a), tok(b)
    dot = sum(ca[t] * cb[t] for t in ca)
    na = math.sqrt(sum(v * v for v in ca.values()))
    nb = math.sqrt(sum(v * v for v in cb.values()))
    return dot / (na * nb) if na and nb else 0.0


def ref_hits_at_1(preds, golds) -> float:
    n = 0
    for p, g in zip(preds, golds):
        if len(p) > 0 and " ".join(p[0].split()) in {" ".join(x.split()) for x in g}:
            n += 1
    return n / len(preds) if preds else 0.0


def ref_f1(pred, gold) -> float:
    p = {" ".join(x.split()) for x in pred}
    g = {" ".join(x.split()) for x in gold}
    tp = len(p & g)
    if not p or not g or not tp:
        return 0.0
    prec = tp / len(p)
    rec = tp / len(g)
    return 2 * prec * rec / (prec + rec)

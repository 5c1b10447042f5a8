"""Deterministic local backends used for tests, fixtures and offline runs."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

from .chains import LogicalChain
from .gateway import BackendSpec, GatewayBackend, MockBackend, MockMissError
from .kg import KnowledgeGraph
from .plan import DecompositionPlan, render_plan


def _key(text: str) -> str:
    return " ".join(text.split())


class GoldPlanBackend:
    """Decomposer that replays a fixed plan per query."""

    name = "oracle:gold-plan"

    def __init__(self, plans: Mapping[str, str | DecompositionPlan]):
        self.plans = {
            _key(q): p if isinstance(p, str) else render_plan(p) for q, p in plans.items()
        }

    def complete(self, instruction: str, input: str) -> str:
        # retries append a reminder after a blank line; the query is the first block
        query = input.split("\n\n", 1)[0]
        try:
            return self.plans[_key(query)]
        except KeyError:
            raise MockMissError(f"no gold plan for query {query[:80]!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "GoldPlanBackend":
        """JSON object mapping query text to a plan (wire text or list of step objects)."""
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls({q: p if isinstance(p, str) else json.dumps(p, ensure_ascii=False) for q, p in data.items()})


class ChainOracleReasoner:
    """Selects every shown candidate produced by the gold chain of the sub-question.

    ``gold`` maps a template-space sub-question (with ``[mask]``) to its gold chain.
    Sub-questions without a gold chain get no answers.
    """

    name = "oracle:chain"

    def __init__(self, gold: Mapping[str, LogicalChain | str]):
        self.gold = {
            _key(q): c if isinstance(c, LogicalChain) else LogicalChain.parse(c) for q, c in gold.items()
        }

    def select_answers(self, subq: str, ctx, graph: KnowledgeGraph) -> list[str]:
        chain = self.gold.get(_key(subq))
        if chain is None:
            return []
        hits = sorted({c.answer for c in ctx.candidates if c.chain == chain and c.fact is None})
        return [graph.entity(a) for a in hits]

    @classmethod
    def load(cls, path: str | Path) -> "ChainOracleReasoner":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))


class TemplateSummarizer:
    """Marker backend: the pipeline renders the narrative from the log itself."""

    name = "template"


def make_backend(kind: str, arg: str | None = None, spec: BackendSpec | None = None):
    """Build a backend from a ``kind[:arg]`` CLI/config value.

    Kinds: ``gateway`` (needs ``spec``), ``mock:<script.json>``, ``gold-plan:<plans.json>``,
    ``chain-oracle:<gold_chains.json>``, ``template``.
    """
    if kind == "gateway":
        if spec is None:
            raise ValueError("gateway backend needs a BackendSpec")
        return GatewayBackend(spec)
    if kind == "mock":
        return MockBackend.load(_need(kind, arg))
    if kind == "gold-plan":
        return GoldPlanBackend.load(_need(kind, arg))
    if kind == "chain-oracle":
        return ChainOracleReasoner.load(_need(kind, arg))
    if kind == "template":
        return TemplateSummarizer()
    raise ValueError(f"unknown backend kind {kind!r}")


def _need(kind: str, arg: str | None) -> str:
    if not arg:
        raise ValueError(f"backend {kind!r} needs a file argument ({kind}:<path>)")
    return arg

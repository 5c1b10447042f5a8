"""Interned triplet store with forward/backward adjacency indices."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, TextIO

FORWARD = "forward"
BACKWARD = "backward"
DIRECTIONS = (FORWARD, BACKWARD)


class KGLoadError(ValueError):
    """Raised for malformed kb-format input; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnknownIdError(KeyError):
    pass


class Triplet(NamedTuple):
    subject: int
    relation: int
    object: int


def normalize_surface(text: str) -> str:
    # case and internal punctuation are significant (MetaQA answers are exact surfaces)
    return text.strip()


class _Interner:
    def __init__(self) -> None:
        self.to_id: dict[str, int] = {}
        self.surfaces: list[str] = []

    def intern(self, surface: str) -> int:
        idx = self.to_id.get(surface)
        if idx is None:
            idx = len(self.surfaces)
            self.to_id[surface] = idx
            self.surfaces.append(surface)
        return idx


@dataclass
class KnowledgeGraph:
    """Immutable-after-load symbolic KG.

    ``forward[s][r]`` holds the objects of ``(s, r, ·)`` and ``backward[o][r]`` the
    subjects of ``(·, r, o)``. Ids are dense and assigned in first-seen order.
    """

    entities: list[str] = field(default_factory=list)
    relations: list[str] = field(default_factory=list)
    triplets: list[Triplet] = field(default_factory=list)
    forward: dict[int, dict[int, frozenset[int]]] = field(default_factory=dict)
    backward: dict[int, dict[int, frozenset[int]]] = field(default_factory=dict)
    _entity_ids: dict[str, int] = field(default_factory=dict, repr=False)
    _relation_ids: dict[str, int] = field(default_factory=dict, repr=False)

    @classmethod
    def from_triplets(cls, surfaces: Iterable[tuple[str, str, str]]) -> "KnowledgeGraph":
        ents, rels = _Interner(), _Interner()
        seen: set[Triplet] = set()
        ordered: list[Triplet] = []
        for s, r, o in surfaces:
            t = Triplet(ents.intern(s), rels.intern(r), ents.intern(o))
            if t not in seen:
                seen.add(t)
                ordered.append(t)
        fwd: dict[int, dict[int, set[int]]] = {}
        bwd: dict[int, dict[int, set[int]]] = {}
        for t in ordered:
            fwd.setdefault(t.subject, {}).setdefault(t.relation, set()).add(t.object)
            bwd.setdefault(t.object, {}).setdefault(t.relation, set()).add(t.subject)
        return cls(
            entities=ents.surfaces,
            relations=rels.surfaces,
            triplets=ordered,
            forward=_freeze(fwd),
            backward=_freeze(bwd),
            _entity_ids=ents.to_id,
            _relation_ids=rels.to_id,
        )

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def __len__(self) -> int:
        return len(self.triplets)

    def entity_id(self, surface: str) -> int:
        try:
            return self._entity_ids[normalize_surface(surface)]
        except KeyError:
            raise UnknownIdError(f"unknown entity {surface!r}") from None

    def relation_id(self, surface: str) -> int:
        try:
            return self._relation_ids[normalize_surface(surface)]
        except KeyError:
            raise UnknownIdError(f"unknown relation {surface!r}") from None

    def find_entity(self, surface: str) -> int | None:
        """Exact lookup after normalization; ``None`` when absent."""
        return self._entity_ids.get(normalize_surface(surface))

    def has_relation(self, surface: str) -> bool:
        return normalize_surface(surface) in self._relation_ids

    def entity(self, eid: int) -> str:
        self._check_entity(eid)
        return self.entities[eid]

    def relation(self, rid: int) -> str:
        self._check_relation(rid)
        return self.relations[rid]

    def _check_entity(self, eid: int) -> None:
        if not 0 <= eid < len(self.entities):
            raise UnknownIdError(f"invalid entity id {eid}")

    def _check_relation(self, rid: int) -> None:
        if not 0 <= rid < len(self.relations):
            raise UnknownIdError(f"invalid relation id {rid}")

    def neighbors(self, entity: int, relation: int, direction: str = FORWARD) -> frozenset[int]:
        self._check_entity(entity)
        self._check_relation(relation)
        if direction == FORWARD:
            index = self.forward
        elif direction == BACKWARD:
            index = self.backward
        else:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
        return index.get(entity, {}).get(relation, frozenset())

    def outgoing_relations(self, entity: int, direction: str) -> Iterator[int]:
        index = self.forward if direction == FORWARD else self.backward
        yield from sorted(index.get(entity, {}))

    def serialize(self, t: Triplet) -> str:
        return serialize_triplet(self, t)

    def dump_ids(self, out: TextIO) -> None:
        """Debug export: one ``id<TAB>surface`` line per entity, then per relation."""
        out.write("# entities\n")
        for i, s in enumerate(self.entities):
            out.write(f"{i}\t{s}\n")
        out.write("# relations\n")
        for i, s in enumerate(self.relations):
            out.write(f"{i}\t{s}\n")


def _freeze(index: dict[int, dict[int, set[int]]]) -> dict[int, dict[int, frozenset[int]]]:
    return {k: {r: frozenset(v) for r, v in inner.items()} for k, inner in index.items()}


def parse_kb_lines(lines: Iterable[str], delimiter: str = "|") -> Iterator[tuple[str, str, str]]:
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split(delimiter)
        if len(parts) != 3:
            raise KGLoadError(f"expected 3 {delimiter!r}-separated fields, got {len(parts)}", line_no)
        s, r, o = (normalize_surface(p) for p in parts)
        if not s or not o:
            raise KGLoadError("empty entity field", line_no)
        if not r:
            raise KGLoadError("empty relation field", line_no)
        yield s, r, o


def load_kg(source: str | Path | TextIO, delimiter: str = "|") -> KnowledgeGraph:
    """Load a kb-format graph (``subject|relation|object`` per line).

    ``source`` may be a path or an open text stream. Use ``delimiter="\\t"`` for
    tab-separated exports.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return KnowledgeGraph.from_triplets(parse_kb_lines(fh, delimiter))
    return KnowledgeGraph.from_triplets(parse_kb_lines(source, delimiter))


def loads_kg(text: str, delimiter: str = "|") -> KnowledgeGraph:
    return load_kg(io.StringIO(text), delimiter)


def relation_surface(relation: str) -> str:
    return relation.replace("_", " ")


def serialize_triplet(graph: KnowledgeGraph, t: Triplet) -> str:
    """Surface concatenation, e.g. ``Written on the Wind directed by Douglas Sirk``."""
    return " ".join(
        (graph.entity(t.subject), relation_surface(graph.relation(t.relation)), graph.entity(t.object))
    )

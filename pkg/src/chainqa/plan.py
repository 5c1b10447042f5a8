"""Decomposition plans: wire-format parsing, validation, seed resolution."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence, Union

log = logging.getLogger(__name__)

DECOMPOSE_INSTRUCTION = "The AI assistant can parse the user input to several subquestions:"
FORMAT_REMINDER = (
    "Answer only with a JSON list of objects, each of the form "
    '{"question": "... [mask] ...", "id": 0, "dep": [-1], "args": {"seed_entities": ["..."]}}. '
    'Refer to the answers of an earlier step k as "<GENERATED>-k".'
)
ROOT_DEP = -1

_GEN_RE = re.compile(r"^\s*<GENERATED>-(\d+)\s*$")
_STR = r'"((?:[^"\\]|\\.)*)"'


class PlanParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class PlanInvalidError(ValueError):
    def __init__(self, rule: str, detail: str):
        super().__init__(f"{rule}: {detail}")
        self.rule = rule


class DecompositionFailed(RuntimeError):
    pass


class SchedulingError(RuntimeError):
    pass


class TextBackend(Protocol):
    def complete(self, instruction: str, input: str) -> str: ...


@dataclass(frozen=True)
class GeneratedRef:
    step: int

    def __str__(self) -> str:
        return f"<GENERATED>-{self.step}"


Seed = Union[str, GeneratedRef]


@dataclass(frozen=True)
class PlanStep:
    question: str
    id: int
    dep: tuple[int, ...] = (ROOT_DEP,)
    seeds: tuple[Seed, ...] = ()

    @property
    def is_root(self) -> bool:
        return self.dep == (ROOT_DEP,)

    @property
    def parents(self) -> tuple[int, ...]:
        return () if self.is_root else self.dep

    @property
    def literal_seeds(self) -> tuple[str, ...]:
        return tuple(s for s in self.seeds if isinstance(s, str))

    @property
    def refs(self) -> tuple[GeneratedRef, ...]:
        return tuple(s for s in self.seeds if isinstance(s, GeneratedRef))


@dataclass(frozen=True)
class DecompositionPlan:
    steps: tuple[PlanStep, ...]

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, i: int) -> PlanStep:
        return self.steps[i]

    def terminal_steps(self) -> list[int]:
        """Steps no other step depends on."""
        used = {d for s in self.steps for d in s.parents}
        return [s.id for s in self.steps if s.id not in used]


def to_seed(value: str) -> Seed:
    m = _GEN_RE.match(value)
    return GeneratedRef(int(m.group(1))) if m else value.strip()


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _as_records(obj) -> list[dict] | None:
    if isinstance(obj, dict):
        obj = [obj]
    if isinstance(obj, list) and obj and all(isinstance(x, dict) for x in obj):
        return obj
    return None


def _strict_records(raw: str) -> tuple[list[dict] | None, int]:
    """Find the first JSON list of objects (or a bare object run) in ``raw``."""
    decoder = json.JSONDecoder()
    err_pos = 0
    for m in re.finditer(r"\[\s*\{", raw):
        try:
            obj, _ = decoder.raw_decode(raw, m.start())
        except json.JSONDecodeError as exc:
            err_pos = max(err_pos, exc.pos)
            continue
        recs = _as_records(obj)
        if recs is not None:
            return recs, 0
    first = raw.find("{")
    if first >= 0:
        end = raw.rfind("}")
        try:
            obj = json.loads("[" + raw[first : end + 1] + "]")
        except json.JSONDecodeError as exc:
            err_pos = max(err_pos, first + exc.pos - 1)
        else:
            recs = _as_records(obj)
            if recs is not None:
                return recs, 0
    return None, err_pos


def _lenient_records(raw: str) -> list[dict]:
    """Field scan for generations that are almost, but not quite, JSON."""
    starts = [m.start() for m in re.finditer(r'"question"\s*:', raw)]
    recs = []
    for i, start in enumerate(starts):
        seg = raw[start : starts[i + 1] if i + 1 < len(starts) else len(raw)]
        rec: dict = {}
        m = re.match(r'"question"\s*:\s*' + _STR, seg)
        if m:
            rec["question"] = json.loads(f'"{m.group(1)}"')
        m = re.search(r'"id"\s*:\s*(-?\d+)', seg)
        if m:
            rec["id"] = int(m.group(1))
        m = re.search(r'"dep"\s*:\s*\[([^\]]*)\]', seg)
        if m:
            rec["dep"] = [int(x) for x in re.findall(r"-?\d+", m.group(1))]
        m = re.search(r'"seed_entities"\s*:\s*\[?([^\]}]*)', seg)
        if m:
            rec["args"] = {"seed_entities": [json.loads(f'"{s}"') for s in re.findall(_STR, m.group(1))]}
        recs.append(rec)
    return recs


def _step_from_record(rec: dict, index: int) -> PlanStep:
    missing = [k for k in ("question", "id") if k not in rec]
    if missing:
        raise PlanInvalidError("missing-field", f"step #{index} lacks {', '.join(missing)}")
    dep = rec.get("dep", [ROOT_DEP])
    if isinstance(dep, int):
        dep = [dep]
    args = rec.get("args") or {}
    seeds = args.get("seed_entities", rec.get("seed_entities", [])) if isinstance(args, dict) else []
    if isinstance(seeds, str):
        seeds = [seeds]
    try:
        return PlanStep(
            question=str(rec["question"]).strip(),
            id=int(rec["id"]),
            dep=tuple(int(d) for d in dep),
            seeds=tuple(to_seed(str(s)) for s in seeds),
        )
    except (TypeError, ValueError) as exc:
        raise PlanInvalidError("bad-field-type", f"step #{index}: {exc}") from None


def validate_plan(steps: Sequence[PlanStep]) -> DecompositionPlan:
    """Check the plan invariants; raises PlanInvalidError naming the broken rule."""
    if not steps:
        raise PlanInvalidError("zero-steps", "plan has no steps")
    ids = [s.id for s in steps]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise PlanInvalidError("duplicate-id", f"ids {dupes} appear more than once")
    if sorted(ids) != list(range(len(steps))):
        raise PlanInvalidError("non-consecutive-ids", f"ids {sorted(ids)} are not 0..{len(steps) - 1}")
    ordered = sorted(steps, key=lambda s: s.id)
    for s in ordered:
        if not s.question:
            raise PlanInvalidError("empty-question", f"step {s.id} has an empty question")
        if not s.dep:
            raise PlanInvalidError("empty-dep", f"step {s.id} has an empty dep list")
        if ROOT_DEP in s.dep and len(s.dep) > 1:
            raise PlanInvalidError("mixed-root-dep", f"step {s.id} mixes -1 with other deps")
        for d in s.parents:
            if d < 0:
                raise PlanInvalidError("bad-dep", f"step {s.id} has dep {d}")
            if d >= s.id:
                raise PlanInvalidError("forward-dep", f"step {s.id} depends on step {d}")
        if len(set(s.dep)) != len(s.dep):
            raise PlanInvalidError("duplicate-dep", f"step {s.id} lists a dep twice")
        for ref in s.refs:
            if ref.step not in s.parents:
                raise PlanInvalidError(
                    "dangling-ref", f"step {s.id} references {ref} but dep is {list(s.dep)}"
                )
        if not s.seeds:
            raise PlanInvalidError("no-seeds", f"step {s.id} has no seed entities")
        if any(isinstance(x, str) and not x for x in s.seeds):
            raise PlanInvalidError("empty-seed", f"step {s.id} has an empty seed entity")
    if not any(s.is_root for s in ordered):
        raise PlanInvalidError("no-root", "no step has dep [-1]")
    if not any(s.literal_seeds for s in ordered):
        raise PlanInvalidError("no-literal-seed", "plan has no literal seed entity")
    return DecompositionPlan(tuple(ordered))


def parse_plan(raw: str) -> DecompositionPlan:
    """Parse a decomposition backend's generation into a validated plan.

    Surrounding prose is tolerated; strict JSON is tried first, then a lenient
    field scan for generations with unbalanced brackets.
    """
    recs, err_pos = _strict_records(raw)
    if recs is None:
        recs = _lenient_records(raw)
        if not recs:
            raise PlanParseError("no plan structure found", _byte_offset(raw, err_pos))
    return validate_plan([_step_from_record(r, i) for i, r in enumerate(recs)])


def render_plan(plan: DecompositionPlan) -> str:
    """Canonical wire form; ``parse_plan(render_plan(p)) == p``."""
    return json.dumps(
        [
            {
                "question": s.question,
                "id": s.id,
                "dep": list(s.dep),
                "args": {"seed_entities": [str(x) for x in s.seeds]},
            }
            for s in plan.steps
        ],
        ensure_ascii=False,
    )


def decompose(query: str, backend: TextBackend) -> DecompositionPlan:
    """Ask ``backend`` for a plan; one retry with a format reminder on bad output."""
    if not query.strip():
        raise ValueError("empty query")
    attempts = [query, f"{query}\n\n{FORMAT_REMINDER}"]
    errors = []
    for text in attempts:
        raw = backend.complete(DECOMPOSE_INSTRUCTION, text)
        try:
            return parse_plan(raw)
        except (PlanParseError, PlanInvalidError) as exc:
            log.info("decomposition attempt rejected: %s", exc)
            errors.append(str(exc))
    raise DecompositionFailed("; ".join(errors))


def resolve_seeds(
    plan: DecompositionPlan, step_id: int, prior: Mapping[int, Iterable[str]]
) -> set[str]:
    step = plan[step_id]
    missing = [d for d in step.parents if d not in prior]
    if missing:
        raise SchedulingError(f"step {step_id} scheduled before its deps {missing}")
    out = set(step.literal_seeds)
    for ref in step.refs:
        out.update(prior[ref.step])
    return out

"""Command-line entry point: ingest, mine, ask, eval, sweep."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import make_backend
from .chains import QaPair, build_projection, mine_chains
from .config import STAGES, ConfigError, RunConfig, build_config, load_config_file
from .evalkit import evaluate, load_qa, sweep_json, sweep_k, write_sweep
from .gateway import RecordingBackend
from .kg import KGLoadError, load_kg
from .pipeline import Engine, EngineConfig
from .templates import TemplateRegistry, load_templates, mask_question, match_templates

log = logging.getLogger("chainqa")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--kg", help="kb-format triplet file")
    p.add_argument("--delimiter", help="kb field delimiter (default '|')")
    p.add_argument("--templates", help="template registry (id<TAB>pattern)")
    p.add_argument("--projection", help="projection file written by 'mine'")
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--max-hops", type=int, dest="max_hops")
    p.add_argument("--cap", type=int, help="answers kept per (seed, chain)")
    p.add_argument("--mode", help="auto, tuple-explained or serialized-text")
    p.add_argument("--token-budget", type=int, dest="token_budget")
    p.add_argument("--dense-budget", type=int, dest="dense_budget")
    p.add_argument("--dense-policy", dest="dense_policy", choices=("always", "when-empty"))
    p.add_argument("--workers", type=int)
    for stage in STAGES:
        p.add_argument(f"--backend-{stage}", dest=f"backend_{stage}", metavar="KIND[:ARG]")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainqa", description="Multi-hop KBQA over logical chains.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a KG and print its size")
    _add_common(p)
    p.add_argument("--dump-ids", help="write the id<TAB>surface debug export here")

    p = sub.add_parser("mine", help="mine logical chains and write the template projection")
    _add_common(p)
    p.add_argument("--train", help="training QA file (question<TAB>answers[<TAB>template id])")
    p.add_argument("--out", required=True, help="projection output path")
    p.add_argument("--top-n", type=int, dest="top_n", help="keep the N most frequent chains per template")

    p = sub.add_parser("ask", help="answer one question")
    _add_common(p)
    p.add_argument("query")
    p.add_argument("--log", help="write the execution log (JSON lines) here")
    p.add_argument("--record", help="record backend exchanges to a replayable session file")
    p.add_argument("--json", action="store_true", help="print answers and narrative as JSON")

    for name, help_ in (("eval", "evaluate on QA files"), ("sweep", "evaluate at several top-K values")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        p.add_argument("--qa", action="append", help="QA file; repeatable")
        p.add_argument("--qa-format", dest="qa_format", choices=("metaqa", "webqsp-simplified"))
        p.add_argument("--out", help="results file")
        p.add_argument("--threshold", type=float, help="exit 1 if Hits@1 falls below this")
        p.add_argument("--any-in-set", action="store_true", default=None, dest="any_in_set")
        if name == "eval":
            p.add_argument("--log-dir", help="write one execution log per example here")
        else:
            p.add_argument("--k", nargs="+", default=["1", "2", "3"], help="k values, e.g. 1 2 3 or 1,2,3")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {
        k: getattr(args, k, None)
        for k in (
            "kg", "templates", "projection", "train", "delimiter", "top_k", "max_hops", "cap", "mode",
            "token_budget", "dense_budget", "dense_policy", "workers", "qa", "qa_format", "any_in_set",
        )
    }
    overrides["backends"] = {
        stage: getattr(args, f"backend_{stage}") for stage in STAGES if getattr(args, f"backend_{stage}", None)
    }
    return build_config(file_values, overrides)


def _stage_backend(cfg: RunConfig, stage: str):
    kind, _, arg = cfg.backends[stage].partition(":")
    spec = cfg.gateway_spec(stage) if kind == "gateway" else None
    return make_backend(kind, arg or None, spec)


def build_engine(cfg: RunConfig, record: bool = False) -> Engine:
    from .chains import Projection

    graph = load_kg(cfg.kg, cfg.delimiter)
    registry = TemplateRegistry(load_templates(cfg.templates))
    projection = Projection.load(cfg.projection)
    backends = {s: _stage_backend(cfg, s) for s in STAGES}
    if record:
        backends = {s: RecordingBackend(b) if hasattr(b, "complete") else b for s, b in backends.items()}
    econf = EngineConfig(
        top_k=cfg.top_k,
        cap=cfg.cap,
        mode=cfg.context_mode(),
        token_budget=cfg.token_budget,
        dense_budget=cfg.dense_budget,
        dense_policy=cfg.dense_policy,
    )
    return Engine(graph, registry, projection, backends["decompose"], backends["reason"], backends["summarize"], econf)


def cmd_ingest(cfg: RunConfig, args) -> int:
    cfg.validate(("kg",))
    graph = load_kg(cfg.kg, cfg.delimiter)
    print(f"entities\t{graph.num_entities}")
    print(f"relations\t{graph.num_relations}")
    print(f"triplets\t{len(graph)}")
    if args.dump_ids:
        with open(args.dump_ids, "w", encoding="utf-8") as fh:
            graph.dump_ids(fh)
    return 0


def cmd_mine(cfg: RunConfig, args) -> int:
    cfg.validate(("kg", "templates", "train"))
    graph = load_kg(cfg.kg, cfg.delimiter)
    registry = TemplateRegistry(load_templates(cfg.templates))
    pairs = []
    for ex in load_qa(cfg.train, cfg.qa_format, split="train"):
        tid = ex.template_id
        if tid is None:
            masked = mask_question(ex.question.replace(f"[{ex.seed}]", ex.seed), [ex.seed])
            tid = match_templates(registry, masked, 1)[0].template_id
        elif tid not in registry.templates:
            raise ConfigError(f"training file names unknown template {tid!r}")
        pairs.append(QaPair(tid, ex.seed, ex.answers))
    result = mine_chains(graph, pairs, cfg.max_hops)
    if result.skipped:
        print(f"warning: skipped {len(result.skipped)} pairs whose seed is not in the KG", file=sys.stderr)
    projection = build_projection(result.mined, registry.ids(), args.top_n)
    for tid in projection.templates():
        if not projection[tid]:
            print(f"warning: template {tid} has no logical chains", file=sys.stderr)
    projection.save(args.out)
    n = sum(len(v) for v in projection.chains.values())
    print(f"wrote {n} chains for {len(projection.chains)} templates to {args.out}")
    return 0


def cmd_ask(cfg: RunConfig, args) -> int:
    cfg.validate(("kg", "templates", "projection"))
    engine = build_engine(cfg, record=bool(args.record))
    resp = engine.answer(args.query)
    if args.json:
        print(json.dumps({"answers": list(resp.answers), "narrative": resp.narrative}, ensure_ascii=False, indent=1))
    else:
        print(resp.narrative)
    if args.log:
        resp.log.save(args.log)
    if args.record:
        _save_session(engine, args.record)
    return 0


def _save_session(engine: Engine, path: str) -> None:
    from .gateway import ScriptEntry

    entries: list[ScriptEntry] = []
    for b in (engine.decomposer, engine.reasoner, engine.summarizer):
        if isinstance(b, RecordingBackend):
            entries.extend(b.entries)
    rec = RecordingBackend(None, entries)
    rec.save(path)


def _examples(cfg: RunConfig):
    out = []
    for path in cfg.qa:
        out.extend(load_qa(path, cfg.qa_format))
    return out


def cmd_eval(cfg: RunConfig, args) -> int:
    cfg.validate(("kg", "templates", "projection", "qa"))
    engine = build_engine(cfg)
    report = evaluate(_examples(cfg), engine.answer, cfg.workers, cfg.any_in_set, args.log_dir)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            report.write(fh)
    print(json.dumps(report.footer(), sort_keys=True))
    if args.threshold is not None and report.hits_at_1 < args.threshold:
        print(f"Hits@1 {report.hits_at_1:.4f} below threshold {args.threshold}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    cfg.validate(("kg", "templates", "projection", "qa"))
    ks = [int(x) for item in args.k for x in str(item).split(",") if x]
    engine = build_engine(cfg)
    rows = sweep_k(_examples(cfg), engine, ks, cfg.workers, cfg.any_in_set)
    write_sweep(rows, sys.stdout)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_sweep(rows, fh)
        Path(args.out).with_suffix(".json").write_text(sweep_json(rows) + "\n", encoding="utf-8")
    if args.threshold is not None and any(r.hits_at_1 < args.threshold for r in rows):
        return 1
    return 0


COMMANDS = {"ingest": cmd_ingest, "mine": cmd_mine, "ask": cmd_ask, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except (KGLoadError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())

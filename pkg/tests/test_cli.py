from __future__ import annotations

import json
import re

import pytest

from chainqa.cli import config_from_args, build_parser, main
from oracles import count_projection, distinct_counts, read_kb


def _train_rows(path):
    rows = []
    for line in path.read_text().splitlines():
        q, a, t = line.split("\t")
        rows.append((t, re.search(r"\[([^\]]+)\]", q).group(1), a.split("|")))
    return rows


def _template_ids(path):
    return [l.split("\t")[0] for l in path.read_text().splitlines() if l and not l.startswith("#")]


def test_ingest_counts(movies, capsys):
    assert main(["ingest", "--kg", str(movies / "kb.txt")]) == 0
    out = dict(l.split("\t") for l in capsys.readouterr().out.splitlines())
    assert tuple(int(out[k]) for k in ("entities", "relations", "triplets")) == distinct_counts((movies / "kb.txt").read_text())


def test_ingest_empty_file(tmp_path, capsys):
    p = tmp_path / "empty.txt"
    p.write_text("")
    assert main(["ingest", "--kg", str(p)]) == 0
    assert capsys.readouterr().out.split() == ["entities", "0", "relations", "0", "triplets", "0"]


def test_ingest_malformed(tmp_path, capsys):
    p = tmp_path / "bad.txt"
    p.write_text("a|r|b\nc|d\n")
    assert main(["ingest", "--kg", str(p)]) != 0
    assert "line 2" in capsys.readouterr().err


def test_ingest_dump_ids(movies, tmp_path):
    out = tmp_path / "ids.tsv"
    assert main(["ingest", "--kg", str(movies / "kb.txt"), "--dump-ids", str(out)]) == 0
    assert "0\t" in out.read_text()


def _mine(movies, out, *extra):
    return main([
        "mine", "--kg", str(movies / "kb.txt"), "--templates", str(movies / "templates.tsv"),
        "--train", str(movies / "qa_train.txt"), "--out", str(out), *extra,
    ])


def test_mine_is_deterministic_and_matches_oracle(movies, tmp_path):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    assert _mine(movies, a) == 0 and _mine(movies, b) == 0
    assert a.read_bytes() == b.read_bytes()
    want = count_projection(
        read_kb((movies / "kb.txt").read_text()), _train_rows(movies / "qa_train.txt"), 3,
        _template_ids(movies / "templates.tsv"),
    )
    assert a.read_text() == want
    # the bundled projection was produced by this command
    assert a.read_bytes() == (movies / "projection.tsv").read_bytes()


def test_mine_max_hops_one_leaves_two_hop_template_empty(tmp_path, capsys):
    (tmp_path / "kb.txt").write_text("F|directed_by|D\nG|directed_by|D\nF|starred_actors|S\n")
    (tmp_path / "t.tsv").write_text("dir\twho directed [mask]?\nco\twhich films share a director with [mask]?\n")
    (tmp_path / "train.txt").write_text(
        "who directed [F]\tD\tdir\nwhich films share a director with [F]\tG\tco\n"
    )
    out = tmp_path / "p.tsv"
    rc = main(["mine", "--kg", str(tmp_path / "kb.txt"), "--templates", str(tmp_path / "t.tsv"),
               "--train", str(tmp_path / "train.txt"), "--out", str(out), "--max-hops", "1"])
    assert rc == 0
    assert "template co has no logical chains" in capsys.readouterr().err
    assert "co\t0\t-" in out.read_text()


def test_ask_with_log(movies, tmp_path, capsys):
    log = tmp_path / "run.jsonl"
    session = json.loads((movies / "table1_session.json").read_text())
    mock = f"mock:{movies / 'table1_session.json'}"
    args = [
        "ask", session["query"], "--kg", str(movies / "kb.txt"), "--templates", str(movies / "templates.tsv"),
        "--projection", str(movies / "projection.tsv"), "--backend-decompose", mock, "--backend-reason", mock,
        "--backend-summarize", mock, "--log", str(log),
    ]
    assert main(args) == 0
    out = capsys.readouterr().out
    assert out.strip() == session["entries"][-1]["reply"]
    recs = [json.loads(l) for l in log.read_text().splitlines()]
    assert recs[0]["type"] == "query" and recs[-1]["type"] == "final"
    assert "Douglas Sirk" in recs[1]["answers"]


def test_ask_unknown_seed(movies, tmp_path, capsys):
    plans = tmp_path / "plans.json"
    plans.write_text(json.dumps({"who directed Nowhere Film": [
        {"question": "who was the director of [mask]?", "id": 0, "dep": [-1], "args": {"seed_entities": ["Nowhere Film"]}}
    ]}))
    rc = main([
        "ask", "who directed Nowhere Film", "--kg", str(movies / "kb.txt"), "--templates", str(movies / "templates.tsv"),
        "--projection", str(movies / "projection.tsv"), "--backend-decompose", f"gold-plan:{plans}",
        "--backend-reason", f"chain-oracle:{movies / 'gold_chains.json'}",
    ])
    assert rc == 0
    assert "can't make it" in capsys.readouterr().out


def _eval_args(movies, cmd, *extra):
    return [
        cmd, "--kg", str(movies / "kb.txt"), "--templates", str(movies / "templates.tsv"),
        "--projection", str(movies / "projection.tsv"),
        "--backend-decompose", f"gold-plan:{movies / 'gold_plans.json'}",
        "--backend-reason", f"chain-oracle:{movies / 'gold_chains.json'}", *extra,
    ]


def test_eval_threshold_exit_codes(movies, tmp_path, capsys):
    qa = ["--qa", str(movies / "qa_1hop.txt"), "--qa", str(movies / "qa_2hop.txt"), "--qa", str(movies / "qa_3hop.txt")]
    out = tmp_path / "res.jsonl"
    assert main(_eval_args(movies, "eval", *qa, "--out", str(out), "--threshold", "1.0")) == 0
    footer = json.loads(out.read_text().splitlines()[-1])
    assert footer["hits_at_1"] == 1.0
    capsys.readouterr()
    amb = ["--qa", str(movies / "qa_ambiguous.txt"), "--top-k", "1", "--threshold", "0.5"]
    assert main(_eval_args(movies, "eval", *amb)) == 1


def test_sweep_writes_three_rows(movies, tmp_path, capsys):
    out = tmp_path / "sweep.tsv"
    rc = main(_eval_args(movies, "sweep", "--qa", str(movies / "qa_ambiguous.txt"), "--k", "1,2,3", "--out", str(out)))
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "k\thits_at_1" and len(lines) == 4
    assert [float(l.split("\t")[1]) for l in lines[1:]] == [0.0, 1.0, 1.0]
    assert json.loads(out.with_suffix(".json").read_text())["k"] == [1, 2, 3]


def test_missing_file_is_config_error(movies, capsys):
    assert main(["ingest", "--kg", "/nonexistent/kb.txt"]) == 2
    assert "not found" in capsys.readouterr().err


def test_out_of_range_value(movies):
    assert main(["ingest", "--kg", str(movies / "kb.txt"), "--top-k", "11"]) == 2


@pytest.mark.parametrize("in_file,flag,expected", [
    (None, None, 3),       # default
    (5, None, 5),          # file beats default
    (None, 7, 7),          # flag beats default
    (5, 7, 7),             # flag beats file
])
def test_config_precedence(tmp_path, in_file, flag, expected):
    argv = ["ingest"]
    if in_file is not None:
        cfg = tmp_path / "run.toml"
        cfg.write_text(f"[paths]\nkg = \"kb.txt\"\n\n[run]\ntop_k = {in_file}\ntoken_budget = 99\n")
        argv += ["--config", str(cfg)]
    if flag is not None:
        argv += ["--top-k", str(flag)]
    cfg = config_from_args(build_parser().parse_args(argv))
    assert cfg.top_k == expected
    if in_file is not None:
        assert cfg.token_budget == 99
        assert cfg.kg == str(tmp_path / "kb.txt")


def test_config_backends_and_mode(tmp_path):
    cfg_path = tmp_path / "run.toml"
    cfg_path.write_text(
        '[backends]\nreason = "chain-oracle:chains.json"\n\n'
        '[gateway.default]\nendpoint = "http://localhost:1/v1"\nmodel = "m"\n'
    )
    cfg = config_from_args(build_parser().parse_args(["ingest", "--config", str(cfg_path)]))
    assert cfg.backends["reason"] == f"chain-oracle:{tmp_path / 'chains.json'}"
    assert cfg.context_mode() == "serialized-text"
    assert cfg.gateway_spec("decompose").model == "m"
    cfg = config_from_args(build_parser().parse_args(["ingest", "--config", str(cfg_path), "--backend-reason", "gateway"]))
    assert cfg.context_mode() == "tuple-explained"


def test_unknown_config_key(tmp_path, capsys):
    p = tmp_path / "run.toml"
    p.write_text("[run]\napi_key = \"nope\"\n")
    assert main(["ingest", "--config", str(p)]) == 2

import json
import shutil
import subprocess
import sys

import pytest

from iris_ir import cli, dataset

from conftest import PROGRAMS
from test_toolchain import NESTED_FUNCTION

PICKED = ["p01_sum", "p09_linked_list", "w01_add"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def last_json(out: str) -> dict:
    return json.loads(out.strip().splitlines()[-1])


def tree(root):
    return sorted((p.relative_to(root).as_posix(), p.stat().st_size) for p in root.rglob("*"))


@pytest.fixture
def sources(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for name in PICKED:
        for f in PROGRAMS.glob(name + ".*"):
            shutil.copy(f, src / f.name)
    (src / "nested.c").write_text(NESTED_FUNCTION)
    return src


def test_pipeline(capsys, tmp_path, sources, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    w = tmp_path / "work"
    common = ["--workdir", w, "--parallelism", "2"]

    code, out = run(capsys, "ingest", sources, "--out", "corpus", *common)
    assert code == 0
    summary = last_json(out)
    assert (summary["kept"], summary["rejected"]) == (3, 1)

    # rerunning gives byte-identical artifacts
    run(capsys, "ingest", sources, "--out", "again", *common)
    assert (w / "corpus.jsonl").read_bytes() == (w / "again.jsonl").read_bytes()
    assert json.loads((w / "corpus.manifest").read_text())["created_at"] == json.loads((w / "again.manifest").read_text())["created_at"]

    code, out = run(capsys, "pairs", w / "corpus.jsonl", "--out", "fns", *common)
    assert code == 0 and last_json(out)["functions"] >= 3
    assert (w / "fns.alignment.jsonl").exists()

    code, _ = run(capsys, "metrics", w / "corpus.jsonl", "--out", "metrics", *common)
    assert code == 0
    assert all(r.static_metrics is not None for r in dataset.read_corpus(w / "metrics.jsonl"))

    code, out = run(capsys, "select", w / "metrics.jsonl", "--out", "picked", "--k", "1", *common)
    assert code == 0 and last_json(out)["selected"] == 1

    code, out = run(capsys, "translate", w / "corpus.jsonl", "--out", "cands.jsonl", "--backend", "oracle", *common)
    assert code == 0 and last_json(out)["candidates"] == 9

    code, out = run(capsys, "eval", w / "corpus.jsonl", "--replay", w / "cands.jsonl", "--out", "eval", "--k", "1,3", *common)
    assert code == 0
    rep = json.loads((w / "eval" / "report.json").read_text())
    assert rep["compile_rate_pct"] == 100.0 and rep["io_rate_pct"] == 100.0 and rep["pass_at"] == {"1": 1.0, "3": 1.0}
    assert "wall_s" not in (w / "eval" / "results.jsonl").read_text()

    code, out = run(
        capsys, "report", "--results", w / "eval" / "results.jsonl", "--corpus", w / "metrics.jsonl",
        "--out", "rep", "--metric", "lines_of_code", "--threshold-metric", "lines_of_code",
        "--leaderboard", PROGRAMS.parent / "leaderboard_codeforces.json", *common,
    )
    assert code == 0
    assert last_json(out)["records"] == 9
    for name in ("rates.csv", "dist_lines_of_code.csv", "leaderboard.csv"):
        assert (w / "rep" / name).exists()


def test_dry_run_touches_nothing(capsys, tmp_path, sources):
    corpus = tmp_path / "c.jsonl"
    dataset.write_corpus([dataset.SampleRecord("local-1", "local", "int main(void){return 0;}", "g", "l")], corpus)
    before = tree(tmp_path)
    w = ["--workdir", tmp_path / "w", "--dry-run"]
    commands = [
        ["ingest", sources, "--out", "x"],
        ["pairs", corpus, "--out", "x"],
        ["metrics", corpus, "--out", "x", "--dynamic"],
        ["select", corpus, "--out", "x"],
        ["translate", corpus, "--out", "x.jsonl"],
        ["eval", corpus, "--replay", tmp_path / "none.jsonl", "--out", "x"],
        ["report", "--results", "r.jsonl", "--corpus", corpus, "--out", "x"],
    ]
    for argv in commands:
        code, out = run(capsys, *argv, *w)
        assert code == 0 and "would" in out
    assert tree(tmp_path) == before


def test_config_errors(capsys, tmp_path, sources):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"parallelism": 2, "colour": "blue"}))
    assert run(capsys, "ingest", sources, "--out", "x", "--config", bad)[0] == 2
    assert run(capsys, "ingest", sources, "--out", "x", "--parallelism", "0")[0] == 2
    bad.write_text("{not json")
    assert run(capsys, "ingest", sources, "--out", "x", "--config", bad)[0] == 2


def test_flags_override_config(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"parallelism": 3, "seed": 9}))
    args = cli.build_parser().parse_args(["select", "c", "--out", "o", "--config", str(conf), "--seed", "4"])
    cfg = cli.load_config(args)
    assert (cfg.parallelism, cfg.seed) == (3, 4)


def test_missing_toolchain(capsys, tmp_path, sources, monkeypatch):
    monkeypatch.setenv("PATH", str(tmp_path))
    monkeypatch.setenv("IRIS_TOOLCHAIN_DIR", str(tmp_path))
    assert run(capsys, "ingest", sources, "--out", tmp_path / "x")[0] == 3


def test_partial_failures(capsys, tmp_path):
    corpus = tmp_path / "c.jsonl"
    recs = [dataset.SampleRecord(f"local-{i}", "local", "", "g", "l") for i in range(4)]
    dataset.write_corpus(recs, corpus)
    replay = tmp_path / "r.jsonl"
    replay.write_text(json.dumps({"sample_id": "local-0", "candidate_index": 0, "raw_output": "x"}) + "\n")
    argv = ["translate", corpus, "--out", tmp_path / "o.jsonl", "--backend", "replay", "--backend-corpus", replay, "--n", "1"]
    assert run(capsys, *argv)[0] == 4
    assert run(capsys, *argv, "--failure-threshold", "0.8")[0] == 0


def test_corrupt_corpus_is_an_error(capsys, tmp_path):
    (tmp_path / "c.jsonl").write_text('{"id": "x"')
    assert run(capsys, "pairs", tmp_path / "c.jsonl", "--out", tmp_path / "o")[0] == 1


def test_console_script_is_installed():
    exe = shutil.which("iris")
    argv = [exe] if exe else [sys.executable, "-m", "iris_ir.cli"]
    proc = subprocess.run(argv + ["--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("ingest", "pairs", "metrics", "select", "translate", "eval", "report"):
        assert sub in proc.stdout


def test_interrupted_pool_resumes(tmp_path):
    cfg = cli.RunConfig(parallelism=1)
    ckpt = tmp_path / "out.checkpoint.jsonl"
    seen = []

    def flaky(i):
        if i == 3 and not seen.count("boom"):
            seen.append("boom")
            raise KeyboardInterrupt
        seen.append(i)
        return {"status": "ok", "value": i * i}

    with pytest.raises(KeyboardInterrupt):
        cli.run_pool(cfg, "t", list(range(6)), str, flaky, ckpt, resume=False)
    done_before = {json.loads(l)["key"] for l in ckpt.read_text().splitlines()}
    assert {"0", "1", "2"} <= done_before and "3" not in done_before
    seen.clear()
    seen.append("boom")
    results = cli.run_pool(cfg, "t", list(range(6)), str, flaky, ckpt, resume=True)
    assert [r["value"] for r in results] == [i * i for i in range(6)]
    assert not set(map(str, seen[1:])) & done_before  # finished items were not redone
    assert not ckpt.exists()

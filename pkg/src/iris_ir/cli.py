"""``iris``: command-line driver for the corpus, translation and evaluation passes.

Configuration comes from an optional JSON file (``--config``); command-line
flags override it. Machine-readable results go to files or stdout, progress to
stderr.

Exit codes: 0 success, 1 pipeline error, 2 configuration error, 3 missing
toolchain, 4 too many per-item failures, 130 interrupted (checkpoint kept).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import signal
import sys
import tempfile
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from . import analysis, cmetrics, dataset, evalharness, selection, translate
from .errors import BuildRejected, ConfigError, IrisError, ToolMissing
from .toolchain import ToolchainConfig, build_native, tool_versions

log = logging.getLogger("iris")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_TOOLCHAIN, EXIT_PARTIAL, EXIT_INTERRUPTED = 0, 1, 2, 3, 4, 130
DEFAULT_DIST_METRICS = ("lines_of_code", "nesting_depth", "loops", "conditionals")


@dataclass
class RunConfig:
    toolchain: dict = field(default_factory=dict)
    backend: dict = field(default_factory=dict)
    corpus_dir: str | None = None
    parallelism: int = 1
    seed: int = 0
    workdir: str = "."
    failure_threshold: float = 0.05  # fraction of items allowed to error before exit 4
    max_tokens: int = 32768
    chars_per_token: float = 4.0
    output_factor: float = 3.0

    def validate(self) -> None:
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if not 0.0 <= self.failure_threshold <= 1.0:
            raise ConfigError("failure_threshold must lie in [0, 1]")
        unknown = set(self.toolchain) - {f.name for f in dataclasses.fields(ToolchainConfig)}
        if unknown:
            raise ConfigError(f"unknown toolchain keys: {sorted(unknown)}")
        unknown = set(self.backend) - {f.name for f in dataclasses.fields(translate.BackendConfig)}
        if unknown:
            raise ConfigError(f"unknown backend keys: {sorted(unknown)}")

    def toolchain_config(self) -> ToolchainConfig:
        return ToolchainConfig.resolve(**self.toolchain)

    def out_path(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.workdir) / p


def load_config(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**raw)
    for name in ("parallelism", "seed", "workdir", "failure_threshold"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    if cfg.corpus_dir:
        os.environ.setdefault(dataset.CORPUS_ENV, cfg.corpus_dir)
    cfg.validate()
    return cfg


# -- worker pool with checkpointing -----------------------------------------------------

class PartialFailures(IrisError):
    pass


def run_pool(
    cfg: RunConfig,
    stage: str,
    items: list,
    key: Callable[[object], str],
    work: Callable[[object], dict],
    checkpoint: Path,
    resume: bool,
) -> list[dict]:
    """Apply ``work`` to every item; results come back in input order.

    Each finished item is appended to ``checkpoint``. On Ctrl-C in-flight items
    are drained, the checkpoint is kept, and KeyboardInterrupt propagates; a
    later run with ``resume`` skips the items it lists.
    """
    done: dict[str, dict] = {}
    if resume and checkpoint.exists():
        for line in checkpoint.read_text(encoding="utf-8").splitlines():
            if line.strip():
                row = json.loads(line)
                done[row["key"]] = row["result"]
        log.info("[%s] resuming: %d item(s) already processed", stage, len(done))
    elif checkpoint.exists():
        checkpoint.unlink()
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    todo = [it for it in items if key(it) not in done]
    total = len(items)

    def record(k: str, res: dict, fh) -> None:
        done[k] = res
        fh.write(json.dumps({"key": k, "result": res}, sort_keys=True) + "\n")
        fh.flush()
        status = res.get("status", "ok")
        print(f"[{stage}] {len(done)}/{total} {k}: {status}", file=sys.stderr)

    def guarded(it):
        try:
            return work(it)
        except KeyboardInterrupt:
            raise
        except (IrisError, OSError, ValueError) as exc:
            return {"status": "error", "error": f"{type(exc).__name__}: {exc}"}

    with open(checkpoint, "a", encoding="utf-8") as fh, ThreadPoolExecutor(cfg.parallelism) as pool:
        pending = {}
        queue = iter(todo)
        try:
            for it in queue:
                pending[pool.submit(guarded, it)] = key(it)
                if len(pending) >= cfg.parallelism * 2:
                    finished, _ = wait(pending, return_when=FIRST_COMPLETED)
                    for f in finished:
                        record(pending.pop(f), f.result(), fh)
            for f in list(pending):
                record(pending.pop(f), f.result(), fh)
        except KeyboardInterrupt:
            print(f"[{stage}] interrupted; draining {len(pending)} in-flight item(s)", file=sys.stderr)
            for f in list(pending):
                if f.cancel():
                    pending.pop(f)
            for f in list(pending):
                try:
                    record(pending.pop(f), f.result(), fh)
                except BaseException:  # noqa: BLE001 - best effort while shutting down
                    pass
            print(f"[{stage}] checkpoint written to {checkpoint}", file=sys.stderr)
            raise
    results = [done[key(it)] for it in items]
    errors = sum(r.get("status") == "error" for r in results)
    checkpoint.unlink()
    if total and errors / total > cfg.failure_threshold:
        raise PartialFailures(f"{errors}/{total} item(s) failed in {stage}")
    return results


def _checkpoint_for(out: Path) -> Path:
    return out.with_name(out.name + ".checkpoint.jsonl")


# -- subcommands --------------------------------------------------------------------------

def _read_tests(c_file: Path) -> list[dataset.IoTest]:
    spec = c_file.with_suffix(".tests.json")
    if not spec.exists():
        return []
    rows = json.loads(spec.read_text(encoding="utf-8"))
    return [
        dataset.IoTest(r.get("stdin", "").encode(), r.get("expected_stdout", "").encode(), float(r.get("timeout_s", 15.0)))
        for r in rows
    ]


def cmd_ingest(args, cfg: RunConfig) -> int:
    src = Path(args.sources)
    files = sorted(p for p in src.rglob("*.c") if p.is_file())
    out = _out(cfg, args.out)
    if args.dry_run:
        print(f"ingest: would build {len(files)} source(s) from {src} into {out}")
        return EXIT_OK
    tc = cfg.toolchain_config()

    def work(path: Path) -> dict:
        rel = path.relative_to(src)
        wrapper = path.with_suffix(".wrapper.cpp")
        meta = {"path": rel.as_posix()}
        if rel.parent != Path("."):
            meta["group"] = rel.parent.as_posix()
        try:
            rec = dataset.build_pair(
                path.read_text(encoding="utf-8", errors="surrogateescape"),
                tc,
                origin=args.origin,
                io_tests=_read_tests(path),
                wrapper_cpp=wrapper.read_text(encoding="utf-8") if wrapper.exists() else None,
                meta=meta,
            )
        except BuildRejected as exc:
            return {"status": f"rejected ({exc.side})"}
        return {"status": "ok", "record": rec.to_dict()}

    results = run_pool(cfg, "ingest", files, lambda p: p.relative_to(src).as_posix(), work, _checkpoint_for(out), args.resume)
    built = [dataset.SampleRecord.from_dict(r["record"]) for r in results if r["status"] == "ok"]
    rejected = len(files) - len(built)
    unique = dataset.dedup(built)
    kept = dataset.filter_context(unique, cfg.max_tokens, cfg.chars_per_token, cfg.output_factor)
    dataset.write_corpus(kept, out, tool_versions(tc))
    print(json.dumps({"sources": len(files), "kept": len(kept), "rejected": rejected,
                      "duplicates": len(built) - len(unique), "over_context": len(unique) - len(kept), "corpus": str(out)}))
    return EXIT_OK


def _load(path: str) -> list[dataset.SampleRecord]:
    return dataset.read_corpus(path)


def _out(cfg: RunConfig, name: str) -> Path:
    return dataset.corpus_path(cfg.out_path(name))


def cmd_pairs(args, cfg: RunConfig) -> int:
    records = _load(args.corpus)
    out = _out(cfg, args.out)
    if args.dry_run:
        print(f"pairs: would split {len(records)} record(s) into function pairs at {out}")
        return EXIT_OK
    report: list[dict] = []
    fn_records = []
    for r in records:
        if r.granularity != "translation_unit":
            continue
        fn_records.extend(dataset.explode_functions(r, report))
    dataset.write_corpus(fn_records, out)
    alignment = out.with_name(out.stem + ".alignment.jsonl")
    with open(alignment, "w", encoding="utf-8") as fh:
        for note in report:
            fh.write(json.dumps(note, sort_keys=True) + "\n")
    print(json.dumps({"units": len(records), "functions": len(fn_records), "unaligned": len(report), "corpus": str(out)}))
    return EXIT_OK


def cmd_metrics(args, cfg: RunConfig) -> int:
    records = _load(args.corpus)
    out = _out(cfg, args.out)
    if args.dry_run:
        what = "static and dynamic" if args.dynamic else "static"
        print(f"metrics: would compute {what} metrics for {len(records)} record(s) into {out}")
        return EXIT_OK
    tc = cfg.toolchain_config() if args.dynamic else None

    def work(r: dataset.SampleRecord) -> dict:
        sm = cmetrics.analyze_c(r.c_source)
        dm = None
        # only whole programs can run on their own; wrapper-style samples keep static metrics
        runnable = r.granularity == "translation_unit" and not r.wrapper_cpp
        if tc is not None and runnable:
            stdin = r.io_tests[0].stdin if r.io_tests else b""
            with tempfile.TemporaryDirectory(prefix="iris-measure-") as tmp:
                exe = build_native(r.c_source, tc, tmp)
                dm = cmetrics.measure_repeated(exe, stdin, timeout=args.timeout)
        status = "ok" if dm is not None or tc is None else "ok (static only)"
        return {"status": status, "record": r.replace(static_metrics=sm, dynamic_metrics=dm or r.dynamic_metrics).to_dict()}

    results = run_pool(cfg, "metrics", records, lambda r: r.id, work, _checkpoint_for(out), args.resume)
    updated = [dataset.SampleRecord.from_dict(x["record"]) if "record" in x else r for x, r in zip(results, records)]
    dataset.write_corpus(updated, out)
    print(json.dumps({"records": len(updated), "corpus": str(out)}))
    return EXIT_OK


def cmd_select(args, cfg: RunConfig) -> int:
    records = _load(args.corpus)
    out = _out(cfg, args.out)
    groups: dict[str, list] = {}
    for r in records:
        groups.setdefault(str(r.meta.get(args.group_key, "")), []).append(r)
    if args.dry_run:
        print(f"select: would pick up to {args.k} of each of {len(groups)} group(s) into {out}")
        return EXIT_OK
    chosen = []
    for name in sorted(groups):
        members = [r if r.static_metrics else r.replace(static_metrics=cmetrics.analyze_c(r.c_source)) for r in groups[name]]
        schema = "static13+dyn4" if all(m.dynamic_metrics for m in members) else "static13"
        chosen.extend(selection.select_submissions(members, k=args.k, seed=cfg.seed, schema_id=schema))
    dataset.write_corpus(chosen, out)
    print(json.dumps({"groups": len(groups), "selected": len(chosen), "corpus": str(out)}))
    return EXIT_OK


def _backend_config(args, cfg: RunConfig) -> translate.BackendConfig:
    conf = dict(cfg.backend)
    for name in ("kind", "endpoint_url", "model_name", "corpus_path"):
        val = getattr(args, name, None)
        if val is not None:
            conf[name] = val
    kind = conf.pop("kind", "oracle")
    if kind == "oracle":
        conf.setdefault("corpus_path", args.corpus)
    return translate.BackendConfig.from_env(kind, **conf)


def cmd_translate(args, cfg: RunConfig) -> int:
    records = _load(args.corpus)
    out = cfg.out_path(args.out)
    bcfg = _backend_config(args, cfg)
    if args.dry_run:
        print(f"translate: would request {args.n} candidate(s) for {len(records)} sample(s) from the {bcfg.kind} backend into {out}")
        return EXIT_OK
    backend = translate.make_backend(bcfg)

    def work(r: dataset.SampleRecord) -> dict:
        req = translate.TranslationRequest(r.id, r.gimple, args.n, args.max_tokens, args.temperature)
        res = translate.translate(req, backend)
        return {"status": "ok", "rows": res.replay_rows()}

    results = run_pool(cfg, "translate", records, lambda r: r.id, work, _checkpoint_for(out), args.resume)
    out.parent.mkdir(parents=True, exist_ok=True)
    n_rows = 0
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for res in results:
            for row in res.get("rows", ()):
                fh.write(json.dumps(row, sort_keys=True, ensure_ascii=True) + "\n")
                n_rows += 1
    print(json.dumps({"samples": len(records), "candidates": n_rows, "replay": str(out),
                      "backend": bcfg.kind, "decoding": {"n": args.n, "temperature": args.temperature, "max_tokens": args.max_tokens}}))
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    records = _load(args.corpus)
    outdir = cfg.out_path(args.out)
    if args.dry_run:
        print(f"eval: would validate {len(records)} sample(s), score candidates from {args.replay}, write to {outdir}")
        return EXIT_OK
    tc = cfg.toolchain_config()
    replay = translate.ReplayBackend.from_path(args.replay)
    ks = sorted({int(k) for k in args.k.split(",")})

    def work(r: dataset.SampleRecord) -> dict:
        task = evalharness.EvalTask.for_sample(r)
        if not args.skip_validation and not evalharness.validate_ground_truth(task, tc):
            return {"status": "invalid ground truth"}
        n = len(replay.table.get(r.id, {}))
        if n == 0:
            return {"status": "error", "error": "no candidates in replay file"}
        res = translate.translate(translate.TranslationRequest(r.id, r.gimple, n), replay)
        scored = [evalharness.evaluate_candidate(ir, task, tc, i) for i, ir in enumerate(res.extracted)]
        return {"status": "ok", "results": [c.to_dict() for c in scored]}

    outcomes = run_pool(cfg, "eval", records, lambda r: r.id, work, _checkpoint_for(outdir / "results.jsonl"), args.resume)
    results = [evalharness.CandidateResult.from_dict(d) for o in outcomes for d in o.get("results", ())]
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "results.jsonl", "w", encoding="utf-8") as fh, open(outdir / "timings.jsonl", "w", encoding="utf-8") as th:
        for res in results:
            row = res.to_dict()
            th.write(json.dumps({"sample_id": res.sample_id, "candidate_index": res.candidate_index,
                                 "wall_s": [t["wall_s"] for t in row["per_test"]]}) + "\n")
            for t in row["per_test"]:
                del t["wall_s"]  # timings live in timings.jsonl so results stay reproducible
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    invalid = sum(o.get("status") == "invalid ground truth" for o in outcomes)
    if not results:
        print(json.dumps({"samples": len(records), "invalid_ground_truth": invalid, "scored": 0}))
        return EXIT_OK
    report = evalharness.aggregate(results, ks)
    (outdir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(report.format_table(), file=sys.stderr)
    print(json.dumps({"samples": len(records), "invalid_ground_truth": invalid, "scored": report.n_samples,
                      "compile_rate_pct": report.compile_rate_pct, "io_rate_pct": report.io_rate_pct,
                      "pass_at": {str(k): v for k, v in report.pass_at.items()}}))
    return EXIT_OK


def _leaderboard_entries(path: str) -> list[tuple]:
    try:
        rows = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = []
        for row in rows:
            rep = json.loads(Path(row["report"]).read_text(encoding="utf-8")) if "report" in row else row
            entries.append((row["model"], row["params_billions"], rep))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad leaderboard file {path}: {exc!r}") from None
    return entries


def cmd_report(args, cfg: RunConfig) -> int:
    outdir = cfg.out_path(args.out)
    if args.dry_run:
        planned = ["rates.csv"] + [f"dist_{m}.csv" for m in args.metric or DEFAULT_DIST_METRICS]
        if args.leaderboard:
            planned.append("leaderboard.csv")
        print(f"report: would write {', '.join(planned)} under {outdir}")
        return EXIT_OK
    outdir.mkdir(parents=True, exist_ok=True)
    summary: dict = {}
    if args.results:
        if not args.corpus:
            raise ConfigError("report --results needs --corpus for the sample metrics")
        by_id = {r.id: r for r in _load(args.corpus)}
        recs = []
        with open(args.results, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                for t in d.get("per_test", ()):
                    t.setdefault("wall_s", 0.0)
                res = evalharness.CandidateResult.from_dict(d)
                sample = by_id.get(res.sample_id)
                if sample is None:
                    continue
                sm = sample.static_metrics or cmetrics.analyze_c(sample.c_source)
                recs.append(analysis.FailureRecord.from_result(res.sample_id, sm, res, args.criterion))
        rates = analysis.conditional_failure_rates(recs)
        analysis.write_rates_csv(rates, outdir / "rates.csv")
        print(analysis.format_rates(rates), file=sys.stderr)
        for metric in args.metric or DEFAULT_DIST_METRICS:
            analysis.write_distribution_csv(analysis.metric_distributions(recs, metric), outdir / f"dist_{metric}.csv")
        summary["records"] = len(recs)
        if args.threshold_metric:
            summary["threshold"] = analysis.threshold_summary(recs, args.threshold_metric, args.threshold)
    if args.leaderboard:
        rows, scatter = analysis.leaderboard(_leaderboard_entries(args.leaderboard))
        analysis.write_leaderboard_csv(rows, outdir / "leaderboard.csv")
        summary["leaderboard_rows"] = len(rows)
    if not summary:
        raise ConfigError("report needs --results and/or --leaderboard")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override it")
    common.add_argument("--workdir", help="root for relative output paths")
    common.add_argument("--parallelism", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--failure-threshold", dest="failure_threshold", type=float)
    common.add_argument("--dry-run", action="store_true", help="print the planned actions and exit")
    common.add_argument("--resume", action="store_true", help="continue from an interrupted run's checkpoint")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="iris", description="GIMPLE/LLVM IR corpus and evaluation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="build a corpus from a directory of C sources")
    s.add_argument("sources")
    s.add_argument("--out", required=True)
    s.add_argument("--origin", default="local", choices=dataset.ORIGINS)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("pairs", parents=[common], help="split a corpus into function-level pairs")
    s.add_argument("corpus")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pairs)

    s = sub.add_parser("metrics", parents=[common], help="attach static (and optionally dynamic) metrics")
    s.add_argument("corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--dynamic", action="store_true", help="also build with gcc and measure 3 runs")
    s.add_argument("--timeout", type=float, default=15.0)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("select", parents=[common], help="pick k representatives per group by k-means")
    s.add_argument("corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--group-key", default="group", help="meta field naming the group; records without it share one group")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("translate", parents=[common], help="generate candidate IR into a replay file")
    s.add_argument("corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--backend", dest="kind", choices=translate.BACKEND_KINDS)
    s.add_argument("--endpoint", dest="endpoint_url")
    s.add_argument("--model", dest="model_name")
    s.add_argument("--backend-corpus", dest="corpus_path", help="corpus (oracle) or replay file (replay)")
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--temperature", type=float, default=0.2)
    s.add_argument("--max-tokens", type=int, default=8192)
    s.set_defaults(func=cmd_translate)

    s = sub.add_parser("eval", parents=[common], help="score replayed candidates against I/O tests")
    s.add_argument("corpus")
    s.add_argument("--replay", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--k", default="1", help="comma-separated pass@k values")
    s.add_argument("--skip-validation", action="store_true", help="do not re-check the ground truth first")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", parents=[common], help="failure-rate, distribution and leaderboard tables")
    s.add_argument("--results", help="results.jsonl from eval")
    s.add_argument("--corpus")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--criterion", choices=analysis.OUTCOME_CRITERIA, default="compile")
    s.add_argument("--metric", action="append", help="metric for a dist_<metric>.csv (repeatable)")
    s.add_argument("--threshold-metric")
    s.add_argument("--threshold", type=float, default=50.0)
    s.add_argument("--leaderboard", help="JSON list of {model, params_billions, compile_rate_pct, io_rate_pct}")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Iterable[str] | None = None) -> int:
    args = build_parser().parse_args(list(argv) if argv is not None else None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    stage = args.command
    try:
        cfg = load_config(args)
        return args.func(args, cfg)
    except ToolMissing as exc:
        print(f"iris {stage}: toolchain: {exc}", file=sys.stderr)
        return EXIT_TOOLCHAIN
    except ConfigError as exc:
        print(f"iris {stage}: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PartialFailures as exc:
        print(f"iris {stage}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except IrisError as exc:
        print(f"iris {stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"iris {stage}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except KeyboardInterrupt:
        print(f"iris {stage}: interrupted; rerun with --resume to continue", file=sys.stderr)
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    signal.signal(signal.SIGPIPE, signal.SIG_DFL)
    sys.exit(main())

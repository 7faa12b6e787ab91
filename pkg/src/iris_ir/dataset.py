"""Sample records, corpus files, and the corpus-building passes.

A corpus is a ``<name>.jsonl`` file with one record per line plus a
``<name>.manifest`` JSON sidecar. Records serialize deterministically (sorted
keys, ASCII escapes), so writing the same records twice gives the same bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from . import irparse
from .clex import strip_comments
from .cmetrics import DynamicMetrics, StaticMetrics
from .errors import (
    BuildRejected,
    DumpMissing,
    MalformedLine,
    SchemaMismatch,
    ToolFailure,
    ToolTimeout,
)
from .toolchain import ToolchainConfig, dump_gimple, dump_llvm_ir

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ORIGINS = ("thestack", "gnu", "codeforces", "exebench", "local")
GRANULARITIES = ("translation_unit", "function")
CORPUS_ENV = "IRIS_CORPUS_DIR"


@dataclass(frozen=True)
class IoTest:
    stdin: bytes = b""
    expected_stdout: bytes = b""
    timeout_s: float = 15.0

    def __post_init__(self):
        if not self.timeout_s > 0:
            raise ValueError("timeout_s must be positive")

    def to_dict(self) -> dict:
        return {
            "stdin": _bytes_out(self.stdin),
            "expected_stdout": _bytes_out(self.expected_stdout),
            "timeout_s": self.timeout_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IoTest":
        return cls(_bytes_in(d["stdin"]), _bytes_in(d["expected_stdout"]), float(d.get("timeout_s", 15.0)))


# Arbitrary bytes survive JSON as str via surrogateescape; json escapes the
# lone surrogates as \udcXX because records are written with ensure_ascii.
def _bytes_out(b: bytes) -> str:
    return b.decode("utf-8", errors="surrogateescape")


def _bytes_in(s: str) -> bytes:
    return s.encode("utf-8", errors="surrogateescape")


@dataclass(frozen=True)
class SampleRecord:
    id: str
    origin: str
    c_source: str
    gimple: str
    llvm_ir: str
    granularity: str = "translation_unit"
    static_metrics: StaticMetrics | None = None
    dynamic_metrics: DynamicMetrics | None = None
    io_tests: tuple[IoTest, ...] = ()
    wrapper_cpp: str | None = None
    # free-form extras: function name, parent id, problem group, standalone flag
    meta: dict = field(default_factory=dict, hash=False, compare=True)

    def replace(self, **changes) -> "SampleRecord":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return SampleRecord(**d)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "origin": self.origin,
            "c_source": self.c_source,
            "gimple": self.gimple,
            "llvm_ir": self.llvm_ir,
            "granularity": self.granularity,
            "static_metrics": self.static_metrics.to_dict() if self.static_metrics else None,
            "dynamic_metrics": self.dynamic_metrics.to_dict() if self.dynamic_metrics else None,
            "io_tests": [t.to_dict() for t in self.io_tests],
            "wrapper_cpp": self.wrapper_cpp,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        sm = d.get("static_metrics")
        dm = d.get("dynamic_metrics")
        return cls(
            id=d["id"],
            origin=d["origin"],
            c_source=d["c_source"],
            gimple=d["gimple"],
            llvm_ir=d["llvm_ir"],
            granularity=d.get("granularity", "translation_unit"),
            static_metrics=StaticMetrics.from_dict(sm) if sm else None,
            dynamic_metrics=DynamicMetrics.from_dict(dm) if dm else None,
            io_tests=tuple(IoTest.from_dict(t) for t in d.get("io_tests") or ()),
            wrapper_cpp=d.get("wrapper_cpp"),
            meta=dict(d.get("meta") or {}),
        )


@dataclass(frozen=True)
class CorpusManifest:
    name: str
    record_count: int
    toolchain: dict
    schema_version: int = SCHEMA_VERSION
    created_at: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "record_count": self.record_count,
            "toolchain": self.toolchain,
            "schema_version": self.schema_version,
            "created_at": self.created_at,
        }


def content_id(origin: str, text: str) -> str:
    digest = hashlib.sha256(text.encode("utf-8", errors="surrogateescape")).hexdigest()[:12]
    return f"{origin}-{digest}"


# -- building ---------------------------------------------------------------------

def build_pair(
    source: str,
    cfg: ToolchainConfig,
    origin: str = "local",
    io_tests: Iterable[IoTest] = (),
    wrapper_cpp: str | None = None,
    meta: dict | None = None,
) -> SampleRecord:
    """Dump both IRs of ``source``; BuildRejected names the side(s) that failed."""
    if origin not in ORIGINS:
        raise ValueError(f"unknown origin {origin!r}")
    outputs = {}
    errors = {}
    for side, dump in (("gimple", dump_gimple), ("llvm", dump_llvm_ir)):
        try:
            outputs[side] = dump(source, cfg)
        except (ToolFailure, DumpMissing, ToolTimeout) as exc:
            errors[side] = str(exc)
    if errors:
        side = "both" if len(errors) == 2 else next(iter(errors))
        raise BuildRejected(side, "\n".join(f"{k}: {v}" for k, v in errors.items()))
    return SampleRecord(
        id=content_id(origin, source),
        origin=origin,
        c_source=source,
        gimple=outputs["gimple"],
        llvm_ir=outputs["llvm"],
        io_tests=tuple(io_tests),
        wrapper_cpp=wrapper_cpp,
        meta=dict(meta or {}),
    )


def explode_functions(record: SampleRecord, report: list[dict] | None = None) -> list[SampleRecord]:
    """Split a translation-unit record into aligned function-level records.

    The results are marked ``meta["standalone"] = False``: a lone function's
    IR lacks the globals and declarations it may reference.
    """
    if record.granularity != "translation_unit":
        raise ValueError("explode_functions needs a translation_unit record")
    if not record.gimple.strip():
        return []  # gcc writes no dump for a unit without function bodies
    gimple_fns = irparse.parse_gimple_dump(record.gimple)
    prelude, llvm_fns = irparse.parse_llvm_module(record.llvm_ir)
    c_fns = irparse.extract_c_functions(record.c_source)
    triplets = irparse.align_functions(gimple_fns, llvm_fns, c_fns, origin=record.id, report=report)
    out = []
    for t in triplets:
        name = t.gimple_function.name
        out.append(
            SampleRecord(
                id=f"{record.id}/{name}",
                origin=record.origin,
                c_source=t.c_function,
                gimple=t.gimple_function.body,
                llvm_ir=t.llvm_function.body,
                granularity="function",
                meta={"function": name, "parent": record.id, "standalone": False},
            )
        )
    return out


def normalized_key(source: str) -> str:
    return re.sub(r"\s+", " ", strip_comments(source)).strip()


def dedup(records: Iterable[SampleRecord]) -> list[SampleRecord]:
    """Keep the first record per comment- and whitespace-normalized source."""
    seen = set()
    out = []
    for r in records:
        key = normalized_key(r.c_source)
        if key in seen:
            log.info("dedup: dropping %s", r.id)
            continue
        seen.add(key)
        out.append(r)
    return out


def estimate_tokens(text: str, chars_per_token: float = 4.0) -> int:
    return math.ceil(len(text) / chars_per_token)


def filter_context(
    records: Iterable[SampleRecord],
    max_tokens: int = 32768,
    chars_per_token: float = 4.0,
    output_factor: float = 3.0,
    rejected: list[tuple[str, int]] | None = None,
) -> list[SampleRecord]:
    """Keep records whose prompt plus expected output fits ``max_tokens``."""
    kept = []
    for r in records:
        est = estimate_tokens(r.gimple, chars_per_token)
        if est * (1 + output_factor) <= max_tokens:
            kept.append(r)
        else:
            log.info("context filter: %s rejected (%d input tokens, %.0f total)", r.id, est, est * (1 + output_factor))
            if rejected is not None:
                rejected.append((r.id, est))
    return kept


def split(records: list[SampleRecord], test_fraction: float, seed: int = 0) -> tuple[list, list]:
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError("test_fraction must lie in [0, 1]")
    order = list(range(len(records)))
    random.Random(seed).shuffle(order)
    n_test = round(test_fraction * len(records))
    test = [records[i] for i in order[:n_test]]
    train = [records[i] for i in order[n_test:]]
    return train, test


# -- persistence --------------------------------------------------------------------

def corpus_path(name_or_path: str | Path) -> Path:
    """Bare names resolve under ``$IRIS_CORPUS_DIR`` when it is set."""
    p = Path(name_or_path)
    root = os.environ.get(CORPUS_ENV)
    if root and not p.is_absolute() and len(p.parts) == 1:
        p = Path(root) / p
    if p.suffix != ".jsonl":
        p = p.with_name(p.name + ".jsonl")
    return p


def manifest_path(data_path: Path) -> Path:
    return data_path.with_suffix(".manifest")


def dumps_record(record: SampleRecord) -> str:
    return json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=True, separators=(",", ":"))


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.replace(microsecond=0).isoformat()


def write_corpus(
    records: Iterable[SampleRecord], path: str | Path, toolchain: dict | None = None
) -> CorpusManifest:
    data = corpus_path(path)
    data.parent.mkdir(parents=True, exist_ok=True)
    ids = set()
    count = 0
    with open(data, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            if r.id in ids:
                raise ValueError(f"duplicate record id {r.id!r}")
            ids.add(r.id)
            fh.write(dumps_record(r) + "\n")
            count += 1
    manifest = CorpusManifest(data.stem, count, dict(toolchain or {}), SCHEMA_VERSION, _timestamp())
    manifest_path(data).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def read_manifest(path: str | Path) -> CorpusManifest | None:
    mp = manifest_path(corpus_path(path))
    if not mp.exists():
        return None
    d = json.loads(mp.read_text(encoding="utf-8"))
    if d.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(f"{mp}: schema_version {d.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    return CorpusManifest(d["name"], d["record_count"], d.get("toolchain", {}), d["schema_version"], d.get("created_at", ""))


def read_corpus(path: str | Path) -> list[SampleRecord]:
    data = corpus_path(path)
    read_manifest(data)
    out = []
    with open(data, encoding="utf-8", newline="") as fh:
        for n, line in enumerate(fh, 1):
            if not line.endswith("\n"):
                raise MalformedLine(n, "truncated line (no terminating newline)")
            if not line.strip():
                continue
            try:
                out.append(SampleRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedLine(n, str(exc)) from None
    return out

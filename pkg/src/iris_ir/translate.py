"""GIMPLE to LLVM IR translation backends and the end-to-end build pipeline."""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

from .dataset import SampleRecord, content_id, read_corpus
from .evalharness import declaration_block
from .errors import (
    BackendUnavailable,
    ConfigError,
    DumpMissing,
    IrRejected,
    LinkFailure,
    MalformedLine,
    PipelineError,
    SampleUnknown,
    ToolFailure,
    ToolTimeout,
)
from .toolchain import (
    ToolchainConfig,
    compile_ir_to_object,
    dump_gimple,
    link_executable,
    link_with_wrapper,
    run_tool,
)

log = logging.getLogger(__name__)

ENDPOINT_ENV = "IRIS_ENDPOINT"
API_KEY_ENV = "IRIS_API_KEY"

PROMPT_TEMPLATE = (
    "### Input\n"
    "GCC GIMPLE dump of a C program, compiled without optimization:\n"
    "{gimple}\n"
    "\n"
    "### Instruction\n"
    "Write the equivalent program as a textual LLVM IR module.\n"
    "\n"
    "### Goal\n"
    "The module must assemble with llc, link with the rest of the program, "
    "and produce the same output as the original.\n"
)


def render_prompt(gimple: str, template: str = PROMPT_TEMPLATE) -> str:
    if template.count("{gimple}") != 1:
        raise ConfigError("prompt template needs exactly one {gimple} placeholder")
    head, tail = template.split("{gimple}")
    return head + gimple + tail


# -- output post-processing ---------------------------------------------------------------

_FENCE = re.compile(r"```[^\n]*\n(.*?)(?:```|\Z)", re.S)
_MODULE_LINE = re.compile(
    r"^(?:;|define\b|declare\b|@|%|\$|!|target\b|source_filename\b|attributes\b|module\s+asm\b|uselistorder)"
)
_INLINE_START = re.compile(r"\b(?:define|declare)\b")


def _module_part(text: str) -> str | None:
    lines = text.split("\n")
    first = next((i for i, ln in enumerate(lines) if _MODULE_LINE.match(ln)), None)
    if first is None:
        m = _INLINE_START.search(text)
        if m is None:
            return None
        lines = text[m.start() :].split("\n")
        first = 0
    kept = []
    in_body = False
    for ln in lines[first:]:
        if in_body:
            kept.append(ln)
            if ln.startswith("}"):
                in_body = False
            continue
        if not ln.strip():
            kept.append(ln)
            continue
        if not _MODULE_LINE.match(ln):
            break  # prose after the module
        kept.append(ln)
        if ln.startswith("define") and ln.rstrip().endswith("{"):
            in_body = True
    return "\n".join(kept).strip("\n") + "\n"


def extract_ir(raw: str) -> str:
    """Pull the LLVM module out of a model response.

    Takes the first fenced block when there is one; then keeps the text from
    the first module-level line up to the first line of trailing prose.
    Returns ``raw`` untouched when nothing looks like IR.
    """
    m = _FENCE.search(raw)
    text = m.group(1) if m else raw
    part = _module_part(text)
    if part is None:
        return text if m else raw
    return part


# -- backends ---------------------------------------------------------------------------------

BACKEND_KINDS = ("remote", "oracle", "replay")


@dataclass(frozen=True)
class BackendConfig:
    kind: str
    endpoint_url: str | None = None
    model_name: str = ""
    corpus_path: str | None = None
    request_timeout_s: float = 120.0
    max_retries: int = 3
    api_key: str | None = None
    chat: bool = False  # message-list bodies instead of a bare prompt
    batch_n: bool = True  # endpoint accepts an `n` parameter

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint_url:
            raise ConfigError("remote backend needs endpoint_url (or IRIS_ENDPOINT)")
        if self.kind in ("oracle", "replay") and not self.corpus_path:
            raise ConfigError(f"{self.kind} backend needs corpus_path")

    @classmethod
    def from_env(cls, kind: str = "remote", **kw) -> "BackendConfig":
        if kind == "remote":
            kw.setdefault("endpoint_url", os.environ.get(ENDPOINT_ENV))
            kw.setdefault("api_key", os.environ.get(API_KEY_ENV))
        return cls(kind=kind, **kw)


@dataclass(frozen=True)
class TranslationRequest:
    sample_id: str
    gimple: str
    n_candidates: int = 3
    max_output_tokens: int = 8192
    temperature: float = 0.2

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")


@dataclass(frozen=True)
class TranslationResult:
    sample_id: str
    candidates: tuple[str, ...]
    extracted: tuple[str, ...]
    backend_name: str
    latency_s: tuple[float, ...]
    truncated: tuple[bool, ...] = ()
    decoding: dict = field(default_factory=dict, compare=False)

    def replay_rows(self) -> list[dict]:
        return [
            {"sample_id": self.sample_id, "candidate_index": i, "raw_output": raw}
            for i, raw in enumerate(self.candidates)
        ]


class Backend(Protocol):
    name: str

    def generate(self, req: TranslationRequest) -> list[tuple[str, float, bool]]:
        """Return ``n_candidates`` tuples ``(raw_text, latency_s, truncated)``."""


class OracleBackend:
    """Answers with the ground-truth LLVM IR stored in a corpus."""

    name = "oracle"

    def __init__(self, records: Iterable[SampleRecord]):
        self.by_id = {r.id: r.llvm_ir for r in records}

    @classmethod
    def from_path(cls, path: str | Path) -> "OracleBackend":
        return cls(read_corpus(path))

    def generate(self, req: TranslationRequest) -> list[tuple[str, float, bool]]:
        try:
            ir = self.by_id[req.sample_id]
        except KeyError:
            raise SampleUnknown(req.sample_id) from None
        return [(ir, 0.0, False)] * req.n_candidates


class ReplayBackend:
    """Answers with previously stored outputs keyed by (sample_id, candidate_index)."""

    name = "replay"

    def __init__(self, rows: Iterable[dict]):
        self.table: dict[str, dict[int, str]] = {}
        for row in rows:
            self.table.setdefault(row["sample_id"], {})[int(row["candidate_index"])] = row["raw_output"]

    @classmethod
    def from_path(cls, path: str | Path) -> "ReplayBackend":
        return cls(read_replay(path))

    def generate(self, req: TranslationRequest) -> list[tuple[str, float, bool]]:
        stored = self.table.get(req.sample_id)
        if stored is None:
            raise SampleUnknown(req.sample_id)
        missing = [i for i in range(req.n_candidates) if i not in stored]
        if missing:
            raise SampleUnknown(f"{req.sample_id}: no stored candidate(s) {missing}")
        return [(stored[i], 0.0, False) for i in range(req.n_candidates)]


class RemoteBackend:
    """Completions-style HTTP client with retries and exponential backoff."""

    name = "remote"

    def __init__(self, cfg: BackendConfig, prompt_template: str = PROMPT_TEMPLATE, sleep=time.sleep):
        self.cfg = cfg
        self.template = prompt_template
        self.sleep = sleep

    def _body(self, req: TranslationRequest, n: int) -> dict:
        prompt = render_prompt(req.gimple, self.template)
        body = {"model": self.cfg.model_name, "max_tokens": req.max_output_tokens, "temperature": req.temperature, "n": n}
        if self.cfg.chat:
            body["messages"] = [{"role": "user", "content": prompt}]
        else:
            body["prompt"] = prompt
        return body

    def _post(self, body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        data = json.dumps(body).encode("utf-8")
        delay = 1.0
        last: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            request = urllib.request.Request(self.cfg.endpoint_url, data=data, headers=headers, method="POST")
            try:
                with urllib.request.urlopen(request, timeout=self.cfg.request_timeout_s) as resp:
                    return json.loads(resp.read().decode("utf-8"))
            except urllib.error.HTTPError as exc:
                last = exc
                if exc.code < 500 and exc.code != 429:
                    break  # client errors do not improve with retries
            except (urllib.error.URLError, TimeoutError, OSError, json.JSONDecodeError) as exc:
                last = exc
            if attempt < self.cfg.max_retries:
                log.info("remote request failed (%s); retrying in %.1fs", last, delay)
                self.sleep(delay)
                delay *= 2
        raise BackendUnavailable(f"{self.cfg.endpoint_url}: {last}")

    def _choices(self, payload: dict) -> list[tuple[str, bool]]:
        out = []
        for ch in payload.get("choices", []):
            text = ch["message"]["content"] if "message" in ch else ch.get("text", "")
            out.append((text or "", ch.get("finish_reason") == "length"))
        return out

    def generate(self, req: TranslationRequest) -> list[tuple[str, float, bool]]:
        got: list[tuple[str, float, bool]] = []
        while len(got) < req.n_candidates:
            n = req.n_candidates - len(got) if self.cfg.batch_n else 1
            t0 = time.monotonic()
            choices = self._choices(self._post(self._body(req, n)))
            if not choices:
                raise BackendUnavailable("endpoint returned no choices")
            dt = time.monotonic() - t0
            # finished candidates are kept; only the missing ones are asked for again
            for text, trunc in choices[: req.n_candidates - len(got)]:
                got.append((text, dt, trunc))
        return got


def make_backend(cfg: BackendConfig) -> Backend:
    if cfg.kind == "oracle":
        return OracleBackend.from_path(cfg.corpus_path)
    if cfg.kind == "replay":
        return ReplayBackend.from_path(cfg.corpus_path)
    return RemoteBackend(cfg)


def translate(req: TranslationRequest, backend: Backend) -> TranslationResult:
    outs = backend.generate(req)
    raws = tuple(o[0] for o in outs)
    truncated = tuple(o[2] for o in outs)
    for i, t in enumerate(truncated):
        if t:
            log.warning("%s candidate %d hit the output budget (%d tokens)", req.sample_id, i, req.max_output_tokens)
    return TranslationResult(
        sample_id=req.sample_id,
        candidates=raws,
        extracted=tuple(extract_ir(r) for r in raws),
        backend_name=backend.name,
        latency_s=tuple(o[1] for o in outs),
        truncated=truncated,
        decoding={"n": req.n_candidates, "temperature": req.temperature, "max_tokens": req.max_output_tokens},
    )


# -- replay files -------------------------------------------------------------------------

def write_replay(results: Iterable[TranslationResult], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for res in results:
            for row in res.replay_rows():
                fh.write(json.dumps(row, sort_keys=True, ensure_ascii=True) + "\n")
                count += 1
    return count


def read_replay(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                row["sample_id"], int(row["candidate_index"]), row["raw_output"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedLine(n, str(exc)) from None
            rows.append(row)
    return rows


# -- end to end --------------------------------------------------------------------------------

TRIVIAL_DRIVER = "int main(void) { return 0; }\n"
_DEFINES_MAIN = re.compile(r"^define\b[^\n]*@main\s*\(", re.M)


@dataclass
class EndToEndResult:
    executable: Path
    trace: list[dict]


def run_end_to_end(
    source: str,
    backend: Backend,
    cfg: ToolchainConfig,
    wrapper_cpp: str | None = None,
    n_candidates: int = 3,
    origin: str = "local",
    workdir: str | Path | None = None,
) -> EndToEndResult:
    """Source to GIMPLE to candidate IR to executable; the first candidate that assembles wins."""
    wd = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="iris-e2e-"))
    wd.mkdir(parents=True, exist_ok=True)
    trace: list[dict] = []

    try:
        gimple = dump_gimple(source, cfg)
    except (ToolFailure, DumpMissing, ToolTimeout) as exc:
        trace.append({"stage": "gimple", "ok": False, "diagnostics": str(exc)})
        raise PipelineError("gimple", str(exc)) from exc
    (wd / "input.gimple").write_text(gimple, encoding="utf-8")
    trace.append({"stage": "gimple", "ok": True, "artifact": str(wd / "input.gimple")})

    req = TranslationRequest(content_id(origin, source), gimple, n_candidates)
    try:
        result = translate(req, backend)
    except (BackendUnavailable, SampleUnknown) as exc:
        trace.append({"stage": "translate", "ok": False, "diagnostics": str(exc)})
        raise PipelineError("translate", str(exc)) from exc
    trace.append({"stage": "translate", "ok": True, "backend": result.backend_name, "candidates": len(result.extracted)})

    obj = None
    chosen = None
    diags = []
    for i, ir in enumerate(result.extracted):
        cand_dir = wd / f"candidate{i}"
        try:
            obj = compile_ir_to_object(ir, cfg, cand_dir)
        except (IrRejected, ToolTimeout) as exc:
            diags.append(f"candidate {i}: {exc}")
            continue
        chosen = i
        break
    if obj is None:
        trace.append({"stage": "llc", "ok": False, "diagnostics": "\n".join(diags)})
        raise PipelineError("llc", "\n".join(diags) or "no candidates")
    ir = result.extracted[chosen]
    trace.append({"stage": "llc", "ok": True, "candidate": chosen, "artifact": str(obj)})

    try:
        if wrapper_cpp is not None:
            exe = link_with_wrapper(obj, declaration_block(source, cfg) + wrapper_cpp, cfg, wd)
        elif _DEFINES_MAIN.search(ir):
            exe = link_executable([obj], cfg, wd)
        else:
            (wd / "driver.c").write_text(TRIVIAL_DRIVER, encoding="utf-8")
            out = run_tool([cfg.clang_path, "-c", "driver.c", "-o", "driver.o"], wd, cfg.timeout_s, expect=["driver.o"])
            if not out.success:
                raise LinkFailure("clang", out.exit_code, out.stderr)
            exe = link_executable([obj, wd / "driver.o"], cfg, wd)
    except (LinkFailure, ToolFailure, ToolTimeout) as exc:
        trace.append({"stage": "link", "ok": False, "diagnostics": str(exc)})
        raise PipelineError("link", str(exc)) from exc
    trace.append({"stage": "link", "ok": True, "artifact": str(exe)})
    return EndToEndResult(exe, trace)

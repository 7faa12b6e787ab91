"""Compile-and-run scoring of candidate LLVM IR.

A candidate is *compiled* when the IR assembles into an object, *linked* when
that object links into a program (with the sample's C++ wrapper, or on its own
for whole programs), and *io_passed* when the program reproduces every
expected stdout within the time limit.
"""

from __future__ import annotations

import logging
import re
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .dataset import IoTest, SampleRecord
from .errors import DomainError, EmptyInput, IrRejected, LinkFailure, ToolTimeout
from .toolchain import (
    ToolchainConfig,
    compile_ir_to_object,
    extract_declarations,
    link_executable,
    link_with_wrapper,
)

log = logging.getLogger(__name__)

MODES = ("wrapper", "whole_program")
_DEFINES_MAIN = re.compile(r"^define\b[^\n]*@main\s*\(", re.M)


@dataclass(frozen=True)
class EvalTask:
    sample: SampleRecord
    mode: str = "whole_program"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "wrapper" and not self.sample.wrapper_cpp:
            raise ValueError("wrapper mode needs sample.wrapper_cpp")

    @classmethod
    def for_sample(cls, sample: SampleRecord) -> "EvalTask":
        return cls(sample, "wrapper" if sample.wrapper_cpp else "whole_program")


@dataclass(frozen=True)
class TestOutcome:
    passed: bool
    wall_s: float
    exit_code: int | None  # None when killed on timeout


@dataclass(frozen=True)
class CandidateResult:
    sample_id: str
    candidate_index: int
    compiled: bool
    linked: bool
    io_passed: bool
    per_test: tuple[TestOutcome, ...] = ()
    diagnostics: str = ""

    @property
    def failing_tests(self) -> list[int]:
        return [i for i, t in enumerate(self.per_test) if not t.passed]

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "candidate_index": self.candidate_index,
            "compiled": self.compiled,
            "linked": self.linked,
            "io_passed": self.io_passed,
            "per_test": [{"passed": t.passed, "wall_s": t.wall_s, "exit_code": t.exit_code} for t in self.per_test],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateResult":
        tests = tuple(TestOutcome(t["passed"], t["wall_s"], t["exit_code"]) for t in d.get("per_test", ()))
        return cls(d["sample_id"], d["candidate_index"], d["compiled"], d["linked"], d["io_passed"], tests, d.get("diagnostics", ""))


class SampleCounts(NamedTuple):
    sample_id: str
    n: int
    c_compile: int
    c_link: int
    c_io: int


@dataclass(frozen=True)
class EvalReport:
    n_samples: int
    n_per_sample: int | None  # None when samples have differing candidate counts
    compile_rate_pct: float
    link_rate_pct: float
    io_rate_pct: float
    pass_at: dict[int, float]
    per_sample: tuple[SampleCounts, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_per_sample": self.n_per_sample,
            "compile_rate_pct": self.compile_rate_pct,
            "link_rate_pct": self.link_rate_pct,
            "io_rate_pct": self.io_rate_pct,
            "pass_at": {str(k): v for k, v in sorted(self.pass_at.items())},
            "per_sample": [s._asdict() for s in self.per_sample],
        }

    def format_table(self) -> str:
        rows = [
            ("samples", f"{self.n_samples}"),
            ("candidates per sample", "mixed" if self.n_per_sample is None else f"{self.n_per_sample}"),
            ("compile (%)", f"{self.compile_rate_pct:.2f}"),
            ("link (%)", f"{self.link_rate_pct:.2f}"),
            ("I/O test (%)", f"{self.io_rate_pct:.2f}"),
        ]
        rows += [(f"pass@{k}", f"{v:.4f}") for k, v in sorted(self.pass_at.items())]
        width = max(len(a) for a, _ in rows)
        return "\n".join(f"{a:<{width}}  {b}" for a, b in rows)


# -- wrapper and stdout handling -----------------------------------------------------

def declaration_block(c_source: str, cfg: ToolchainConfig) -> str:
    """``extern "C" { ... }`` declaring every function and global of ``c_source`` except main."""
    decls = [d for d in extract_declarations(c_source, cfg) if not _declares_main(d)]
    return 'extern "C" {\n' + "".join(f"{d}\n" for d in decls) + "}\n"


def build_wrapper(task: EvalTask, cfg: ToolchainConfig) -> str:
    """Prepend the sample's declaration block to its wrapper."""
    if task.mode != "wrapper":
        raise ValueError("build_wrapper needs a wrapper-mode task")
    return declaration_block(task.sample.c_source, cfg) + task.sample.wrapper_cpp


def _declares_main(decl: str) -> bool:
    return re.search(r"\bmain\s*\(", decl) is not None


def normalize_stdout(data: bytes) -> bytes:
    lines = data.replace(b"\r\n", b"\n").split(b"\n")
    lines = [ln.rstrip() for ln in lines]
    while lines and not lines[-1]:
        lines.pop()
    return b"\n".join(lines)


def outputs_match(actual: bytes, expected: bytes) -> bool:
    return normalize_stdout(actual) == normalize_stdout(expected)


def run_test(program: Path, test: IoTest) -> tuple[TestOutcome, bytes]:
    t0 = time.monotonic()
    try:
        proc = subprocess.run(
            [str(program)],
            input=test.stdin,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            timeout=test.timeout_s,
            cwd=program.parent,
        )
    except subprocess.TimeoutExpired:
        return TestOutcome(False, time.monotonic() - t0, None), b""
    wall = time.monotonic() - t0
    ok = proc.returncode == 0 and outputs_match(proc.stdout, test.expected_stdout)
    return TestOutcome(ok, wall, proc.returncode), proc.stdout


# -- evaluation ---------------------------------------------------------------------------

def evaluate_candidate(ir: str, task: EvalTask, cfg: ToolchainConfig, candidate_index: int = 0) -> CandidateResult:
    """Score one candidate. Every failure is reported in the result, never raised."""
    sid = task.sample.id
    with tempfile.TemporaryDirectory(prefix="iris-eval-") as tmp:
        wd = Path(tmp)
        try:
            obj = compile_ir_to_object(ir, cfg, wd)
        except (IrRejected, ToolTimeout) as exc:
            return CandidateResult(sid, candidate_index, False, False, False, (), f"[llc] {exc}")
        try:
            if task.mode == "wrapper":
                prog = link_with_wrapper(obj, build_wrapper(task, cfg), cfg, wd)
            else:
                if not _DEFINES_MAIN.search(ir):
                    return CandidateResult(sid, candidate_index, True, False, False, (), "[link] candidate defines no @main")
                prog = link_executable([obj], cfg, wd)
        except (LinkFailure, ToolTimeout) as exc:
            return CandidateResult(sid, candidate_index, True, False, False, (), f"[link] {exc}")
        except Exception as exc:  # e.g. declaration extraction on odd sources
            return CandidateResult(sid, candidate_index, True, False, False, (), f"[wrapper] {exc}")
        outcomes = []
        notes = []
        for i, test in enumerate(task.sample.io_tests):
            outcome, _ = run_test(prog, test)
            outcomes.append(outcome)
            if not outcome.passed:
                why = "timeout" if outcome.exit_code is None else f"exit {outcome.exit_code}" if outcome.exit_code else "stdout mismatch"
                notes.append(f"[io] test {i}: {why}")
        passed = all(o.passed for o in outcomes)
        return CandidateResult(sid, candidate_index, True, True, passed, tuple(outcomes), "\n".join(notes))


def validate_ground_truth(task: EvalTask, cfg: ToolchainConfig) -> bool:
    result = evaluate_candidate(task.sample.llvm_ir, task, cfg)
    if not result.io_passed:
        log.info("ground truth of %s rejected: %s", task.sample.id, result.diagnostics)
    return result.io_passed


# -- scoring ---------------------------------------------------------------------------------

def pass_at_k_exact(n: int, c: int, k: int) -> Fraction:
    if not (isinstance(n, int) and isinstance(c, int) and isinstance(k, int)):
        raise DomainError("n, c and k must be integers")
    if not 0 <= c <= n:
        raise DomainError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not 1 <= k <= n:
        raise DomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    return 1 - Fraction(comb(n - c, k), comb(n, k))


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k: ``1 - C(n-c, k) / C(n, k)``, evaluated exactly."""
    return float(pass_at_k_exact(n, c, k))


def sample_counts(results: Iterable[CandidateResult]) -> list[SampleCounts]:
    order: dict[str, list[CandidateResult]] = {}
    for r in results:
        order.setdefault(r.sample_id, []).append(r)
    return [
        SampleCounts(
            sid,
            len(rs),
            sum(r.compiled for r in rs),
            sum(r.linked for r in rs),
            sum(r.io_passed for r in rs),
        )
        for sid, rs in order.items()
    ]


def aggregate_counts(counts: Sequence[SampleCounts], k_values: Iterable[int] = (1,)) -> EvalReport:
    if not counts:
        raise EmptyInput("no results to aggregate")
    ns = {s.n for s in counts}

    def mean_pass(attr: str, k: int) -> Fraction:
        vals = [pass_at_k_exact(s.n, getattr(s, attr), k) for s in counts]
        return sum(vals, Fraction(0)) / len(vals)

    pass_at = {}
    for k in sorted(set(k_values)):
        eligible = [s for s in counts if s.n >= k]
        if not eligible:
            continue
        vals = [pass_at_k_exact(s.n, s.c_io, k) for s in eligible]
        pass_at[k] = float(sum(vals, Fraction(0)) / len(vals))
    return EvalReport(
        n_samples=len(counts),
        n_per_sample=ns.pop() if len(ns) == 1 else None,
        compile_rate_pct=float(mean_pass("c_compile", 1) * 100),
        link_rate_pct=float(mean_pass("c_link", 1) * 100),
        io_rate_pct=float(mean_pass("c_io", 1) * 100),
        pass_at=pass_at,
        per_sample=tuple(counts),
    )


def aggregate(results: Iterable[CandidateResult], k_values: Iterable[int] = (1,)) -> EvalReport:
    """Per-sample pass@k averaged over samples; rates are pass@1 in percent."""
    return aggregate_counts(sample_counts(results), k_values)

"""Static and dynamic code metrics for C programs.

Static counters are lexical. The rules, which the tests pin down exactly:

* ``conditionals``: ``if`` and ``switch`` statements. ``loops``: ``for``,
  ``while`` and ``do`` statements (the ``while`` closing a ``do`` is not a
  second loop).
* ``nesting_depth``: deepest chain of control statements inside one another;
  an ``else if`` continues its chain instead of nesting.
* ``memory_ops``: calls to malloc/calloc/realloc/free/memset/memcpy/memmove.
* ``lines_of_code``: physical lines of the source, blank ones included.
* Declarations (file scope, block scope, ``for`` headers and function
  parameters; never struct members) feed ``arrays_instantiated`` and the two
  pointer counters. An array of pointers counts as an array; function
  pointers count as typed pointers.
* ``array_reads``/``array_writes``: each subscript chain ``x[i][j].f`` counts
  once, as a write when it is the left operand of an assignment operator
  (``=``, ``+=``, ...) and as a read otherwise (``x[i]++`` is a read).
* ``pointer_calls``: calls made through a pointer (pointer variable, member,
  or ``(*fp)(...)``) or passing an argument that is ``&expr`` or a bare
  pointer/array identifier.
* ``pointer_arith_ops``: ``+ - += -= ++ --`` with a declared pointer
  identifier as a direct operand (not dereferenced, subscripted or accessed
  through ``->``).
* ``struct_usages``: occurrences of the ``struct`` keyword.
"""

from __future__ import annotations

import logging
import math
import os
import statistics
import subprocess
import threading
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import cscan
from .clex import KEYWORDS, match_backward, match_forward
from .errors import NonzeroExit, ToolTimeout, UnbalancedBraces, UnknownSchema

log = logging.getLogger(__name__)

MEMORY_FUNCTIONS = frozenset("malloc calloc realloc free memset memcpy memmove".split())
ASSIGNMENT_OPS = frozenset("= += -= *= /= %= &= |= ^= <<= >>=".split())


@dataclass(frozen=True)
class StaticMetrics:
    global_mutable_vars: int = 0
    global_const_vars: int = 0
    conditionals: int = 0
    loops: int = 0
    memory_ops: int = 0
    lines_of_code: int = 0
    nesting_depth: int = 0
    arrays_instantiated: int = 0
    array_reads: int = 0
    array_writes: int = 0
    typed_pointers_instantiated: int = 0
    void_pointers_instantiated: int = 0
    pointer_calls: int = 0
    pointer_arith_ops: int = 0
    struct_usages: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StaticMetrics":
        return cls(**{f.name: int(d[f.name]) for f in fields(cls) if f.name in d})


@dataclass(frozen=True)
class DynamicMetrics:
    wall_clock_s: float = 0.0
    peak_mem_bytes: int = 0
    cpu_util_pct: float = 0.0
    exec_size_bytes: int = 0
    degraded: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DynamicMetrics":
        return cls(**{f.name: d[f.name] for f in fields(cls) if f.name in d})


# Flags use the fine-grained counters; size-like magnitudes are not features.
FLAG_FEATURES = (
    "struct_usages",
    "memory_ops",
    "array_writes",
    "typed_pointers_instantiated",
    "pointer_arith_ops",
    "pointer_calls",
    "array_reads",
    "global_mutable_vars",
    "void_pointers_instantiated",
    "global_const_vars",
    "arrays_instantiated",
    "conditionals",
    "loops",
)


# -- static analysis ------------------------------------------------------------

class _Analyzer:
    def __init__(self, source: str):
        self.src = source
        self.sc = cscan.scanner(source)
        self.tu = self.sc.scan()
        self.toks = self.sc.toks
        self.excluded: set[int] = set()
        self.pointer_names: set[str] = set()
        self.array_names: set[str] = set()
        self.c = dict.fromkeys((f.name for f in fields(StaticMetrics)), 0)

    # declarations ----------------------------------------------------------

    def _exclude(self, lo: int, hi: int) -> None:
        self.excluded.update(range(lo, hi))

    def declare(self, decl: cscan.Declaration) -> None:
        self._exclude(decl.lo, decl.spec_hi)
        for a, b in decl.struct_bodies:
            self._exclude(a, b + 1)
        if decl.is_typedef:
            self._exclude(decl.lo, decl.hi + 1)
            return
        for d in decl.declarators:
            self._exclude(d.lo, d.hi)
            if d.name is None or d.is_function:
                continue
            if d.is_array:
                self.c["arrays_instantiated"] += 1
                self.array_names.add(d.name)
            elif d.is_pointer:
                if decl.base_void and not d.grouped_pointer and not decl.typedef_pointer:
                    self.c["void_pointers_instantiated"] += 1
                else:
                    self.c["typed_pointers_instantiated"] += 1
                self.pointer_names.add(d.name)
            elif decl.typedef_pointer:
                self.c["typed_pointers_instantiated"] += 1
                self.pointer_names.add(d.name)

    def _find_semicolon(self, i: int, stop: int) -> int:
        while i < stop:
            t = self.toks[i]
            if t.kind == "punct":
                if t.text in ("(", "[", "{"):
                    i = self.sc.fwd(i) + 1
                    continue
                if t.text == ";":
                    return i
                if t.text == "}":
                    return i
            i += 1
        return stop

    # statements ------------------------------------------------------------

    def _control(self, depth: int) -> int:
        level = depth + 1
        if level > self.c["nesting_depth"]:
            self.c["nesting_depth"] = level
        return level

    def _skip_parens(self, i: int) -> int:
        if self.sc.punct(i, "("):
            return self.sc.fwd(i) + 1
        return i

    def block(self, open_i: int, depth: int) -> int:
        close = self.sc.fwd(open_i)
        i = open_i + 1
        while i < close:
            nxt = self.stmt(i, depth, close)
            i = max(nxt, i + 1)
        return close + 1

    def _if(self, i: int, depth: int, stop: int) -> int:
        self.c["conditionals"] += 1
        level = self._control(depth)
        i = self._skip_parens(i + 1)
        i = self.stmt(i, level, stop)
        if self.sc.ident(i) and self.sc.text(i) == "else":
            if self.sc.text(i + 1) == "if":
                return self._if(i + 1, depth, stop)
            return self.stmt(i + 1, level, stop)
        return i

    def stmt(self, i: int, depth: int, stop: int) -> int:
        sc = self.sc
        if i >= stop:
            return stop
        t = self.toks[i]
        if t.kind == "punct":
            if t.text == "{":
                return self.block(i, depth)
            if t.text == ";":
                return i + 1
        if t.kind == "ident":
            w = t.text
            if w == "if":
                return self._if(i, depth, stop)
            if w == "switch":
                self.c["conditionals"] += 1
                level = self._control(depth)
                return self.stmt(self._skip_parens(i + 1), level, stop)
            if w == "while":
                self.c["loops"] += 1
                level = self._control(depth)
                return self.stmt(self._skip_parens(i + 1), level, stop)
            if w == "for":
                self.c["loops"] += 1
                level = self._control(depth)
                if sc.punct(i + 1, "("):
                    close = sc.fwd(i + 1)
                    init = i + 2
                    if sc.looks_like_declaration(init):
                        semi = self._find_semicolon(init, close)
                        self.declare(sc.parse_declaration(init, semi))
                    return self.stmt(close + 1, level, stop)
                return self.stmt(i + 1, level, stop)
            if w == "do":
                self.c["loops"] += 1
                level = self._control(depth)
                j = self.stmt(i + 1, level, stop)
                if sc.text(j) == "while":
                    j = self._skip_parens(j + 1)
                    if sc.punct(j, ";"):
                        j += 1
                return j
            if w == "case":
                j = i + 1
                while j < stop and not sc.punct(j, ":"):
                    if sc.punct(j, "(", "["):
                        j = sc.fwd(j)
                    j += 1
                return j + 1
            if w == "default" and sc.punct(i + 1, ":"):
                return i + 2
            if w == "else":
                return i + 1
            if w not in KEYWORDS and sc.punct(i + 1, ":"):
                return i + 2
            if sc.looks_like_declaration(i):
                return self._local_declaration(i, depth, stop)
        return self._find_semicolon(i, stop) + 1

    def _local_declaration(self, i: int, depth: int, stop: int) -> int:
        sc = self.sc
        j = i
        while j < stop:
            if sc.punct(j, "(", "["):
                k = sc.fwd(j)
                if sc.punct(j, "(") and sc.punct(k + 1, "{"):
                    # GNU nested function definition
                    self._exclude(i, k + 1)
                    return self.block(k + 1, depth)
                j = k + 1
                continue
            if sc.punct(j, "{"):
                j = sc.fwd(j) + 1
                continue
            if sc.punct(j, ";"):
                break
            j += 1
        self.declare(sc.parse_declaration(i, j))
        return j + 1

    # expressions -------------------------------------------------------------

    def _is_cast(self, open_i: int, close_i: int) -> bool:
        inner = self.toks[open_i + 1 : close_i]
        if not inner:
            return False
        first = inner[0]
        if first.kind != "ident":
            return False
        if not (first.text in cscan.DECL_START or self.sc.is_type_name(open_i + 1)):
            return False
        return all(t.kind == "ident" or t.text == "*" for t in inner)

    def _bare_pointer_left(self, k: int) -> bool:
        """Is token ``k`` a pointer identifier standing alone as a left operand?"""
        sc = self.sc
        if not (sc.ident(k) and sc.text(k) in self.pointer_names):
            return False
        if sc.punct(k - 1, ".", "->"):
            return False
        j = k - 1
        while sc.punct(j, ")"):
            o = match_backward(self.toks, j)
            if not self._is_cast(o, j):
                break
            j = o - 1
        if sc.punct(j, "*") and not cscan.is_operand_end(self.toks[j - 1] if j > 0 else None):
            return False
        return True

    def _bare_pointer_right(self, k: int) -> bool:
        sc = self.sc
        if not (sc.ident(k) and sc.text(k) in self.pointer_names):
            return False
        return not sc.punct(k + 1, "[", "->", ".", "(")

    def _pointerish_arg(self, lo: int, hi: int) -> bool:
        if lo >= hi:
            return False
        if self.sc.punct(lo, "&"):
            return True
        if hi - lo == 1 and self.sc.ident(lo):
            name = self.sc.text(lo)
            return name in self.pointer_names or name in self.array_names
        return False

    def _call(self, open_i: int, through_pointer: bool) -> None:
        close = self.sc.fwd(open_i)
        pointerish = through_pointer
        if not pointerish and close > open_i + 1:
            for a, b in self.sc.split_top(open_i + 1, close, ","):
                if self._pointerish_arg(a, b):
                    pointerish = True
                    break
        if pointerish:
            self.c["pointer_calls"] += 1

    def expressions(self) -> None:
        sc = self.sc
        toks = self.toks
        chained: set[int] = set()
        for i, t in enumerate(toks):
            if t.kind == "ident" and t.text == "struct":
                self.c["struct_usages"] += 1
            if i in self.excluded:
                continue
            prev = toks[i - 1] if i > 0 else None
            if t.kind == "punct" and t.text == "[" and i not in chained:
                if prev is None or not (
                    (prev.kind == "ident" and prev.text not in KEYWORDS) or prev.text == ")"
                ):
                    continue
                j = match_forward(toks, i)
                while True:
                    if sc.punct(j + 1, "["):
                        chained.add(j + 1)
                        j = match_forward(toks, j + 1)
                    elif sc.punct(j + 1, ".", "->") and sc.ident(j + 2):
                        j += 2
                        if sc.punct(j + 1, "["):
                            chained.add(j + 1)
                    else:
                        break
                nxt = toks[j + 1] if j + 1 < len(toks) else None
                if nxt is not None and nxt.kind == "punct" and nxt.text in ASSIGNMENT_OPS:
                    self.c["array_writes"] += 1
                else:
                    self.c["array_reads"] += 1
            elif t.kind == "ident" and t.text not in KEYWORDS and sc.punct(i + 1, "("):
                if t.text in MEMORY_FUNCTIONS:
                    self.c["memory_ops"] += 1
                through = t.text in self.pointer_names or sc.punct(i - 1, ".", "->")
                self._call(i + 1, through)
            elif t.kind == "punct" and t.text == ")" and sc.punct(i + 1, "("):
                o = match_backward(toks, i)
                if sc.punct(o + 1, "*") and not self._is_cast(o, i):
                    self._call(i + 1, True)
            elif t.kind == "punct" and t.text in ("+", "-"):
                if cscan.is_operand_end(prev) and (
                    self._bare_pointer_left(i - 1) or self._bare_pointer_right(i + 1)
                ):
                    self.c["pointer_arith_ops"] += 1
            elif t.kind == "punct" and t.text in ("+=", "-="):
                if self._bare_pointer_left(i - 1):
                    self.c["pointer_arith_ops"] += 1
            elif t.kind == "punct" and t.text in ("++", "--"):
                if cscan.is_operand_end(prev):
                    if sc.ident(i - 1) and sc.text(i - 1) in self.pointer_names and not sc.punct(i - 2, ".", "->"):
                        self.c["pointer_arith_ops"] += 1
                elif self._bare_pointer_right(i + 1):
                    self.c["pointer_arith_ops"] += 1

    # driver -----------------------------------------------------------------

    def run(self) -> StaticMetrics:
        for decl in self.tu.declarations:
            self.declare(decl)
            if decl.is_typedef:
                continue
            is_extern = "extern" in decl.storage
            for d in decl.declarators:
                if d.name is None or d.is_function:
                    continue
                if is_extern and d.init_lo is None:
                    continue
                const = d.pointer_const if d.stars and not d.is_array or d.grouped_pointer else decl.base_const
                if d.is_array and d.stars:
                    const = d.pointer_const
                key = "global_const_vars" if const else "global_mutable_vars"
                self.c[key] += 1
        for fn in self.tu.functions:
            self._exclude(fn.lo, fn.params_close + 1)
            for p in fn.params:
                self.declare(p)
            self.block(fn.body_open, 0)
        self.expressions()
        self.c["lines_of_code"] = count_lines(self.src)
        return StaticMetrics(**self.c)


def count_lines(source: str) -> int:
    if not source:
        return 0
    return source.count("\n") + (0 if source.endswith("\n") else 1)


def analyze_c(source: str) -> StaticMetrics:
    """Count the static features of one C translation unit."""
    try:
        return _Analyzer(source).run()
    except ValueError as exc:  # bracket matching inside expressions
        raise UnbalancedBraces(-1, str(exc)) from exc


# -- dynamic measurement -----------------------------------------------------------

def measure_dynamic(executable: str | Path, stdin: bytes = b"", timeout: float = 15.0) -> DynamicMetrics:
    """Run ``executable`` once, recording wall time, peak RSS and CPU use.

    Resource figures come from ``wait4`` on the child. Raises ToolTimeout when
    the run exceeds ``timeout`` and NonzeroExit (carrying the metrics) when it
    exits unsuccessfully.
    """
    exe = Path(executable)
    size = exe.stat().st_size
    t0 = time.monotonic()
    proc = subprocess.Popen(
        [str(exe)],
        stdin=subprocess.PIPE,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    result: dict = {}

    def reap():
        _, status, usage = os.wait4(proc.pid, 0)
        result["status"] = status
        result["usage"] = usage
        result["t1"] = time.monotonic()

    waiter = threading.Thread(target=reap, daemon=True)
    waiter.start()
    try:
        if stdin:
            proc.stdin.write(stdin)
    except BrokenPipeError:
        pass
    finally:
        try:
            proc.stdin.close()
        except BrokenPipeError:
            pass
    waiter.join(timeout)
    if waiter.is_alive():
        proc.kill()
        waiter.join()
        proc.returncode = -9
        raise ToolTimeout(exe.name, timeout)
    code = os.waitstatus_to_exitcode(result["status"])
    proc.returncode = code
    usage = result["usage"]
    wall = result["t1"] - t0
    cpu = usage.ru_utime + usage.ru_stime
    peak = int(usage.ru_maxrss) * 1024  # kilobytes on Linux
    metrics = DynamicMetrics(
        wall_clock_s=wall,
        peak_mem_bytes=peak,
        cpu_util_pct=100.0 * cpu / wall if wall > 0 else 0.0,
        exec_size_bytes=size,
        degraded=peak == 0,
    )
    if code != 0:
        raise NonzeroExit(code, metrics)
    return metrics


def measure_repeated(executable: str | Path, stdin: bytes = b"", timeout: float = 15.0, runs: int = 3) -> DynamicMetrics:
    """Median wall clock and mean of the other figures over ``runs`` executions."""
    samples = []
    for _ in range(runs):
        try:
            samples.append(measure_dynamic(executable, stdin, timeout))
        except NonzeroExit as exc:
            samples.append(exc.metrics)
    return DynamicMetrics(
        wall_clock_s=statistics.median(s.wall_clock_s for s in samples),
        peak_mem_bytes=int(round(statistics.fmean(s.peak_mem_bytes for s in samples))),
        cpu_util_pct=statistics.fmean(s.cpu_util_pct for s in samples),
        exec_size_bytes=samples[0].exec_size_bytes,
        degraded=any(s.degraded for s in samples),
    )


# -- feature vectors ------------------------------------------------------------------

def _static13(s: StaticMetrics) -> list[float]:
    return [
        s.global_mutable_vars,
        s.global_const_vars,
        s.conditionals,
        s.loops,
        s.memory_ops,
        s.lines_of_code,
        s.nesting_depth,
        s.arrays_instantiated,
        s.array_reads,
        s.array_writes,
        s.typed_pointers_instantiated + s.void_pointers_instantiated,
        s.pointer_calls + s.pointer_arith_ops,
        s.struct_usages,
    ]


def _dyn4(d: DynamicMetrics | None) -> list[float]:
    d = d or DynamicMetrics()
    return [d.wall_clock_s, d.peak_mem_bytes, d.cpu_util_pct, d.exec_size_bytes]


SCHEMAS = {
    "static13": (13, lambda s, d: _static13(s)),
    "static13+dyn4": (17, lambda s, d: _static13(s) + _dyn4(d)),
    "static15": (15, lambda s, d: [getattr(s, f.name) for f in fields(StaticMetrics)]),
}


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    schema_id: str
    normalization: tuple[tuple[float, float], ...] | None = None

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def denormalize(self) -> "FeatureVector":
        if self.normalization is None:
            return self
        raw = tuple(v * sd + mu if sd > 0 else mu for v, (mu, sd) in zip(self.values, self.normalization))
        return FeatureVector(raw, self.schema_id, None)


def feature_vector(s: StaticMetrics, d: DynamicMetrics | None = None, schema_id: str = "static13+dyn4") -> FeatureVector:
    try:
        dim, build = SCHEMAS[schema_id]
    except KeyError:
        raise UnknownSchema(f"unknown feature schema {schema_id!r}") from None
    values = tuple(float(v) for v in build(s, d))
    assert len(values) == dim
    if not all(math.isfinite(v) for v in values):
        raise ValueError("non-finite metric value")
    return FeatureVector(values, schema_id)


def feature_flags(s: StaticMetrics) -> dict[str, bool]:
    """Presence flag per feature: counter > 0."""
    return {name: getattr(s, name) > 0 for name in FLAG_FEATURES}

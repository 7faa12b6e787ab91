"""Function-level splitting of GIMPLE dumps, LLVM modules and C sources.

Everything here is line- and brace-level text processing. Bodies are kept as
verbatim slices of the input so that ``text[start:end] == body`` always holds.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .cscan import scan_unit
from .errors import DuplicateSymbol, EmptyDump, EmptyModule, UnbalancedBraces

log = logging.getLogger(__name__)

# GCC appends `.constprop.0`, `.isra.0`, `.part.1`, `.cold` ... to cloned bodies.
CLONE_SUFFIX = re.compile(r"^(?P<base>[A-Za-z_$][\w$]*)(?:\.[A-Za-z_]\w*(?:\.\d+)?)+$")
_GIMPLE_NAME = re.compile(r"([A-Za-z_$][\w$.]*)\s*\(")
_LLVM_DEFINE = re.compile(r"^define\b[^\n]*?@(\"(?:[^\"\\]|\\.)*\"|[-\w$.]+)\s*\(", re.M)


@dataclass(frozen=True)
class GimpleFunction:
    name: str
    header: str
    body: str
    byte_span: tuple[int, int]


@dataclass(frozen=True)
class LlvmFunction:
    symbol: str
    define_header: str
    body: str
    byte_span: tuple[int, int]


@dataclass(frozen=True)
class LlvmModulePrelude:
    header_text: str
    trailer_text: str
    # text between consecutive functions (attribute comments, interleaved `declare`s)
    interstitial: tuple[str, ...] = ()

    def declare_lines(self) -> list[str]:
        chunks = (self.header_text, *self.interstitial, self.trailer_text)
        return [ln for c in chunks for ln in c.splitlines() if ln.startswith("declare ")]


@dataclass(frozen=True)
class CFunction:
    name: str
    text: str
    byte_span: tuple[int, int]


@dataclass(frozen=True)
class FunctionTriplet:
    c_function: str
    gimple_function: GimpleFunction
    llvm_function: LlvmFunction
    origin: str


def _balanced_end(text: str, open_at: int) -> int:
    """Offset just past the brace matching ``text[open_at]``.

    GIMPLE and LLVM text carry string literals (`"%d\\n"`, `c"..\\00"`), so
    quoted runs are skipped while counting.
    """
    depth = 0
    i = open_at
    n = len(text)
    while i < n:
        c = text[i]
        if c == '"':
            j = i + 1
            while j < n and text[j] != '"' and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            i = j + 1
            continue
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    raise UnbalancedBraces(open_at, "no matching '}'")


def _line_start(text: str, pos: int) -> int:
    return text.rfind("\n", 0, pos) + 1


# -- GIMPLE -------------------------------------------------------------------

def _gimple_name(header: str) -> str | None:
    # the name is the identifier directly before the parameter list; strip
    # `__attribute__((...))` prefixes that newer GCCs print on their own line
    header = re.sub(r"__attribute__\s*\(\(.*?\)\)", " ", header)
    matches = _GIMPLE_NAME.findall(header)
    return matches[0] if matches else None


def parse_gimple_dump(dump: str) -> list[GimpleFunction]:
    """Split a ``-fdump-tree-gimple`` dump into its function bodies."""
    if not dump.strip():
        raise EmptyDump("GIMPLE dump is empty")
    out: list[GimpleFunction] = []
    pos = 0
    n = len(dump)
    while pos < n:
        nl = dump.find("\n", pos)
        line_end = n if nl < 0 else nl
        line = dump[pos:line_end]
        if line.startswith("}"):
            raise UnbalancedBraces(pos, "'}' outside any function")
        if line.startswith("{"):
            # header: nearest preceding non-blank line that is not a `;;` comment
            scan = pos - 1
            header = ""
            hdr_start = pos
            while scan > 0:
                ls = _line_start(dump, scan)
                cand = dump[ls:scan].strip()
                if cand and not cand.startswith(";;"):
                    header = cand
                    hdr_start = ls
                    break
                scan = ls - 1
            end = _balanced_end(dump, pos)
            name = _gimple_name(header)
            if name is None:
                raise UnbalancedBraces(pos, "function body without a header line")
            out.append(GimpleFunction(name, header, dump[hdr_start:end], (hdr_start, end)))
            pos = end
            continue
        pos = line_end + 1
    return out


# -- LLVM ---------------------------------------------------------------------

def _llvm_symbol(raw: str) -> str:
    if raw.startswith('"'):
        return raw[1:-1]
    return raw


def parse_llvm_module(module: str) -> tuple[LlvmModulePrelude, list[LlvmFunction]]:
    """Split textual LLVM IR into prelude, ``define`` bodies, and trailer."""
    if not module.strip():
        raise EmptyModule("LLVM module is empty")
    fns: list[LlvmFunction] = []
    gaps: list[str] = []
    first_start = None
    last_end = 0
    pos = 0
    for m in _LLVM_DEFINE.finditer(module):
        if m.start() < pos:
            continue
        start = m.start()
        brace = module.find("{", m.end())
        if brace < 0:
            raise UnbalancedBraces(start, "define without body")
        # the brace must sit on the define line (after the signature)
        end = _balanced_end(module, _find_body_brace(module, m.end() - 1))
        # a function ends with a `}` at column 0
        if module[_line_start(module, end - 1) : end - 1].strip():
            raise UnbalancedBraces(end - 1, "closing brace not at line start")
        header_end = module.find("\n", start)
        header = module[start : header_end if header_end >= 0 else len(module)]
        fns.append(LlvmFunction(_llvm_symbol(m.group(1)), header, module[start:end], (start, end)))
        if first_start is None:
            first_start = start
        else:
            gaps.append(module[last_end:start])
        last_end = end
        pos = end
    if first_start is None:
        prelude = LlvmModulePrelude(module, "")
    else:
        prelude = LlvmModulePrelude(module[:first_start], module[last_end:], tuple(gaps))
    return prelude, fns


def _find_body_brace(module: str, paren_open: int) -> int:
    """Given the index of the parameter list's '(', return the body's '{'."""
    depth = 0
    i = paren_open
    n = len(module)
    while i < n:
        c = module[i]
        if c == '"':
            j = module.find('"', i + 1)
            i = n if j < 0 else j + 1
            continue
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        elif c == "{" and depth == 0:
            return i
        i += 1
    raise UnbalancedBraces(paren_open, "define without body")


def rebuild_module(prelude: LlvmModulePrelude, functions: list[LlvmFunction]) -> str:
    """Reassemble a module from its parsed pieces.

    With the original function list this reproduces the module exactly; with a
    subset, the between-function text is dropped and bodies are separated by a
    blank line.
    """
    if len(prelude.interstitial) == max(len(functions) - 1, 0):
        parts = [prelude.header_text]
        for i, f in enumerate(functions):
            if i:
                parts.append(prelude.interstitial[i - 1])
            parts.append(f.body)
        parts.append(prelude.trailer_text)
        return "".join(parts)
    header = prelude.header_text
    if functions and header and not header.endswith("\n"):
        header += "\n"
    return header + "\n\n".join(f.body for f in functions) + prelude.trailer_text


def collapse_blank_lines(text: str) -> str:
    return re.sub(r"\n(?:[ \t]*\n)+", "\n", text)


# -- C ------------------------------------------------------------------------

def scan_c_functions(c_source: str) -> tuple[list[CFunction], list[tuple[str | None, int]]]:
    """Return ANSI definitions plus ``(name, offset)`` of definitions left unparsed."""
    tu = scan_unit(c_source)
    fns = [CFunction(f.name, c_source[f.start : f.end], (f.start, f.end)) for f in tu.functions]
    for name, off in tu.unparsed:
        log.info("unparsed C definition %r at offset %d (K&R or unusual declarator)", name, off)
    return fns, list(tu.unparsed)


def extract_c_functions(c_source: str) -> list[tuple[str, str]]:
    fns, _ = scan_c_functions(c_source)
    return [(f.name, f.text) for f in fns]


# -- alignment ------------------------------------------------------------------

def normalize_symbol(name: str) -> str:
    return name[1:] if name.startswith("_") else name


def is_clone(name: str) -> bool:
    return CLONE_SUFFIX.match(name) is not None


def _index(names: list[str], side: str) -> dict[str, int]:
    seen: dict[str, int] = {}
    for i, raw in enumerate(names):
        key = normalize_symbol(raw)
        if key in seen:
            raise DuplicateSymbol(raw, side)
        seen[key] = i
    return seen


def align_functions(
    gimple_fns: list[GimpleFunction],
    llvm_fns: list[LlvmFunction],
    c_fns: list[tuple[str, str]],
    origin: str = "",
    report: list[dict] | None = None,
) -> list[FunctionTriplet]:
    """Pair functions that appear under the same C symbol in all three lists.

    Unmatched names and excluded compiler clones are appended to ``report``
    (when given) and logged; nothing is fabricated for them.
    """
    notes: list[dict] = []
    kept_gimple = []
    clones: dict[str, str] = {}
    for g in gimple_fns:
        m = CLONE_SUFFIX.match(g.name)
        if m:
            clones[normalize_symbol(m.group("base"))] = g.name
            log.info("alignment %s: excluding compiler clone %s", origin or "<unit>", g.name)
        else:
            kept_gimple.append(g)
    gi = _index([g.name for g in kept_gimple], "gimple")
    li = _index([f.symbol for f in llvm_fns], "llvm")
    ci = _index([name for name, _ in c_fns], "c")

    triplets = []
    for name, text in c_fns:
        key = normalize_symbol(name)
        missing = [side for side, idx in (("gimple", gi), ("llvm", li)) if key not in idx]
        if missing:
            reason = "missing"
            if "gimple" in missing and key in clones:
                reason = f"only compiler clone {clones[key]} present"
            notes.append({"name": name, "side": ",".join(missing), "reason": reason})
            continue
        triplets.append(
            FunctionTriplet(text, kept_gimple[gi[key]], llvm_fns[li[key]], origin)
        )
    for side, idx in (("gimple", gi), ("llvm", li)):
        for key in idx:
            if key not in ci:
                notes.append({"name": key, "side": side, "reason": "no C counterpart"})
    for note in notes:
        log.info("alignment %s: %s (%s)", origin or "<unit>", note["name"], note["reason"])
    if report is not None:
        report.extend(notes)
    return triplets

"""Subprocess wrappers around gcc, clang, llc, clang++ and ctags.

Every invocation runs in its own temporary directory with an explicit argument
vector (never a shell). Functions that hand back a file path take a
``workdir``; when it is omitted a fresh directory is created and ownership
passes to the caller.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import cscan
from .errors import (
    ConfigError,
    DumpMissing,
    IrRejected,
    LinkFailure,
    ToolFailure,
    ToolMissing,
    ToolTimeout,
)

log = logging.getLogger(__name__)

TOOLCHAIN_DIR_ENV = "IRIS_TOOLCHAIN_DIR"
TU_TOKEN = "<TU>"

# language -> (gcc driver, source suffix)
FRONTENDS = {
    "c": ("gcc", ".c"),
    "ada": ("gcc", ".adb"),
    "modula-2": ("gm2", ".mod"),
    "fortran": ("gfortran", ".f90"),
}

_LLC_NAMES = ("llc",) + tuple(f"llc-{v}" for v in range(22, 10, -1))


def _which(name: str) -> str | None:
    prefix = os.environ.get(TOOLCHAIN_DIR_ENV)
    if prefix:
        cand = Path(prefix) / name
        if cand.is_file() and os.access(cand, os.X_OK):
            return str(cand)
        cand = Path(prefix) / "bin" / name
        if cand.is_file() and os.access(cand, os.X_OK):
            return str(cand)
    return shutil.which(name)


@dataclass(frozen=True)
class ToolchainConfig:
    gcc_path: str
    clang_path: str
    clangxx_path: str
    # None selects the fallbacks: `clang -x ir -c` for llc, the built-in
    # declaration scanner for ctags
    llc_path: str | None = None
    ctags_path: str | None = None
    extra_gcc_flags: tuple[str, ...] = ()
    extra_clang_flags: tuple[str, ...] = ()
    frontend_language: str = "c"
    timeout_s: float = 60.0

    @classmethod
    def resolve(cls, **overrides) -> "ToolchainConfig":
        """Build a config from ``$IRIS_TOOLCHAIN_DIR`` / ``$PATH`` and validate it."""
        lang = overrides.get("frontend_language", "c")
        if lang not in FRONTENDS:
            raise ConfigError(f"unknown frontend language {lang!r}")
        driver = FRONTENDS[lang][0]
        found = {
            "gcc_path": _which(driver),
            "clang_path": _which("clang"),
            "clangxx_path": _which("clang++"),
            "llc_path": next(filter(None, map(_which, _LLC_NAMES)), None),
            "ctags_path": _which("ctags"),
        }
        values = {**found, **overrides}
        for key in ("gcc_path", "clang_path", "clangxx_path"):
            if values[key] is None:
                raise ToolMissing(f"cannot find {key[:-5]} (set ${TOOLCHAIN_DIR_ENV} or PATH)")
        for key in ("extra_gcc_flags", "extra_clang_flags"):
            if key in values:
                values[key] = tuple(values[key])
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.frontend_language not in FRONTENDS:
            raise ConfigError(f"unknown frontend language {self.frontend_language!r}")
        if self.timeout_s <= 0:
            raise ConfigError("timeout_s must be positive")
        for key in ("gcc_path", "clang_path", "clangxx_path", "llc_path", "ctags_path"):
            path = getattr(self, key)
            if path is None and key in ("llc_path", "ctags_path"):
                continue
            if path is None or not (os.path.isfile(path) and os.access(path, os.X_OK)):
                raise ToolMissing(f"{key}={path!r} is not an executable file")

    @property
    def source_suffix(self) -> str:
        return FRONTENDS[self.frontend_language][1]

    def with_(self, **changes) -> "ToolchainConfig":
        return replace(self, **changes)


@dataclass
class CompileOutcome:
    success: bool
    exit_code: int
    stdout: str
    stderr: str
    produced_artifacts: list[Path] = field(default_factory=list)
    wall_time_s: float = 0.0


def run_tool(
    argv: list[str],
    cwd: Path,
    timeout_s: float,
    expect: list[str] = (),
    stdin: bytes | None = None,
) -> CompileOutcome:
    """Run ``argv`` in ``cwd``; success requires exit 0 and every ``expect`` file."""
    t0 = time.monotonic()
    try:
        proc = subprocess.run(
            argv,
            cwd=cwd,
            input=stdin,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            timeout=timeout_s,
        )
    except subprocess.TimeoutExpired:
        raise ToolTimeout(Path(argv[0]).name, timeout_s) from None
    except FileNotFoundError:
        raise ToolMissing(f"{argv[0]} not found") from None
    wall = time.monotonic() - t0
    produced = [cwd / name for name in expect if (cwd / name).exists()]
    ok = proc.returncode == 0 and len(produced) == len(expect)
    return CompileOutcome(
        ok,
        proc.returncode,
        proc.stdout.decode("utf-8", errors="replace"),
        proc.stderr.decode("utf-8", errors="replace"),
        produced,
        wall,
    )


def scrub_paths(text: str, tmpdir: str | Path) -> str:
    for variant in {str(tmpdir), os.path.realpath(tmpdir)}:
        text = text.replace(variant, TU_TOKEN)
    return text


def _workdir(workdir: str | Path | None) -> Path:
    if workdir is None:
        return Path(tempfile.mkdtemp(prefix="iris-"))
    p = Path(workdir)
    p.mkdir(parents=True, exist_ok=True)
    return p


# -- IR dumps -------------------------------------------------------------------

def dump_gimple(source: str, cfg: ToolchainConfig) -> str:
    """Return the ``-fdump-tree-gimple`` dump of ``source`` at -O0."""
    with tempfile.TemporaryDirectory(prefix="iris-gimple-") as tmp:
        tmp = Path(tmp)
        name = "input" + cfg.source_suffix
        (tmp / name).write_text(source, encoding="utf-8")
        argv = [cfg.gcc_path, *cfg.extra_gcc_flags, "-O0", "-fdump-tree-gimple", "-c", name, "-o", "input.o"]
        out = run_tool(argv, tmp, cfg.timeout_s)
        if out.exit_code != 0:
            raise ToolFailure("gcc", out.exit_code, out.stderr)
        # the pass number in `<input>.NNNt.gimple` differs between GCC releases
        dumps = sorted(tmp.glob("*.gimple"))
        if not dumps:
            raise DumpMissing("gcc succeeded but wrote no .gimple dump (no function bodies?)")
        text = dumps[0].read_bytes().decode("utf-8", errors="replace")
        return scrub_paths(text, tmp)


def dump_llvm_ir(source: str, cfg: ToolchainConfig) -> str:
    """Return the textual LLVM IR of ``source`` (``clang -O0 -S -emit-llvm``)."""
    with tempfile.TemporaryDirectory(prefix="iris-llvm-") as tmp:
        tmp = Path(tmp)
        (tmp / "input.c").write_text(source, encoding="utf-8")
        argv = [cfg.clang_path, *cfg.extra_clang_flags, "-O0", "-S", "-emit-llvm", "input.c", "-o", "input.ll"]
        out = run_tool(argv, tmp, cfg.timeout_s)
        if out.exit_code != 0:
            raise ToolFailure("clang", out.exit_code, out.stderr)
        ll = tmp / "input.ll"
        if not ll.exists():
            raise DumpMissing("clang succeeded but wrote no .ll file")
        return scrub_paths(ll.read_bytes().decode("utf-8", errors="replace"), tmp)


def check_compiles_both(source: str, cfg: ToolchainConfig) -> bool:
    """True iff both the GIMPLE and the LLVM IR dump succeed."""
    for dump in (dump_gimple, dump_llvm_ir):
        try:
            dump(source, cfg)
        except (ToolFailure, DumpMissing, ToolTimeout) as exc:
            log.debug("check_compiles_both: %s", exc)
            return False
    return True


# -- objects and executables -------------------------------------------------------

def compile_ir_to_object(
    llvm_ir: str, cfg: ToolchainConfig, workdir: str | Path | None = None
) -> Path:
    """Assemble candidate IR text into an object file; rejection raises IrRejected."""
    wd = _workdir(workdir)
    if not llvm_ir.strip():
        raise IrRejected("llc", 1, "empty module text")
    (wd / "candidate.ll").write_text(llvm_ir, encoding="utf-8")
    if cfg.llc_path:
        argv = [cfg.llc_path, "-O0", "-filetype=obj", "-relocation-model=pic", "candidate.ll", "-o", "candidate.o"]
    else:
        argv = [cfg.clang_path, "-c", "-x", "ir", "-O0", "-Wno-override-module", "candidate.ll", "-o", "candidate.o"]
    out = run_tool(argv, wd, cfg.timeout_s, expect=["candidate.o"])
    if not out.success:
        raise IrRejected("llc", out.exit_code, out.stderr or out.stdout)
    return wd / "candidate.o"


def link_with_wrapper(
    obj: str | Path, wrapper_cpp: str, cfg: ToolchainConfig, workdir: str | Path | None = None
) -> Path:
    """Compile the C++ wrapper and link it against ``obj`` with clang++."""
    wd = _workdir(workdir)
    (wd / "wrapper.cpp").write_text(wrapper_cpp, encoding="utf-8")
    argv = [cfg.clangxx_path, "-O0", "-w", "wrapper.cpp", str(Path(obj).resolve()), "-o", "prog", "-lm"]
    out = run_tool(argv, wd, cfg.timeout_s, expect=["prog"])
    if not out.success:
        raise LinkFailure("clang++", out.exit_code, out.stderr or out.stdout)
    return wd / "prog"


def link_executable(
    objects: list[str | Path], cfg: ToolchainConfig, workdir: str | Path | None = None, name: str = "prog"
) -> Path:
    """Link C objects into an executable with the clang driver."""
    wd = _workdir(workdir)
    argv = [cfg.clang_path, *(str(Path(o).resolve()) for o in objects), "-o", name, "-lm"]
    out = run_tool(argv, wd, cfg.timeout_s, expect=[name])
    if not out.success:
        raise LinkFailure("clang", out.exit_code, out.stderr or out.stdout)
    return wd / name


def build_native(source: str, cfg: ToolchainConfig, workdir: str | Path | None = None) -> Path:
    """Build ``source`` directly with gcc at -O0 (reference binary for measurements)."""
    wd = _workdir(workdir)
    (wd / "native.c").write_text(source, encoding="utf-8")
    argv = [cfg.gcc_path, *cfg.extra_gcc_flags, "-O0", "native.c", "-o", "native", "-lm"]
    out = run_tool(argv, wd, cfg.timeout_s, expect=["native"])
    if not out.success:
        raise ToolFailure("gcc", out.exit_code, out.stderr)
    return wd / "native"


def tool_versions(cfg: ToolchainConfig) -> dict[str, str]:
    versions = {}
    for key in ("gcc_path", "clang_path", "llc_path"):
        path = getattr(cfg, key)
        if not path:
            versions[key[:-5]] = "fallback:clang -x ir" if key == "llc_path" else "absent"
            continue
        try:
            proc = subprocess.run([path, "--version"], capture_output=True, timeout=10)
            first = proc.stdout.decode("utf-8", "replace").strip().splitlines()
            versions[key[:-5]] = first[0] if first else ""
        except (OSError, subprocess.TimeoutExpired):
            versions[key[:-5]] = "unknown"
    return versions


# -- declarations --------------------------------------------------------------------

# C identifiers that are reserved in C++ and would break the wrapper's parse
_CXX_RESERVED = frozenset(
    """alignas alignof and and_eq asm bitand bitor bool catch char8_t char16_t
    char32_t class compl concept consteval constexpr constinit const_cast
    co_await co_return co_yield decltype delete dynamic_cast explicit export
    false friend mutable namespace new noexcept not not_eq nullptr operator or
    or_eq private protected public reinterpret_cast requires static_assert
    static_cast template this throw true try typeid typename using virtual
    xor xor_eq""".split()
)
_DROP_SPECIFIERS = {"static", "inline", "__inline", "__inline__", "extern", "_Noreturn", "__extension__"}
_CXX_SPELLING = {"restrict": "__restrict", "_Bool": "bool"}


def _cxx_tokens(toks, rename: set[int] = frozenset()) -> str:
    out = []
    for idx, t in enumerate(toks):
        if t.kind == "ident" and t.text in _DROP_SPECIFIERS:
            continue
        text = _CXX_SPELLING.get(t.text, t.text) if t.kind == "ident" else t.text
        if idx in rename:
            text = text + "_"
        out.append(cscan.Token(t.kind, text, t.start, t.end))
    return cscan.render(out)


def _param_renames(sc, fn) -> set[int]:
    """Relative token indices (within the header slice) of parameter names that are C++ keywords."""
    hits = set()
    for p in fn.params:
        for d in p.declarators:
            if d.name in _CXX_RESERVED and d.name_index is not None:
                hits.add(d.name_index - fn.lo)
    return hits


def _strip_bodies(toks, lo, hi, bodies):
    keep = []
    i = lo
    for a, b in sorted(bodies):
        keep.extend(range(i, a))
        i = b + 1
    keep.extend(range(i, hi))
    return [toks[k] for k in keep]


def source_declarations(c_source: str) -> list[tuple[str, str, int, str]]:
    """``(name, kind, offset, declaration)`` for every function and global defined in ``c_source``.

    Built from the lexical scanner; this is the fallback used when ctags is
    not installed or omits parameter lists. Declarations are rendered so they
    compile inside a C++ ``extern "C" { }`` block.
    """
    sc = cscan.scanner(c_source)
    tu = sc.scan()
    toks = tu.tokens
    items: list[tuple[str, str, int, str]] = []
    for fn in tu.functions:
        header = toks[fn.lo : fn.params_close + 1]
        text = _cxx_tokens(header, _param_renames(sc, fn)) + ";"
        items.append((fn.name, "function", fn.start, text))
    for decl in tu.declarations:
        if decl.is_typedef:
            continue
        is_extern = "extern" in decl.storage
        for d in decl.declarators:
            if d.name is None or d.is_function:
                continue
            if is_extern and d.init_lo is None:
                continue
            if d.name_index is None:
                continue
            if any(toks[a - 1].text in ("struct", "union", "enum") for a, _ in decl.struct_bodies):
                # anonymous aggregate type: no name to declare it with
                continue
            base = _strip_bodies(toks, decl.lo, decl.spec_hi, decl.struct_bodies)
            text = "extern " + _cxx_tokens(base + toks[d.lo : d.hi]) + ";"
            items.append((d.name, "variable", toks[d.name_index].start, text))
    items.sort(key=lambda it: it[2])
    return items


def _ctags_symbols(path: Path, cfg: ToolchainConfig) -> list[dict]:
    argv = [
        cfg.ctags_path,
        "--output-format=json",
        "--language-force=C",
        "--kinds-C=fv",
        "--fields=+nSt",
        "-f",
        "-",
        path.name,
    ]
    out = run_tool(argv, path.parent, cfg.timeout_s)
    if out.exit_code != 0:
        raise ToolFailure("ctags", out.exit_code, out.stderr)
    tags = []
    for line in out.stdout.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ToolFailure("ctags", 0, f"unparseable ctags output: {line[:200]}") from exc
        if rec.get("_type", "tag") == "tag" and rec.get("kind") in ("function", "variable", "f", "v"):
            tags.append(rec)
    return tags


def extract_declarations(c_source: str, cfg: ToolchainConfig) -> list[str]:
    """C declarations for the functions and globals defined in ``c_source``, in source order.

    With ctags configured, ctags decides which symbols exist; each declaration
    is rendered from its ctags signature, or reconstructed from the source when
    ctags gives no parameter list (and always for variables, whose array
    bounds ctags does not report).
    """
    from_source = source_declarations(c_source)
    if not cfg.ctags_path:
        return [text for *_, text in from_source]
    with tempfile.TemporaryDirectory(prefix="iris-ctags-") as tmp:
        path = Path(tmp) / "input.c"
        path.write_text(c_source, encoding="utf-8")
        tags = _ctags_symbols(path, cfg)
    by_name = {(name, kind): text for name, kind, _, text in from_source}
    tags.sort(key=lambda r: int(r.get("line", 0)))
    decls = []
    for rec in tags:
        kind = "function" if rec["kind"] in ("function", "f") else "variable"
        name = rec["name"]
        sig = rec.get("signature")
        typeref = rec.get("typeref", "")
        if kind == "function" and sig and typeref.startswith("typename:"):
            ret = typeref.split(":", 1)[1]
            toks = cscan.tokenize(f"{ret} {name}{sig}")
            text = _cxx_tokens(toks) + ";"
            if any(t.kind == "ident" and t.text in _CXX_RESERVED for t in toks):
                text = by_name.get((name, kind), text)
        else:
            text = by_name.get((name, kind))
            if text is None:
                log.warning("ctags symbol %s has no reconstructable declaration; skipped", name)
                continue
        decls.append(text)
    return decls


"""Top-level structure of a C translation unit, recovered lexically.

The scanner splits a unit into function definitions and file-scope
declarations, and parses declarators well enough to tell pointers, arrays,
function prototypes and plain variables apart. It does not type-check and it
does not expand macros; preprocessor lines are invisible to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .clex import KEYWORDS, Token, match_backward, match_forward, tokenize
from .errors import UnbalancedBraces

TYPE_KEYWORDS = frozenset(
    """void char short int long float double signed unsigned _Bool _Complex
    __int128 struct union enum typeof __typeof__""".split()
)
QUALIFIERS = frozenset(
    "const volatile restrict __restrict __restrict__ _Atomic __const __volatile__".split()
)
STORAGE = frozenset(
    "static extern auto register typedef inline __inline __inline__ _Thread_local _Noreturn __extension__".split()
)
DECL_START = TYPE_KEYWORDS | QUALIFIERS | STORAGE | {"_Alignas", "__attribute__"}

# Library typedef names that never reach the scanner because headers are skipped.
COMMON_TYPEDEFS = frozenset(
    """size_t ssize_t ptrdiff_t intptr_t uintptr_t off_t time_t clock_t FILE
    va_list wchar_t bool int8_t int16_t int32_t int64_t uint8_t uint16_t
    uint32_t uint64_t intmax_t uintmax_t pid_t""".split()
)

_OPERAND_END = {"ident", "number", "string", "char"}


@dataclass
class Declarator:
    name: str | None
    name_index: int | None
    lo: int  # token range of the declarator proper (initializer excluded)
    hi: int
    stars: int = 0
    pointer_const: bool = False
    is_array: bool = False
    is_function: bool = False
    grouped_pointer: bool = False
    init_lo: int | None = None
    init_hi: int | None = None

    @property
    def is_pointer(self) -> bool:
        if self.is_array:
            return False
        if self.is_function:
            return False
        return self.stars > 0


@dataclass
class Declaration:
    lo: int  # first token of the specifiers
    hi: int  # index of the terminating token (';', ')' or ',' for parameters)
    spec_hi: int  # first token after the specifiers
    storage: set[str]
    base_void: bool
    base_const: bool
    typedef_pointer: bool  # base type is a typedef naming a pointer type
    struct_bodies: list[tuple[int, int]]
    declarators: list[Declarator]

    @property
    def is_typedef(self) -> bool:
        return "typedef" in self.storage


@dataclass
class FunctionDef:
    name: str
    lo: int  # first header token
    params_open: int
    params_close: int
    body_open: int
    body_close: int
    start: int  # byte offsets
    end: int
    is_static: bool
    params: list[Declaration] = field(default_factory=list)


@dataclass
class TranslationUnit:
    source: str
    tokens: list[Token]
    functions: list[FunctionDef]
    declarations: list[Declaration]
    unparsed: list[tuple[str | None, int]]  # (name, byte offset), e.g. K&R definitions
    typedefs: dict[str, bool]


def render(tokens: list[Token]) -> str:
    """Join tokens with conventional C spacing."""
    out: list[str] = []
    prev: Token | None = None
    for t in tokens:
        if prev is not None and _space_between(prev, t):
            out.append(" ")
        out.append(t.text)
        prev = t
    return "".join(out)


def _space_between(a: Token, b: Token) -> bool:
    if b.text in (",", ";", ")", "]") and b.kind == "punct":
        return False
    if a.text in ("(", "[") and a.kind == "punct":
        return False
    if b.text == "[" and b.kind == "punct":
        return False
    if b.text == "(" and b.kind == "punct":
        if a.kind == "ident" and a.text not in KEYWORDS:
            return False
        if a.text == ")":
            return False
    if a.text == "*" and a.kind == "punct":
        return b.kind == "ident" and b.text in QUALIFIERS
    if a.text == "*" and b.text == "*":
        return False
    return True


class _Scanner:
    def __init__(self, src: str):
        self.src = src
        self.toks = tokenize(src)
        self.typedefs: dict[str, bool] = {}

    # -- helpers -------------------------------------------------------

    def fwd(self, i: int) -> int:
        try:
            return match_forward(self.toks, i)
        except ValueError:
            raise UnbalancedBraces(self.toks[i].start, f"unclosed {self.toks[i].text!r}") from None

    def text(self, i: int) -> str:
        return self.toks[i].text if 0 <= i < len(self.toks) else ""

    def punct(self, i: int, *texts: str) -> bool:
        if not 0 <= i < len(self.toks):
            return False
        t = self.toks[i]
        return t.kind == "punct" and t.text in texts

    def ident(self, i: int) -> bool:
        return 0 <= i < len(self.toks) and self.toks[i].kind == "ident"

    def is_type_name(self, i: int) -> bool:
        return self.ident(i) and (self.text(i) in self.typedefs or self.text(i) in COMMON_TYPEDEFS)

    # -- declarations ---------------------------------------------------

    def looks_like_declaration(self, i: int) -> bool:
        t = self.text(i)
        if not self.ident(i):
            return False
        if t in DECL_START:
            return True
        if t in KEYWORDS:
            return False
        nxt = i + 1
        if self.is_type_name(i):
            return self.ident(nxt) or self.punct(nxt, "*", "(")
        if self.ident(nxt) and self.text(nxt) not in KEYWORDS - QUALIFIERS:
            return True
        if self.punct(nxt, "*"):
            j = nxt
            while self.punct(j, "*"):
                j += 1
            return self.ident(j) and self.punct(j + 1, "=", ";", ",", "[", ")")
        return False

    def parse_specifiers(self, i: int, hi: int):
        storage: set[str] = set()
        base_void = base_const = typedef_pointer = False
        have_type = False
        bodies: list[tuple[int, int]] = []
        while i < hi:
            t = self.toks[i]
            if t.kind != "ident":
                break
            w = t.text
            if w in STORAGE:
                storage.add(w)
                i += 1
            elif w in QUALIFIERS:
                if w in ("const", "__const"):
                    base_const = True
                i += 1
            elif w in ("__attribute__", "_Alignas", "typeof", "__typeof__"):
                if self.punct(i + 1, "("):
                    i = self.fwd(i + 1) + 1
                else:
                    i += 1
                if w in ("typeof", "__typeof__"):
                    have_type = True
            elif w in ("struct", "union", "enum"):
                have_type = True
                i += 1
                while self.ident(i) and self.text(i) == "__attribute__":
                    i = self.fwd(i + 1) + 1 if self.punct(i + 1, "(") else i + 1
                if self.ident(i) and self.text(i) not in KEYWORDS:
                    i += 1
                if self.punct(i, "{"):
                    j = self.fwd(i)
                    bodies.append((i, j))
                    i = j + 1
            elif w in TYPE_KEYWORDS:
                have_type = True
                if w == "void":
                    base_void = True
                i += 1
            elif not have_type and w not in KEYWORDS:
                # typedef name, known or inferred from position
                have_type = True
                typedef_pointer = self.typedefs.get(w, False)
                i += 1
            else:
                break
        return i, storage, base_void, base_const, typedef_pointer, bodies

    def parse_declarator(self, lo: int, hi: int) -> Declarator:
        d = Declarator(None, None, lo, hi)
        depth_group = 0
        group_stars = 0
        i = lo
        after_name = False
        while i < hi:
            t = self.toks[i]
            if t.kind == "ident" and t.text == "__attribute__":
                i = self.fwd(i + 1) + 1 if self.punct(i + 1, "(") else i + 1
                continue
            if not after_name:
                if t.kind == "punct" and t.text == "*":
                    if depth_group:
                        group_stars += 1
                    d.stars += 1
                    d.pointer_const = False
                    i += 1
                elif t.kind == "ident" and t.text in QUALIFIERS:
                    if t.text in ("const", "__const") and d.stars:
                        d.pointer_const = True
                    i += 1
                elif t.kind == "punct" and t.text == "(":
                    depth_group += 1
                    i += 1
                elif t.kind == "ident" and t.text not in KEYWORDS:
                    d.name, d.name_index = t.text, i
                    after_name = True
                    i += 1
                elif t.kind == "punct" and t.text == "[":
                    # abstract declarator such as `int[]` in a parameter
                    d.is_array = True
                    i = self.fwd(i) + 1
                else:
                    i += 1
            else:
                if t.kind == "punct" and t.text == ")" and depth_group:
                    depth_group -= 1
                    i += 1
                elif t.kind == "punct" and t.text == "[":
                    if group_stars:
                        d.grouped_pointer = True
                    elif depth_group == 0 or not group_stars:
                        d.is_array = True
                    i = self.fwd(i) + 1
                elif t.kind == "punct" and t.text == "(":
                    if group_stars:
                        d.grouped_pointer = True
                    elif not d.is_array:
                        d.is_function = True
                    i = self.fwd(i) + 1
                else:
                    i += 1
        if d.grouped_pointer:
            d.is_array = False
            d.is_function = False
        return d

    def split_top(self, lo: int, hi: int, sep: str) -> list[tuple[int, int]]:
        parts = []
        start = lo
        i = lo
        while i < hi:
            if self.punct(i, "(", "[", "{"):
                i = self.fwd(i) + 1
                continue
            if self.punct(i, sep):
                parts.append((start, i))
                start = i + 1
            i += 1
        parts.append((start, hi))
        return parts

    def parse_declaration(self, lo: int, hi: int) -> Declaration:
        """Parse tokens ``[lo, hi)`` as specifiers followed by declarators."""
        spec_hi, storage, bvoid, bconst, tptr, bodies = self.parse_specifiers(lo, hi)
        decls: list[Declarator] = []
        if spec_hi < hi:
            for a, b in self.split_top(spec_hi, hi, ","):
                eq = None
                j = a
                while j < b:
                    if self.punct(j, "(", "[", "{"):
                        j = self.fwd(j) + 1
                        continue
                    if self.punct(j, "="):
                        eq = j
                        break
                    j += 1
                d = self.parse_declarator(a, eq if eq is not None else b)
                if eq is not None:
                    d.init_lo, d.init_hi = eq + 1, b
                if d.name is not None or d.stars or d.is_array:
                    decls.append(d)
        decl = Declaration(lo, hi, spec_hi, storage, bvoid, bconst, tptr, bodies, decls)
        if decl.is_typedef:
            for d in decls:
                if d.name:
                    self.typedefs[d.name] = d.is_pointer or tptr
        return decl

    def parse_params(self, open_i: int, close_i: int) -> list[Declaration]:
        out = []
        if close_i == open_i + 1:
            return out
        for a, b in self.split_top(open_i + 1, close_i, ","):
            if a >= b or self.punct(a, "..."):
                continue
            out.append(self.parse_declaration(a, b))
        return out

    # -- top level -----------------------------------------------------

    def function_name(self, brace: int, seg_start: int):
        """Locate the parameter list and name of a definition ending at ``brace``."""
        j = brace - 1
        while j >= seg_start:
            if self.punct(j, ")"):
                k = match_backward(self.toks, j)
                if self.text(k - 1) == "__attribute__":
                    j = k - 2
                    continue
                if self.punct(k - 1, "(") and self.text(k - 2) == "__attribute__":
                    j = k - 3
                    continue
                if self.ident(k - 1) and self.text(k - 1) in ("asm", "__asm__"):
                    j = k - 2
                    continue
                if self.ident(k - 1) and self.text(k - 1) not in KEYWORDS:
                    return self.text(k - 1), k, j
                return None, k, j
            if self.ident(j) and self.text(j) in QUALIFIERS:
                j -= 1
                continue
            return None, None, None
        return None, None, None

    def scan(self) -> TranslationUnit:
        toks = self.toks
        functions: list[FunctionDef] = []
        declarations: list[Declaration] = []
        unparsed: list[tuple[str | None, int]] = []
        seg_start = 0
        run_start = 0  # start of consecutive ';'-terminated segments (K&R headers)
        i = 0
        n = len(toks)
        while i < n:
            t = toks[i]
            if t.kind == "punct" and t.text in ("(", "["):
                i = self.fwd(i) + 1
                continue
            if t.kind == "punct" and t.text in (")", "]", "}"):
                raise UnbalancedBraces(t.start, f"unexpected {t.text!r}")
            if t.kind == "punct" and t.text == "{":
                close = self.fwd(i)
                has_eq = any(self.punct(k, "=") for k in range(seg_start, i))
                if i > seg_start and self.punct(i - 1, ")") and not has_eq:
                    name, popen, pclose = self.function_name(i, seg_start)
                    if name is None:
                        unparsed.append((None, toks[seg_start].start))
                    else:
                        spec_hi, storage, *_ = self.parse_specifiers(seg_start, popen)
                        fn = FunctionDef(
                            name=name,
                            lo=seg_start,
                            params_open=popen,
                            params_close=pclose,
                            body_open=i,
                            body_close=close,
                            start=toks[seg_start].start,
                            end=toks[close].end,
                            is_static="static" in storage,
                        )
                        fn.params = self.parse_params(popen, pclose)
                        functions.append(fn)
                    i = seg_start = run_start = close + 1
                    continue
                if i == seg_start and i > 0 and self.punct(i - 1, ";"):
                    # `int f(a) int a; { ... }`: old-style definition
                    name = None
                    for k in range(run_start, i - 1):
                        if self.ident(k) and self.punct(k + 1, "(") and self.text(k) not in KEYWORDS:
                            name = self.text(k)
                            break
                    unparsed.append((name, toks[run_start].start))
                    # the parameter declarations were recorded as file-scope declarations
                    while declarations and declarations[-1].lo >= run_start:
                        declarations.pop()
                    i = seg_start = run_start = close + 1
                    continue
                i = close + 1
                continue
            if t.kind == "punct" and t.text == ";":
                if i > seg_start:
                    declarations.append(self.parse_declaration(seg_start, i))
                seg_start = i + 1
                i += 1
                continue
            i += 1
        return TranslationUnit(self.src, toks, functions, declarations, unparsed, dict(self.typedefs))


def scan_unit(src: str) -> TranslationUnit:
    """Split ``src`` into file-scope functions and declarations."""
    return _Scanner(src).scan()


def scanner(src: str) -> _Scanner:
    return _Scanner(src)


def is_operand_end(tok: Token | None) -> bool:
    if tok is None:
        return False
    if tok.kind in _OPERAND_END:
        return tok.kind != "ident" or tok.text not in KEYWORDS
    return tok.text in (")", "]")

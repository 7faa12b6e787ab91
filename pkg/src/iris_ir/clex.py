"""A small C lexer.

Only what the scanners in this package need: identifiers, numbers, string and
character literals, and punctuators, with byte offsets back into the source.
Comments and preprocessor lines never produce tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator

_PUNCTUATORS = sorted(
    """>>= <<= ... -> ++ -- << >> <= >= == != && || += -= *= /= %= &= ^= |= ##
    [ ] ( ) { } . & * + - ~ ! / % < > ^ | ? : ; = , #""".split(),
    key=len,
    reverse=True,
)
_IDENT = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")
_NUMBER = re.compile(r"\.?[0-9](?:[eEpP][+-]|[A-Za-z0-9_.'])*")
_STRING_PREFIXES = {"L", "u", "U", "u8"}

KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    _Bool _Complex _Imaginary _Alignas _Alignof _Atomic _Noreturn
    _Static_assert _Thread_local __attribute__ __extension__ __inline
    __inline__ __restrict __restrict__ __volatile__ __const asm __asm__
    typeof __typeof__ __int128""".split()
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident | number | string | char | punct
    text: str
    start: int
    end: int

    def is_(self, text: str) -> bool:
        return self.text == text and self.kind in ("punct", "ident")


def _skip_quoted(src: str, i: int, quote: str) -> int:
    """Return the index just past the literal opening at ``src[i]``."""
    n = len(src)
    j = i + 1
    while j < n:
        c = src[j]
        if c == "\\":
            j += 2
            continue
        if c == quote:
            return j + 1
        if c == "\n":
            # unterminated literal: stop at the line end like the compiler would
            return j
        j += 1
    return n


def _at_line_start(src: str, i: int) -> bool:
    j = i - 1
    while j >= 0 and src[j] in " \t":
        j -= 1
    return j < 0 or src[j] == "\n"


def _skip_directive(src: str, i: int) -> int:
    n = len(src)
    j = i
    while j < n:
        c = src[j]
        if c == "\\" and j + 1 < n and src[j + 1] == "\n":
            j += 2
            continue
        if c == "\\" and src.startswith("\r\n", j + 1):
            j += 3
            continue
        if c == "/" and src.startswith("/*", j):
            end = src.find("*/", j + 2)
            j = n if end < 0 else end + 2
            continue
        if c == "/" and src.startswith("//", j):
            end = src.find("\n", j)
            return n if end < 0 else end
        if c in "\"'":
            j = _skip_quoted(src, j, c)
            continue
        if c == "\n":
            return j
        j += 1
    return n


def tokenize(src: str) -> list[Token]:
    return list(iter_tokens(src))


def iter_tokens(src: str) -> Iterator[Token]:
    i = 0
    n = len(src)
    while i < n:
        c = src[i]
        if c in " \t\r\n\f\v":
            i += 1
            continue
        if c == "\\" and i + 1 < n and src[i + 1] in "\r\n":
            i += 1
            continue
        if c == "/" and i + 1 < n and src[i + 1] == "*":
            end = src.find("*/", i + 2)
            i = n if end < 0 else end + 2
            continue
        if c == "/" and i + 1 < n and src[i + 1] == "/":
            end = src.find("\n", i)
            i = n if end < 0 else end
            continue
        if c == "#" and _at_line_start(src, i):
            i = _skip_directive(src, i)
            continue
        if c == '"' or c == "'":
            j = _skip_quoted(src, i, c)
            yield Token("string" if c == '"' else "char", src[i:j], i, j)
            i = j
            continue
        m = _IDENT.match(src, i)
        if m:
            word = m.group()
            j = m.end()
            if word in _STRING_PREFIXES and j < n and src[j] in "\"'":
                k = _skip_quoted(src, j, src[j])
                yield Token("string" if src[j] == '"' else "char", src[i:k], i, k)
                i = k
                continue
            yield Token("ident", word, i, j)
            i = j
            continue
        m = _NUMBER.match(src, i)
        if m:
            yield Token("number", m.group(), i, m.end())
            i = m.end()
            continue
        for p in _PUNCTUATORS:
            if src.startswith(p, i):
                yield Token("punct", p, i, i + len(p))
                i += len(p)
                break
        else:
            # stray byte (e.g. '@' or non-ASCII outside literals)
            yield Token("punct", c, i, i + 1)
            i += 1


def strip_comments(src: str) -> str:
    """Replace every comment with a single space, leaving literals intact."""
    out = []
    i = 0
    n = len(src)
    last = 0
    while i < n:
        c = src[i]
        if c in "\"'":
            i = _skip_quoted(src, i, c)
            continue
        if c == "/" and src.startswith("/*", i):
            end = src.find("*/", i + 2)
            stop = n if end < 0 else end + 2
            out.append(src[last:i])
            out.append(" ")
            i = last = stop
            continue
        if c == "/" and src.startswith("//", i):
            end = src.find("\n", i)
            stop = n if end < 0 else end
            out.append(src[last:i])
            out.append(" ")
            i = last = stop
            continue
        i += 1
    out.append(src[last:])
    return "".join(out)


def match_forward(tokens: list[Token], i: int) -> int:
    """Index of the bracket closing ``tokens[i]``; raises ValueError if none."""
    pairs = {"(": ")", "[": "]", "{": "}"}
    open_ = tokens[i].text
    close = pairs[open_]
    depth = 0
    for j in range(i, len(tokens)):
        t = tokens[j]
        if t.kind != "punct":
            continue
        if t.text == open_:
            depth += 1
        elif t.text == close:
            depth -= 1
            if depth == 0:
                return j
    raise ValueError(f"no match for {open_!r} at token {i}")


def match_backward(tokens: list[Token], i: int) -> int:
    pairs = {")": "(", "]": "[", "}": "{"}
    close = tokens[i].text
    open_ = pairs[close]
    depth = 0
    for j in range(i, -1, -1):
        t = tokens[j]
        if t.kind != "punct":
            continue
        if t.text == close:
            depth += 1
        elif t.text == open_:
            depth -= 1
            if depth == 0:
                return j
    raise ValueError(f"no match for {close!r} at token {i}")

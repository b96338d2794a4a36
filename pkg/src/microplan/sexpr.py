"""Minimal S-expression reader with line tracking for the data-file formats."""
from __future__ import annotations

import re
from pathlib import Path

from .terms import Compound, FeatureStructure, Term, make_term


class ParseError(Exception):
    """Syntax or shape error in an input file; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where = f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class Symbol(str):
    line: int = 0


class Quoted(str):
    line: int = 0


class SList(list):
    line: int = 0


_TOKEN = re.compile(r'\s+|;[^\n]*|\(|\)|"(?:[^"\\]|\\.)*"|[^\s()";]+')


def read_all(text: str, source: str | None = None) -> list:
    """Parse every top-level form in ``text``."""
    stack: list[SList] = [SList()]
    line = 1
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, source)
        tok = m.group()
        pos = m.end()
        if tok[0].isspace() or tok[0] == ";":
            line += tok.count("\n")
            continue
        if tok == "(":
            lst = SList()
            lst.line = line
            stack.append(lst)
        elif tok == ")":
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", line, source)
            done = stack.pop()
            stack[-1].append(done)
        elif tok[0] == '"':
            q = Quoted(re.sub(r"\\(.)", r"\1", tok[1:-1]))
            q.line = line
            stack[-1].append(q)
        else:
            sym = Symbol(tok)
            sym.line = line
            stack[-1].append(sym)
    if len(stack) != 1:
        raise ParseError(f"unclosed '(' opened on line {stack[-1].line}", line, source)
    return list(stack[0])


def read_file(path: str | Path) -> list:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror or exc}", source=str(p)) from exc
    return read_all(text, str(p))


def line_of(x) -> int | None:
    return getattr(x, "line", None)


def to_term(x, source: str | None = None) -> Term:
    """Convert ``sym`` or ``(functor arg...)`` into a term."""
    if isinstance(x, Symbol):
        return make_term(str(x))
    if isinstance(x, SList) and x and isinstance(x[0], Symbol):
        return Compound(str(x[0]), tuple(to_term(a, source) for a in x[1:]))
    raise ParseError(f"expected a term, got {render(x)}", line_of(x), source)


def to_avm(x, source: str | None = None) -> FeatureStructure:
    """Convert ``((attr value) ...)`` into a feature structure."""
    if not isinstance(x, SList):
        raise ParseError(f"expected a feature list, got {render(x)}", line_of(x), source)
    pairs = []
    for item in x:
        if not (isinstance(item, SList) and len(item) == 2 and isinstance(item[0], Symbol)):
            raise ParseError(f"malformed feature {render(item)}", line_of(item) or line_of(x), source)
        pairs.append((str(item[0]), to_term(item[1], source)))
    try:
        return FeatureStructure.from_pairs(pairs)
    except ValueError as exc:
        raise ParseError(str(exc), line_of(x), source) from exc


def render(x) -> str:
    if isinstance(x, list):
        return "(" + " ".join(render(e) for e in x) + ")"
    if isinstance(x, Quoted):
        return '"' + x + '"'
    return str(x)


def term_to_sexpr(t: Term) -> str:
    if isinstance(t, Compound):
        return "(" + " ".join([t.functor, *(term_to_sexpr(a) for a in t.args)]) + ")"
    return str(t)

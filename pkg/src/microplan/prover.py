"""Backward-chaining proof search for a first-order modal logic-programming fragment.

Definitions (clauses) and queries follow the grammar::

    D ::= Q | Q => D | forall X. D
    Q ::= [CR] D | [S] D | [U] D | [MP] D | Q & Q | atom

A clause labeled ``l`` may be used for a goal under modality ``m`` iff
``l`` is below ``m`` in the accessibility preorder (MP < CR < S, CR < U,
everything < ROOT).
"""
from __future__ import annotations

import enum
import itertools
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

from . import sexpr
from .sexpr import ParseError, SList, Symbol
from .terms import (
    Compound,
    Substitution,
    Term,
    Var,
    format_term,
    is_ground,
    make_term,
    resolve,
    unify,
    unique_variables,
)

log = logging.getLogger(__name__)

DEFAULT_DEPTH = 16


class Modality(enum.Enum):
    ROOT = "ROOT"
    S = "S"
    U = "U"
    CR = "CR"
    MP = "MP"

    def __str__(self) -> str:
        return self.value


_BELOW: dict[Modality, frozenset[Modality]] = {
    Modality.MP: frozenset({Modality.MP}),
    Modality.CR: frozenset({Modality.CR, Modality.MP}),
    Modality.S: frozenset({Modality.S, Modality.CR, Modality.MP}),
    Modality.U: frozenset({Modality.U, Modality.CR, Modality.MP}),
    Modality.ROOT: frozenset(Modality),
}


def accessible(label: Modality, goal: Modality) -> bool:
    """True when a clause labeled ``label`` may serve a goal under ``goal``."""
    return label in _BELOW[goal]


# --- formulas ---------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class And:
    parts: tuple = ()

    def substitute(self, s: Substitution) -> And:
        return And(tuple(_subst(p, s) for p in self.parts))

    def variables(self) -> list[Var]:
        return _vars_of(self)


@dataclass(frozen=True, slots=True)
class Box:
    modality: Modality
    body: object

    def substitute(self, s: Substitution) -> Box:
        return Box(self.modality, _subst(self.body, s))

    def variables(self) -> list[Var]:
        return _vars_of(self)


@dataclass(frozen=True, slots=True)
class Implies:
    antecedent: object
    consequent: object

    def substitute(self, s: Substitution) -> Implies:
        return Implies(_subst(self.antecedent, s), _subst(self.consequent, s))

    def variables(self) -> list[Var]:
        return _vars_of(self)


@dataclass(frozen=True, slots=True)
class Forall:
    bound: tuple[Var, ...]
    body: object

    def substitute(self, s: Substitution) -> Forall:
        inner = {v: t for v, t in s.items() if v not in self.bound}
        return Forall(self.bound, _subst(self.body, inner))

    def variables(self) -> list[Var]:
        return _vars_of(self)


Formula = Union[Term, And, Box, Implies, Forall]
TRUE = And(())


def _subst(f, s: Substitution):
    if isinstance(f, (str, Var, Compound)):
        return resolve(f, s)
    return f.substitute(s)


def _vars_of(f) -> list[Var]:
    """Free variables of a formula in left-to-right order."""
    out: dict[Var, None] = {}

    def visit(g, bound: frozenset) -> None:
        if isinstance(g, (str, Var, Compound)):
            for v in unique_variables(g):
                if v not in bound:
                    out.setdefault(v)
        elif isinstance(g, And):
            for p in g.parts:
                visit(p, bound)
        elif isinstance(g, Box):
            visit(g.body, bound)
        elif isinstance(g, Implies):
            visit(g.antecedent, bound)
            visit(g.consequent, bound)
        elif isinstance(g, Forall):
            visit(g.body, bound | set(g.bound))

    visit(f, frozenset())
    return list(out)


def formula_variables(f: Formula) -> list[Var]:
    return _vars_of(f)


def conjuncts(f: Formula) -> tuple[Term, ...]:
    """Flatten an atom conjunction into its atoms."""
    if isinstance(f, And):
        return tuple(a for p in f.parts for a in conjuncts(p))
    if isinstance(f, (str, Compound)):
        return (f,)
    raise TypeError(f"not an atom conjunction: {format_formula(f)}")


def conjoin(atoms: Iterable[Term]) -> Formula:
    atoms = tuple(atoms)
    return atoms[0] if len(atoms) == 1 else And(atoms)


def format_formula(f: Formula) -> str:
    if isinstance(f, (str, Var, Compound)):
        return format_term(f)
    if isinstance(f, And):
        if not f.parts:
            return "true"
        return " & ".join(_paren(p) for p in f.parts)
    if isinstance(f, Box):
        return f"[{f.modality}] {_paren(f.body)}"
    if isinstance(f, Implies):
        return f"{_paren(f.antecedent)} => {_paren(f.consequent)}"
    if isinstance(f, Forall):
        return f"forall {' '.join(v.name for v in f.bound)}. {format_formula(f.body)}"
    raise TypeError(f"not a formula: {f!r}")


def _paren(f: Formula) -> str:
    text = format_formula(f)
    if isinstance(f, (Implies, Forall)) or (isinstance(f, And) and len(f.parts) > 1):
        return f"({text})"
    return text


def is_atom(f) -> bool:
    return isinstance(f, (str, Compound))


# --- clauses and knowledge bases --------------------------------------------


@dataclass(frozen=True, slots=True)
class Clause:
    """Label-scoped ``forall universals. body => head``; facts have no body."""

    label: Modality
    universals: tuple[Var, ...]
    body: Formula | None
    head: Term
    index: int = -1
    line: int | None = None

    def __str__(self) -> str:
        inner = format_term(self.head)
        if self.body is not None:
            inner = f"{_paren(self.body)} => {inner}"
        if self.universals:
            inner = f"forall {' '.join(v.name for v in self.universals)}. {inner}"
        return f"[{self.label}] {inner}"


def _predicate_key(atom: Term) -> tuple[str, int]:
    if isinstance(atom, Compound):
        return atom.functor, len(atom.args)
    return str(atom), 0


@dataclass(frozen=True)
class KnowledgeBase:
    clauses: tuple[Clause, ...] = ()
    context_sets: tuple[tuple[Term, tuple[Term, ...]], ...] = ()
    source: str | None = None

    @cached_property
    def _index(self) -> dict[tuple[str, int], tuple[Clause, ...]]:
        index: dict[tuple[str, int], list[Clause]] = {}
        for c in self.clauses:
            index.setdefault(_predicate_key(c.head), []).append(c)
        return {k: tuple(v) for k, v in index.items()}

    def candidates(self, atom: Term) -> tuple[Clause, ...]:
        return self._index.get(_predicate_key(atom), ())

    @cached_property
    def inventory(self) -> tuple[Term, ...]:
        """Ground argument terms of CR-labeled facts, in file order."""
        seen: dict[Term, None] = {}
        for c in self.clauses:
            if c.label is Modality.CR and c.body is None and isinstance(c.head, Compound):
                for arg in c.head.args:
                    if is_ground(arg):
                        seen.setdefault(arg)
        return tuple(seen)

    @cached_property
    def constants(self) -> frozenset[Term]:
        """Every ground argument term mentioned by a fact, under any label."""
        out = set()
        for c in self.clauses:
            if c.body is None and isinstance(c.head, Compound):
                out.update(a for a in c.head.args if is_ground(a))
        for owner, members in self.context_sets:
            out.add(owner)
            out.update(members)
        return frozenset(out)

    def declared_context_set(self, referent: Term) -> tuple[Term, ...] | None:
        for owner, members in self.context_sets:
            if owner == referent:
                return members
        return None

    def without(self, *removed: tuple[Modality, Term]) -> KnowledgeBase:
        """Copy with the named facts removed (an ablation helper)."""
        targets = set(removed)
        missing = targets - {(c.label, c.head) for c in self.clauses if c.body is None}
        if missing:
            raise KeyError(f"no such facts: {sorted(map(str, missing))}")
        kept = [c for c in self.clauses if c.body is not None or (c.label, c.head) not in targets]
        return KnowledgeBase(_reindex(kept), self.context_sets, self.source)

    def extended(self, clauses: Iterable[Clause]) -> KnowledgeBase:
        return KnowledgeBase(_reindex([*self.clauses, *clauses]), self.context_sets, self.source)


def _reindex(clauses: Sequence[Clause]) -> tuple[Clause, ...]:
    return tuple(
        Clause(c.label, c.universals, c.body, c.head, i, c.line) for i, c in enumerate(clauses)
    )


def fact(label: Modality | str, atom: Term) -> Clause:
    return Clause(Modality(str(label)), (), None, atom)


def rule(label: Modality | str, body: Sequence[Term], head: Term) -> Clause:
    c = Clause(Modality(str(label)), (), conjoin(body) if body else None, head)
    return Clause(c.label, tuple(_vars_of(And((c.head, c.body or TRUE)))), c.body, c.head)


# --- file and query parsing -------------------------------------------------

_LABELS = {"S", "U", "CR", "MP"}


def _modality(x, source: str | None) -> Modality:
    if not (isinstance(x, Symbol) and str(x) in _LABELS):
        raise ParseError(f"expected one of S, U, CR, MP, got {sexpr.render(x)}", sexpr.line_of(x), source)
    return Modality(str(x))


def formula_from_sexpr(x, source: str | None = None) -> Formula:
    """Read an S-expression formula: atom, true, (and ...), (=> Q D), (forall (V..) D), (CR D)."""
    if isinstance(x, Symbol) and str(x) == "true":
        return TRUE
    if isinstance(x, SList) and x and isinstance(x[0], Symbol):
        head = str(x[0])
        line = x.line
        if head in _BANNED:
            raise FragmentError(f"{_BANNED[head]} is outside the supported fragment", line, source)
        if head == "and":
            return And(tuple(formula_from_sexpr(p, source) for p in x[1:]))
        if head == "=>":
            if len(x) != 3:
                raise ParseError("=> takes an antecedent and a consequent", line, source)
            return Implies(formula_from_sexpr(x[1], source), formula_from_sexpr(x[2], source))
        if head == "forall":
            if len(x) != 3 or not isinstance(x[1], SList):
                raise ParseError("forall takes a variable list and a body", line, source)
            bound = tuple(make_term(str(v)) for v in x[1])
            if not all(isinstance(v, Var) for v in bound):
                raise ParseError("forall binds variables only", line, source)
            return Forall(bound, formula_from_sexpr(x[2], source))
        if head in _LABELS:
            if len(x) != 2:
                raise ParseError(f"modal operator {head} takes one formula", line, source)
            return Box(Modality(head), formula_from_sexpr(x[1], source))
    atom = sexpr.to_term(x, source)
    if isinstance(atom, Var):
        raise ParseError(f"a variable cannot stand as a formula: {atom}", sexpr.line_of(x), source)
    return atom


def load_kb(path: str | Path) -> KnowledgeBase:
    forms = sexpr.read_file(path)
    return kb_from_forms(forms, str(path))


def parse_kb(text: str, source: str | None = None) -> KnowledgeBase:
    return kb_from_forms(sexpr.read_all(text, source), source)


def kb_from_forms(forms: list, source: str | None = None) -> KnowledgeBase:
    clauses: list[Clause] = []
    context_sets: list[tuple[Term, tuple[Term, ...]]] = []
    for form in forms:
        if not (isinstance(form, SList) and form and isinstance(form[0], Symbol)):
            raise ParseError(f"unexpected top-level form {sexpr.render(form)}", sexpr.line_of(form), source)
        kind = str(form[0])
        if kind == "fact":
            if len(form) != 3:
                raise ParseError("fact takes a modality and an atom", form.line, source)
            label = _modality(form[1], source)
            atom = formula_from_sexpr(form[2], source)
            if not is_atom(atom):
                raise FragmentError("a fact must be a single atom", form.line, source)
            clauses.append(Clause(label, tuple(unique_variables(atom)), None, atom, line=form.line))
        elif kind == "rule":
            if len(form) != 3:
                raise ParseError("rule takes a modality and a formula", form.line, source)
            label = _modality(form[1], source)
            body = formula_from_sexpr(form[2], source)
            for c in clausify(body, label):
                clauses.append(
                    Clause(c.label, tuple(_vars_of(And((c.head, c.body or TRUE)))), c.body, c.head, line=form.line)
                )
        elif kind == "context-set":
            if len(form) != 3 or not isinstance(form[2], SList):
                raise ParseError("context-set takes a referent and a list", form.line, source)
            owner = sexpr.to_term(form[1], source)
            members = tuple(sexpr.to_term(m, source) for m in form[2])
            if not (is_ground(owner) and all(is_ground(m) for m in members)):
                raise ParseError("context sets contain ground terms only", form.line, source)
            if owner not in members:
                members = (owner, *members)
            context_sets.append((owner, members))
        else:
            raise ParseError(f"unknown form {kind!r}", form.line, source)
    return KnowledgeBase(_reindex(clauses), tuple(context_sets), source)


class FragmentError(ParseError):
    """A formula uses a construct outside the supported fragment."""


_BANNED = {
    "or": "disjunction",
    "|": "disjunction",
    "v": "disjunction",
    "∨": "disjunction",
    "not": "negation",
    "~": "negation",
    "\\+": "negation",
    "¬": "negation",
    "exists": "existential quantification",
    "∃": "existential quantification",
}

_QTOKEN = re.compile(
    r"\s+|\[|\]|\(|\)|,|&|∧|=>|->|⊃|\.|:|∀|∨|\||¬|~|\\\+|∃|[A-Za-z0-9_][A-Za-z0-9_\-']*"
)


class _QueryParser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens: list[tuple[str, int]] = []
        pos = 0
        while pos < len(text):
            m = _QTOKEN.match(text, pos)
            if m is None:
                raise ParseError(f"unexpected character {text[pos]!r} at position {pos}")
            if not m.group().isspace():
                self.tokens.append((m.group(), pos))
            pos = m.end()
        self.i = 0

    def peek(self) -> str | None:
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def where(self) -> int:
        return self.tokens[self.i][1] if self.i < len(self.tokens) else len(self.text)

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            want = f"{expected!r}" if expected else "more input"
            raise ParseError(f"expected {want} at position {self.where()}, found {tok!r}")
        self.i += 1
        return tok

    def parse(self) -> Formula:
        f = self.formula()
        if self.peek() is not None:
            self._check_banned()
            raise ParseError(f"unexpected {self.peek()!r} at position {self.where()}")
        return f

    def _check_banned(self) -> None:
        tok = self.peek()
        if tok in _BANNED:
            raise FragmentError(f"{_BANNED[tok]} ({tok!r} at position {self.where()}) is outside the supported fragment")

    def formula(self) -> Formula:
        left = self.conj()
        if self.peek() in ("=>", "->", "⊃"):
            self.take()
            return Implies(left, self.formula())
        self._check_banned()
        return left

    def conj(self) -> Formula:
        parts = [self.unary()]
        while self.peek() in ("&", "∧", ",", "and"):
            self.take()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unary(self) -> Formula:
        self._check_banned()
        tok = self.peek()
        if tok == "[":
            self.take()
            label = self.take()
            if label not in _LABELS:
                raise ParseError(f"unknown modality {label!r} at position {self.where()}")
            self.take("]")
            return Box(Modality(label), self.unary())
        if tok in ("forall", "∀"):
            self.take()
            bound = []
            while self.peek() not in (".", ":", None):
                name = self.take()
                if name == ",":
                    continue
                v = make_term(name)
                if not isinstance(v, Var):
                    raise ParseError(f"forall binds variables only, got {name!r}")
                bound.append(v)
            self.take()
            return Forall(tuple(bound), self.formula())
        if tok == "(":
            self.take()
            f = self.formula()
            self.take(")")
            return f
        if tok == "true":
            self.take()
            return TRUE
        t = self.term()
        if isinstance(t, Var):
            raise ParseError(f"a variable cannot stand as a formula: {t}")
        return t

    def term(self) -> Term:
        pos = self.where()
        name = self.take()
        if not re.match(r"[A-Za-z0-9_]", name):
            raise ParseError(f"expected a term at position {pos}, found {name!r}")
        if self.peek() == "(":
            self.take()
            args = [self.term()]
            while self.peek() == ",":
                self.take()
                args.append(self.term())
            self.take(")")
            return Compound(name, tuple(args))
        return make_term(name)


def parse_formula(text: str) -> Formula:
    """Parse infix formula syntax, or S-expression syntax when the text starts with '('."""
    stripped = text.strip()
    if stripped.startswith("("):
        try:
            forms = sexpr.read_all(stripped)
        except ParseError:
            forms = None
        if forms and len(forms) == 1 and isinstance(forms[0], SList) and forms[0]:
            head = forms[0][0]
            if isinstance(head, Symbol) and (str(head) in _BANNED or str(head) in _LABELS | {"and", "=>", "forall"}):
                return formula_from_sexpr(forms[0])
    return _QueryParser(text).parse()


def check_query(f: Formula) -> None:
    """Raise :class:`FragmentError` unless ``f`` is a Q formula."""
    if is_atom(f):
        return
    if isinstance(f, And):
        for p in f.parts:
            check_query(p)
    elif isinstance(f, Box):
        if f.modality is Modality.ROOT:
            raise FragmentError("ROOT is not a writable modality")
        _check_definition(f.body)
    elif isinstance(f, Implies):
        raise FragmentError("an implication must appear under a modal operator")
    elif isinstance(f, Forall):
        raise FragmentError("a universal must appear under a modal operator")
    else:
        raise FragmentError(f"not a formula: {f!r}")


def _check_definition(f: Formula) -> None:
    if isinstance(f, Implies):
        check_query(f.antecedent)
        _check_definition(f.consequent)
    elif isinstance(f, Forall):
        _check_definition(f.body)
    else:
        check_query(f)


def parse_query(text: str) -> Formula:
    f = parse_formula(text)
    check_query(f)
    return f


def clausify(d: Formula, label: Modality, universals: tuple[Var, ...] = (), body: Formula | None = None) -> list[Clause]:
    """Compile a D formula into clauses (used for KB rules and hypotheses)."""
    if is_atom(d):
        return [Clause(label, universals, body, d)]
    if isinstance(d, And):
        return [c for p in d.parts for c in clausify(p, label, universals, body)]
    if isinstance(d, Box):
        return clausify(d.body, d.modality, universals, body)
    if isinstance(d, Implies):
        joined = d.antecedent if body is None else And((body, d.antecedent))
        return clausify(d.consequent, label, universals, joined)
    if isinstance(d, Forall):
        return clausify(d.body, label, universals + d.bound, body)
    raise FragmentError(f"cannot use {format_formula(d)} as a definition")


# --- proof search -----------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ProofStep:
    source: str  # "kb" or "assumption"
    index: int
    label: Modality
    head: Term
    depth: int

    def describe(self) -> str:
        where = f"#{self.index}" if self.source == "kb" else f"hyp{self.index}"
        return f"{where} [{self.label}] {format_term(self.head)}"


@dataclass(frozen=True)
class Answer:
    substitution: dict[Var, Term]
    proof: tuple[ProofStep, ...]
    depth: int

    def describe(self) -> str:
        return " ".join(f"{v.name}={format_term(t)}" for v, t in self.substitution.items())


@dataclass
class ProofSearch:
    """Lazy answer stream for one query; records whether the depth bound cut any branch."""

    kb: KnowledgeBase
    query: Formula
    seed: dict[Var, Term] = field(default_factory=dict)
    limit: int = DEFAULT_DEPTH
    exhausted: bool = False
    max_depth: int = 0

    def __iter__(self) -> Iterator[Answer]:
        query = _subst(self.query, self.seed)
        qvars = _vars_of(query)
        self._names = itertools.count()
        for s, steps, depth in self._solve(query, Modality.ROOT, {}, 0, ()):
            self.max_depth = max(self.max_depth, depth)
            sub = dict(self.seed)
            sub.update({v: resolve(v, s) for v in qvars})
            proof = tuple(
                ProofStep(src, idx, label, resolve(head, s), d) for src, idx, label, head, d in steps
            )
            yield Answer(sub, proof, depth)
        if self.exhausted:
            log.debug("depth bound %d cut proof search for %s", self.limit, format_formula(self.query))

    def first(self) -> Answer | None:
        return next(iter(self), None)

    def all(self) -> list[Answer]:
        return list(self)

    def _fresh(self, prefix: str) -> str:
        return f"{prefix}{next(self._names)}"

    def _solve(self, goal, mod: Modality, s: dict, depth: int, hyps: tuple[Clause, ...]):
        if is_atom(goal):
            yield from self._solve_atom(goal, mod, s, depth, hyps)
        elif isinstance(goal, And):
            yield from self._solve_all(goal.parts, mod, s, depth, hyps)
        elif isinstance(goal, Box):
            yield from self._solve(goal.body, goal.modality, s, depth, hyps)
        elif isinstance(goal, Implies):
            assumed = clausify(_subst(goal.antecedent, s), mod)
            start = len(hyps)
            numbered = tuple(
                Clause(c.label, c.universals, c.body, c.head, start + i) for i, c in enumerate(assumed)
            )
            yield from self._solve(goal.consequent, mod, s, depth, hyps + numbered)
        elif isinstance(goal, Forall):
            eigen = {v: f"#{self._fresh('c')}" for v in goal.bound}
            yield from self._solve(_subst(goal.body, eigen), mod, s, depth, hyps)
        else:
            raise FragmentError(f"cannot prove {goal!r}")

    def _solve_all(self, parts: tuple, mod: Modality, s: dict, depth: int, hyps):
        if not parts:
            yield s, (), depth
            return
        for s1, p1, d1 in self._solve(parts[0], mod, s, depth, hyps):
            for s2, p2, d2 in self._solve_all(parts[1:], mod, s1, depth, hyps):
                yield s2, p1 + p2, max(d1, d2)

    def _solve_atom(self, atom: Term, mod: Modality, s: dict, depth: int, hyps):
        key = _predicate_key(atom)
        candidates = [("assumption", c) for c in hyps if _predicate_key(c.head) == key]
        candidates += [("kb", c) for c in self.kb.candidates(atom)]
        for source, clause in candidates:
            if not accessible(clause.label, mod):
                continue
            head, body = clause.head, clause.body
            if clause.universals:
                suffix = self._fresh("_G")
                rename = {v: Var(f"{suffix}_{v.name}") for v in clause.universals}
                head = resolve(head, rename)
                body = _subst(body, rename) if body is not None else None
            s1 = unify(atom, head, s)
            if s1 is None:
                continue
            if depth + 1 > self.limit:
                self.exhausted = True
                continue
            step = (source, clause.index, clause.label, head, depth + 1)
            if body is None:
                yield s1, (step,), depth + 1
            else:
                for s2, p2, d2 in self._solve(body, clause.label, s1, depth + 1, hyps):
                    yield s2, (step,) + p2, d2


def prove(
    kb: KnowledgeBase,
    query: Formula | str,
    seed: Substitution | None = None,
    limit: int = DEFAULT_DEPTH,
) -> ProofSearch:
    """Enumerate answers to ``query`` by depth-first backward chaining."""
    if isinstance(query, str):
        query = parse_query(query)
    else:
        check_query(query)
    return ProofSearch(kb, query, dict(seed or {}), limit)


def entailed_by_mp(
    kb: KnowledgeBase,
    m: Sequence[Term],
    n: Sequence[Term],
    limit: int = DEFAULT_DEPTH,
) -> bool:
    """True iff ``[MP] forall vars. ([MP] m => [MP] n)`` is provable."""
    m, n = tuple(m), tuple(n)
    if not n:
        return True
    body: Formula = Box(Modality.MP, conjoin(n))
    if m:
        body = Implies(Box(Modality.MP, conjoin(m)), body)
    bound = tuple(_vars_of(And((*m, *n))))
    if bound:
        body = Forall(bound, body)
    search = prove(kb, Box(Modality.MP, body), limit=limit)
    found = search.first() is not None
    if not found and search.exhausted:
        log.debug("specificity check hit the depth bound; treating as not entailed")
    return found

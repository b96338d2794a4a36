"""Grammar store: constructions, lexical entries, morphology, and element assembly."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

from . import sexpr
from .prover import FragmentError, conjuncts, formula_from_sexpr
from .sexpr import ParseError, Quoted, SList, Symbol
from .terms import (
    EMPTY_FS,
    FeatureStructure,
    FreshNames,
    Substitution,
    Term,
    UnificationError,
    Var,
    apply_substitution,
    base_name,
    format_term,
    make_term,
    subsumes,
    unify_features,
    unify_sequences,
    unique_variables,
)

ASSERTING = "asserting"
PRESUPPOSING = "presupposing"


class GrammarError(ParseError):
    """Invalid grammar content, reported with the offending entry."""


class ElementError(Exception):
    """An element cannot be assembled (arity mismatch, anchor-feature clash)."""


class MorphGap(Exception):
    """No morphological pattern covers a lexeme with given features."""


@dataclass(frozen=True, slots=True)
class Node:
    """A tree node; ``kind`` is internal, subst, foot, word or anchor."""

    kind: str
    category: str | None = None
    indices: tuple[Term, ...] = ()
    top: FeatureStructure = EMPTY_FS
    bottom: FeatureStructure = EMPTY_FS
    children: tuple[Node, ...] = ()
    word: str | None = None
    lexeme: str | None = None
    ordinal: int = 0
    no_adjoin: bool = False
    origin: int | None = None

    def substitute(self, s: Substitution) -> Node:
        return replace(
            self,
            indices=apply_substitution(self.indices, s),
            top=apply_substitution(self.top, s),
            bottom=apply_substitution(self.bottom, s),
            children=tuple(c.substitute(s) for c in self.children),
        )

    def variables(self) -> list[Var]:
        found: dict[Var, None] = {}
        for n in self.walk():
            for v in unique_variables(
                (*n.indices, *(v for _, v in n.top.items), *(v for _, v in n.bottom.items))
            ):
                found.setdefault(v)
        return list(found)

    def walk(self) -> Iterator[Node]:
        yield self
        for c in self.children:
            yield from c.walk()

    def with_origin(self, origin: int) -> Node:
        return replace(self, origin=origin, children=tuple(c.with_origin(origin) for c in self.children))

    def label(self) -> str:
        if self.kind == "word":
            text = self.lexeme if self.lexeme is not None else (self.word or "ε")
            return f'"{text}"'
        idx = ",".join(format_term(i) for i in self.indices)
        mark = {"subst": "↓", "foot": "*", "anchor": f"◇{self.ordinal}"}.get(self.kind, "")
        return f"{self.category}({idx}){mark}"


@dataclass(frozen=True, slots=True)
class Target:
    category: str
    indices: tuple[Term, ...]
    kind: str  # complement | modifier

    def substitute(self, s: Substitution) -> Target:
        return Target(self.category, apply_substitution(self.indices, s), self.kind)

    def variables(self) -> list[Var]:
        return unique_variables(self.indices)


@dataclass(frozen=True)
class Construction:
    name: str
    params: tuple[Var, ...]
    mode: str
    pragmatics: tuple[Term, ...]
    tree: Node
    line: int | None = None

    @property
    def foot(self) -> Node | None:
        return next((n for n in self.tree.walk() if n.kind == "foot"), None)

    @property
    def auxiliary(self) -> bool:
        return self.foot is not None


@dataclass(frozen=True)
class LexicalEntry:
    names: tuple[str, ...]
    params: tuple[Var, ...]
    target: Target
    content: tuple[Term, ...]
    presupposition: tuple[Term, ...]
    pragmatics: tuple[Term, ...]
    anchor_features: FeatureStructure
    trees: tuple[tuple[str, tuple[Term, ...]], ...]
    line: int | None = None

    @property
    def name(self) -> str:
        return self.names[0]


@dataclass(frozen=True)
class Grammar:
    constructions: dict[str, Construction] = field(default_factory=dict)
    lexicon: tuple[LexicalEntry, ...] = ()
    morphology: dict[str, tuple[tuple[FeatureStructure, str], ...]] = field(default_factory=dict)
    source: str | None = None

    def entry(self, name: str) -> LexicalEntry:
        for e in self.lexicon:
            if e.name == name:
                return e
        raise KeyError(f"no lexical entry named {name!r}")

    def without_entries(self, *names: str) -> Grammar:
        missing = set(names) - {e.name for e in self.lexicon}
        if missing:
            raise KeyError(f"no lexical entries named {sorted(missing)}")
        kept = tuple(e for e in self.lexicon if e.name not in names)
        return Grammar(self.constructions, kept, self.morphology, self.source)

    def realize(self, lexeme: str, features: FeatureStructure) -> str:
        return realize_lexeme(self.morphology, lexeme, features)


@dataclass(frozen=True)
class Element:
    """A lexico-grammatical element ready to combine."""

    lexeme: str
    construction: str
    instance: int
    tree: Node
    target: Target
    assertion: tuple[Term, ...]
    presupposition: tuple[Term, ...]
    pragmatics: tuple[Term, ...]
    # Conditions compared for specificity, in priority order.
    lexical_pragmatics: tuple[Term, ...] = ()
    lexical_presupposition: tuple[Term, ...] = ()
    content: tuple[Term, ...] = ()
    construction_pragmatics: tuple[Term, ...] = ()

    @property
    def auxiliary(self) -> bool:
        return any(n.kind == "foot" for n in self.tree.walk())

    def substitute(self, s: Substitution) -> Element:
        return replace(
            self,
            tree=self.tree.substitute(s),
            target=self.target.substitute(s),
            assertion=apply_substitution(self.assertion, s),
            presupposition=apply_substitution(self.presupposition, s),
            pragmatics=apply_substitution(self.pragmatics, s),
            lexical_pragmatics=apply_substitution(self.lexical_pragmatics, s),
            lexical_presupposition=apply_substitution(self.lexical_presupposition, s),
            content=apply_substitution(self.content, s),
            construction_pragmatics=apply_substitution(self.construction_pragmatics, s),
        )


# --- element assembly -------------------------------------------------------


def instantiate_element(
    lex: LexicalEntry,
    cons: Construction,
    site_indices: tuple[Term, ...] | None = None,
    fresh: FreshNames | None = None,
    instance: int | None = None,
) -> Element:
    """Assemble the element for ``lex`` realized through ``cons``.

    Every variable is renamed with one fresh suffix; when ``site_indices``
    is given, the target indices are then unified with them so the element
    speaks about the site's anaphors.
    """
    args = next((a for name, a in lex.trees if name == cons.name), None)
    if args is None:
        raise ElementError(f"{lex.name} does not list construction {cons.name}")
    if len(args) != len(cons.params):
        raise ElementError(
            f"{lex.name} supplies {len(args)} arguments to {cons.name}, which takes {len(cons.params)}"
        )
    if instance is None:
        instance = (fresh or FreshNames()).next()

    lex_map = {v: Var(f"{base_name(v)}_{instance}") for v in _entry_variables(lex)}
    param_map = {p: apply_substitution(a, lex_map) for p, a in zip(cons.params, args)}
    internal = [v for v in cons.tree.variables() + unique_variables(cons.pragmatics) if v not in param_map]
    cons_map = {**param_map, **{v: Var(f"{base_name(v)}c_{instance}") for v in internal}}

    binding: dict[Var, Term] = {}
    anchor_features = apply_substitution(lex.anchor_features, lex_map)

    def build(node: Node) -> Node:
        nonlocal binding
        node = replace(
            node,
            indices=apply_substitution(node.indices, cons_map),
            top=apply_substitution(node.top, cons_map),
            bottom=apply_substitution(node.bottom, cons_map),
        )
        if node.kind == "anchor":
            if node.ordinal > len(lex.names):
                raise ElementError(f"{cons.name} has anchor {node.ordinal} but {lex.name} names {len(lex.names)} lexemes")
            try:
                features, binding = unify_features(node.top, anchor_features, binding)
            except UnificationError as exc:
                raise ElementError(f"anchor features of {lex.name} clash with {cons.name}: {exc}") from exc
            return Node("word", node.category, node.indices, features, features, lexeme=lex.names[node.ordinal - 1])
        return replace(node, children=tuple(build(c) for c in node.children))

    tree = build(cons.tree)
    content = apply_substitution(lex.content, lex_map)
    presup = apply_substitution(lex.presupposition, lex_map)
    lex_prag = apply_substitution(lex.pragmatics, lex_map)
    cons_prag = apply_substitution(cons.pragmatics, cons_map)
    if cons.mode == PRESUPPOSING:
        assertion, presupposition = (), content + presup
    else:
        assertion, presupposition = content, presup
    element = Element(
        lexeme=lex.name,
        construction=cons.name,
        instance=instance,
        tree=tree,
        target=lex.target.substitute(lex_map),
        assertion=assertion,
        presupposition=presupposition,
        pragmatics=lex_prag + cons_prag,
        lexical_pragmatics=lex_prag,
        lexical_presupposition=presup,
        content=content,
        construction_pragmatics=cons_prag,
    )
    if binding:
        element = element.substitute(binding)
    if site_indices is not None:
        s = unify_sequences(element.target.indices, site_indices, {})
        if s is None:
            raise ElementError(
                f"{lex.name} target indices {_fmt(element.target.indices)} do not match site {_fmt(site_indices)}"
            )
        element = element.substitute(s)
    return element


def _fmt(terms) -> str:
    return "(" + ",".join(format_term(t) for t in terms) + ")"


def _entry_variables(lex: LexicalEntry) -> list[Var]:
    return unique_variables(
        (
            *lex.params,
            *lex.target.indices,
            *lex.content,
            *lex.presupposition,
            *lex.pragmatics,
            *(v for _, v in lex.anchor_features.items),
            *(a for _, args in lex.trees for a in args),
        )
    )


def realize_lexeme(
    morphology: dict[str, tuple[tuple[FeatureStructure, str], ...]], lexeme: str, features: FeatureStructure
) -> str:
    """Spell ``lexeme`` with the first pattern that subsumes ``features``."""
    patterns = morphology.get(lexeme)
    if patterns is None:
        raise MorphGap(f"no morphology for lexeme {lexeme!r}")
    for pattern, text in patterns:
        if subsumes(pattern, features):
            return text
    raise MorphGap(f"no pattern for {lexeme!r} covers {features}")


# --- loading ------------------------------------------------------------------


def load_grammar(path: str | Path) -> Grammar:
    return grammar_from_forms(sexpr.read_file(path), str(path))


def parse_grammar(text: str, source: str | None = None) -> Grammar:
    return grammar_from_forms(sexpr.read_all(text, source), source)


def load_grammars(paths) -> Grammar:
    """Merge several grammar files in order; later files may use earlier constructions."""
    paths = list(paths)
    return _build([(sexpr.read_file(p), str(p)) for p in paths])


def grammar_from_forms(forms: list, source: str | None = None) -> Grammar:
    return _build([(forms, source)])


def _build(files: list[tuple[list, str | None]]) -> Grammar:
    constructions: dict[str, Construction] = {}
    lexicon: list[tuple[LexicalEntry, str | None]] = []
    morphology: dict[str, tuple[tuple[FeatureStructure, str], ...]] = {}
    for forms, source in files:
        _read_forms(forms, source, constructions, lexicon, morphology)
    for lex, source in lexicon:
        _check_entry(lex, constructions, source)
    sources = [src for _, src in files if src]
    return Grammar(constructions, tuple(lex for lex, _ in lexicon), morphology, ", ".join(sources) or None)


def _read_forms(forms, source, constructions, lexicon, morphology) -> None:
    for form in forms:
        if not (isinstance(form, SList) and form and isinstance(form[0], Symbol)):
            raise GrammarError(f"unexpected top-level form {sexpr.render(form)}", sexpr.line_of(form), source)
        kind = str(form[0])
        if kind == "construction":
            cons = _read_construction(form, source)
            if cons.name in constructions:
                raise GrammarError(f"construction {cons.name} defined twice", form.line, source)
            constructions[cons.name] = cons
        elif kind == "lexeme":
            lexicon.append((_read_lexeme(form, source), source))
        elif kind == "morph":
            if len(form) < 2 or not isinstance(form[1], Symbol):
                raise GrammarError("morph needs a lexeme name", form.line, source)
            patterns = []
            for item in form[2:]:
                if not (isinstance(item, SList) and len(item) == 2 and isinstance(item[1], Quoted)):
                    raise GrammarError(f"morph {form[1]}: expected (AVM \"string\")", sexpr.line_of(item), source)
                patterns.append((sexpr.to_avm(item[0], source), str(item[1])))
            morphology[str(form[1])] = tuple(patterns)
        else:
            raise GrammarError(f"unknown form {kind!r}", form.line, source)


def _fields(form: SList, allowed: set[str], what: str, source: str | None) -> dict[str, SList]:
    out: dict[str, SList] = {}
    for item in form[1:]:
        if not (isinstance(item, SList) and item and isinstance(item[0], Symbol)):
            raise GrammarError(f"{what}: malformed field {sexpr.render(item)}", sexpr.line_of(item) or form.line, source)
        key = str(item[0])
        if key not in allowed:
            raise GrammarError(f"{what}: unknown field {key!r}", item.line, source)
        if key in out:
            raise GrammarError(f"{what}: field {key!r} given twice", item.line, source)
        out[key] = item
    return out


def _variables(x, what: str, source: str | None) -> tuple[Var, ...]:
    if not isinstance(x, SList):
        raise GrammarError(f"{what}: expected a variable list", sexpr.line_of(x), source)
    out = tuple(make_term(str(v)) for v in x)
    if not all(isinstance(v, Var) for v in out):
        raise GrammarError(f"{what}: parameters must be variables, got {sexpr.render(x)}", x.line, source)
    return out


def _terms(x, source: str | None) -> tuple[Term, ...]:
    if not isinstance(x, SList):
        raise GrammarError("expected an index list", sexpr.line_of(x), source)
    return tuple(sexpr.to_term(t, source) for t in x)


def _conjunction(item: SList | None, what: str, source: str | None) -> tuple[Term, ...]:
    if item is None:
        return ()
    if len(item) != 2:
        raise GrammarError(f"{what}: expected exactly one formula", item.line, source)
    try:
        return conjuncts(formula_from_sexpr(item[1], source))
    except TypeError as exc:
        raise FragmentError(f"{what}: {exc}", item.line, source) from exc


def _read_node(x, what: str, source: str | None) -> Node:
    if not (isinstance(x, SList) and x and isinstance(x[0], Symbol)):
        raise GrammarError(f"{what}: malformed node {sexpr.render(x)}", sexpr.line_of(x), source)
    kind = str(x[0])
    if kind == "node":
        if len(x) < 5:
            raise GrammarError(f"{what}: node needs CAT (V...) TOP BOT", x.line, source)
        children = tuple(_read_node(c, what, source) for c in x[5:])
        if not children:
            raise GrammarError(f"{what}: internal node {x[1]} has no children", x.line, source)
        return Node("internal", str(x[1]), _terms(x[2], source), sexpr.to_avm(x[3], source), sexpr.to_avm(x[4], source), children)
    if kind in ("subst", "foot"):
        if len(x) != 4:
            raise GrammarError(f"{what}: {kind} needs CAT (V...) TOP", x.line, source)
        return Node(kind, str(x[1]), _terms(x[2], source), sexpr.to_avm(x[3], source))
    if kind == "word":
        if len(x) != 3 or not isinstance(x[1], Quoted):
            raise GrammarError(f'{what}: word needs "string" AVM', x.line, source)
        fs = sexpr.to_avm(x[2], source)
        return Node("word", None, (), fs, fs, word=str(x[1]))
    if kind == "anchor":
        if len(x) != 3 or not str(x[1]).isdigit():
            raise GrammarError(f"{what}: anchor needs an ordinal and an AVM", x.line, source)
        return Node("anchor", None, (), sexpr.to_avm(x[2], source), ordinal=int(x[1]))
    raise GrammarError(f"{what}: unknown node kind {kind!r}", x.line, source)


def _read_construction(form: SList, source: str | None) -> Construction:
    f = _fields(form, {"name", "params", "mode", "pragmatics", "tree"}, "construction", source)
    for key in ("name", "params", "mode", "tree"):
        if key not in f:
            raise GrammarError(f"construction: missing ({key} ...)", form.line, source)
    name = str(f["name"][1])
    what = f"construction {name}"
    mode = str(f["mode"][1])
    if mode not in (ASSERTING, PRESUPPOSING):
        raise GrammarError(f"{what}: mode must be asserting or presupposing", f["mode"].line, source)
    params = _variables(SList(f["params"][1:]), what, source)
    tree = _read_node(f["tree"][1], what, source)
    cons = Construction(name, params, mode, _conjunction(f.get("pragmatics"), what, source), tree, form.line)
    _check_construction(cons, source)
    return cons


def _check_construction(cons: Construction, source: str | None) -> None:
    what = f"construction {cons.name}"
    nodes = list(cons.tree.walk())
    if cons.tree.kind != "internal":
        raise GrammarError(f"{what}: the root must be an internal node", cons.line, source)
    # The imperative frame's speaker appears only in its pragmatics, so those count too.
    indexed = {v for n in nodes for v in unique_variables(n.indices)} | set(unique_variables(cons.pragmatics))
    for p in cons.params:
        if p not in indexed:
            raise GrammarError(f"{what}: parameter {p} occurs in no node's indices", cons.line, source)
    feet = [n for n in nodes if n.kind == "foot"]
    if len(feet) > 1:
        raise GrammarError(f"{what}: more than one foot node", cons.line, source)
    if feet and (feet[0].category != cons.tree.category or feet[0].indices != cons.tree.indices):
        raise GrammarError(f"{what}: foot node must match the root's category and indices", cons.line, source)
    ordinals = sorted(n.ordinal for n in nodes if n.kind == "anchor")
    if ordinals != list(range(1, len(ordinals) + 1)):
        raise GrammarError(f"{what}: anchor ordinals must run 1..k without gaps", cons.line, source)


def _read_lexeme(form: SList, source: str | None) -> LexicalEntry:
    allowed = {"name", "params", "target", "content", "presup", "pragmatics", "anchor-features", "trees"}
    f = _fields(form, allowed, "lexeme", source)
    for key in ("name", "params", "target", "trees"):
        if key not in f:
            raise GrammarError(f"lexeme: missing ({key} ...)", form.line, source)
    names = tuple(str(n) for n in f["name"][1:])
    if not names:
        raise GrammarError("lexeme: empty name list", f["name"].line, source)
    what = f"lexeme {names[0]}"
    params = _variables(SList(f["params"][1:]), what, source)
    t = f["target"]
    if len(t) != 4 or str(t[3]) not in ("complement", "modifier"):
        raise GrammarError(f"{what}: target must be (target CAT (V...) complement|modifier)", t.line, source)
    target = Target(str(t[1]), _terms(t[2], source), str(t[3]))
    features = sexpr.to_avm(f["anchor-features"][1], source) if "anchor-features" in f else EMPTY_FS
    trees = []
    for item in f["trees"][1:]:
        if not (isinstance(item, SList) and item and isinstance(item[0], Symbol)):
            raise GrammarError(f"{what}: malformed tree reference {sexpr.render(item)}", f["trees"].line, source)
        trees.append((str(item[0]), tuple(sexpr.to_term(a, source) for a in item[1:])))
    return LexicalEntry(
        names,
        params,
        target,
        _conjunction(f.get("content"), what, source),
        _conjunction(f.get("presup"), what, source),
        _conjunction(f.get("pragmatics"), what, source),
        features,
        tuple(trees),
        form.line,
    )


def _check_entry(lex: LexicalEntry, constructions: dict[str, Construction], source: str | None) -> None:
    what = f"lexeme {lex.name}"
    for name, args in lex.trees:
        cons = constructions.get(name)
        if cons is None:
            raise GrammarError(f"{what}: unknown construction {name!r}", lex.line, source)
        if len(args) != len(cons.params):
            raise GrammarError(
                f"{what}: {name} takes {len(cons.params)} parameters, {len(args)} given", lex.line, source
            )
        if cons.tree.category != lex.target.category:
            raise GrammarError(
                f"{what}: target category {lex.target.category} does not match {name} root {cons.tree.category}",
                lex.line,
                source,
            )
        if cons.auxiliary != (lex.target.kind == "modifier"):
            needed = "an auxiliary" if lex.target.kind == "modifier" else "an initial"
            raise GrammarError(f"{what}: a {lex.target.kind} target needs {needed} tree; {name} is not", lex.line, source)

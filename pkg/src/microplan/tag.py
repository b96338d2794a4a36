"""Feature-based tree-adjoining operations over immutable derived trees."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping

from .grammar import ElementError, Grammar, Node, instantiate_element
from .terms import (
    EMPTY_FS,
    FeatureStructure,
    Term,
    UnificationError,
    Var,
    apply_substitution,
    format_term,
    resolve,
    unify_features,
    unify_sequences,
)

Address = tuple[int, ...]


class TagError(Exception):
    """An operation is not licensed at the requested site."""


class ReplayError(Exception):
    """A recorded derivation no longer applies to the grammar."""


@dataclass(frozen=True)
class Site:
    address: Address
    kind: str  # substitution | adjunction
    category: str
    indices: tuple[Term, ...]

    def describe(self) -> str:
        idx = ",".join(format_term(i) for i in self.indices)
        mark = "↓" if self.kind == "substitution" else ""
        return f"{self.category}({idx}){mark}@{format_address(self.address)}"


def format_address(address: Address) -> str:
    return ".".join(map(str, address)) or "root"


@dataclass(frozen=True)
class DerivedTree:
    root: Node
    binding: Mapping[Var, Term] = field(default_factory=dict)

    def resolve(self, x):
        return apply_substitution(x, self.binding) if self.binding else x


def initial_tree(category: str, indices: tuple[Term, ...], top: FeatureStructure = EMPTY_FS) -> DerivedTree:
    """A lone substitution site for the problem's root node."""
    return DerivedTree(Node("subst", category, tuple(indices), top, origin=0))


def walk(node: Node, address: Address = ()) -> Iterator[tuple[Address, Node]]:
    yield address, node
    for i, child in enumerate(node.children):
        yield from walk(child, address + (i,))


def node_at(root: Node, address: Address) -> Node:
    node = root
    for i in address:
        if i >= len(node.children):
            raise TagError(f"no node at address {format_address(address)}")
        node = node.children[i]
    return node


def _replace_at(root: Node, address: Address, new: Node) -> Node:
    if not address:
        return new
    head, rest = address[0], address[1:]
    children = list(root.children)
    children[head] = _replace_at(children[head], rest, new)
    return replace(root, children=tuple(children))


def _is_null(node: Node) -> bool:
    """True when every leaf under ``node`` is an empty given word."""
    return all(
        n.kind == "word" and n.lexeme is None and not n.word for n in node.walk() if not n.children
    )


def open_sites(tree: DerivedTree) -> list[Site]:
    """Unfilled substitution sites and adjunction-eligible nodes, in preorder."""
    sites = []
    for address, node in walk(tree.root):
        if node.kind == "subst":
            sites.append(Site(address, "substitution", node.category, tree.resolve(node.indices)))
        elif node.kind == "internal" and not node.no_adjoin and not _is_null(node):
            sites.append(Site(address, "adjunction", node.category, tree.resolve(node.indices)))
    return sites


def _unify_indices(a: tuple[Term, ...], b: tuple[Term, ...], binding: Mapping[Var, Term], what: str):
    s = unify_sequences(a, b, binding)
    if s is None:
        raise TagError(f"{what}: indices {_fmt(a, binding)} do not unify with {_fmt(b, binding)}")
    return s


def _fmt(terms: tuple[Term, ...], binding) -> str:
    return "(" + ",".join(format_term(resolve(t, binding)) for t in terms) + ")"


def substitute(host: DerivedTree, address: Address, init: Node) -> DerivedTree:
    """Merge the root of an initial tree into the substitution site at ``address``."""
    site = node_at(host.root, address)
    if site.kind != "subst":
        raise TagError(f"node at {format_address(address)} is not a substitution site")
    if any(n.kind == "foot" for n in init.walk()):
        raise TagError("an auxiliary tree cannot be substituted")
    if init.category != site.category:
        raise TagError(f"category {init.category} cannot fill a {site.category} site")
    s = _unify_indices(init.indices, site.indices, host.binding, "substitution")
    try:
        top, s = unify_features(site.top, init.top, s)
    except UnificationError as exc:
        raise TagError(f"substitution feature clash: {exc}") from exc
    return DerivedTree(_replace_at(host.root, address, replace(init, top=top)), s)


def adjoin(host: DerivedTree, address: Address, aux: Node) -> DerivedTree:
    """Splice the subtree at ``address`` under the foot of ``aux``."""
    site = node_at(host.root, address)
    if site.kind != "internal":
        raise TagError(f"node at {format_address(address)} is not an internal node")
    if site.no_adjoin:
        raise TagError(f"node at {format_address(address)} does not admit adjoining")
    feet = [(a, n) for a, n in walk(aux) if n.kind == "foot"]
    if len(feet) != 1:
        raise TagError("an auxiliary tree needs exactly one foot node")
    foot_address, foot = feet[0]
    if not (aux.category == foot.category == site.category):
        raise TagError(f"auxiliary {aux.category} tree cannot adjoin at {site.category}")
    s = _unify_indices(aux.indices, site.indices, host.binding, "adjoining")
    s = _unify_indices(foot.indices, site.indices, s, "adjoining")
    try:
        top, s = unify_features(site.top, aux.top, s)
        bottom, s = unify_features(site.bottom, foot.top, s)
    except UnificationError as exc:
        raise TagError(f"adjoining feature clash: {exc}") from exc
    displaced = replace(site, top=foot.top, bottom=bottom, no_adjoin=True)
    spliced = replace(_replace_at(aux, foot_address, displaced), top=top)
    return DerivedTree(_replace_at(host.root, address, spliced), s)


@dataclass(frozen=True)
class Flaw:
    kind: str  # open-site | feature-clash | dangling
    category: str | None
    indices: tuple[Term, ...]
    address: Address

    @property
    def identity(self) -> tuple:
        return self.kind, self.category, self.indices

    def describe(self) -> str:
        idx = ",".join(format_term(i) for i in self.indices)
        return f"{self.kind} {self.category}({idx}) at {format_address(self.address)}"


def check_complete(tree: DerivedTree) -> tuple[bool, list[Flaw]]:
    """Report open substitution sites and nodes whose top and bottom disagree."""
    flaws = []
    for address, node in walk(tree.root):
        indices = tree.resolve(node.indices)
        if node.kind == "subst":
            flaws.append(Flaw("open-site", node.category, indices, address))
        elif node.kind in ("foot", "anchor"):
            flaws.append(Flaw("dangling", node.category, indices, address))
        elif node.kind == "internal":
            try:
                unify_features(node.top, node.bottom, tree.binding)
            except UnificationError:
                flaws.append(Flaw("feature-clash", node.category, indices, address))
    return not flaws, flaws


def leaf_words(node: Node, grammar: Grammar, binding: Mapping[Var, Term] | None = None) -> list[str]:
    """Left-to-right words of a subtree; open sites contribute nothing."""
    out = []
    for n in node.walk():
        if n.kind != "word":
            continue
        if n.lexeme is not None:
            features = apply_substitution(n.top, binding) if binding else n.top
            text = grammar.realize(n.lexeme, features)
        else:
            text = n.word or ""
        out.extend(text.lower().split())
    return out


def surface_tokens(tree: DerivedTree, grammar: Grammar) -> list[str]:
    return leaf_words(tree.root, grammar, tree.binding)


def tree_to_dict(tree: DerivedTree) -> dict:
    """Serializable form with every binding applied."""

    def convert(node: Node) -> dict:
        out: dict = {"kind": node.kind}
        if node.category is not None:
            out["category"] = node.category
        if node.indices:
            out["indices"] = [format_term(t) for t in tree.resolve(node.indices)]
        if node.kind == "word":
            if node.lexeme is not None:
                out["lexeme"] = node.lexeme
            else:
                out["word"] = node.word
        top = tree.resolve(node.top)
        bottom = tree.resolve(node.bottom)
        if len(top):
            out["top"] = {k: format_term(v) for k, v in top.items}
        if len(bottom) and node.kind == "internal":
            out["bottom"] = {k: format_term(v) for k, v in bottom.items}
        if node.no_adjoin:
            out["no_adjoin"] = True
        if node.children:
            out["children"] = [convert(c) for c in node.children]
        return out

    return convert(tree.root)


def render_tree(tree: DerivedTree) -> str:
    lines = []

    def visit(node: Node, depth: int) -> None:
        label = node.label() if node.kind == "word" else node.substitute(tree.binding).label()
        lines.append("  " * depth + label + (" [NA]" if node.no_adjoin else ""))
        for c in node.children:
            visit(c, depth + 1)

    visit(tree.root, 0)
    return "\n".join(lines)


# --- derivation trees -------------------------------------------------------


@dataclass(frozen=True)
class DerivationStep:
    step: int
    lexeme: str
    construction: str
    instance: int
    operation: str  # substitute | adjoin
    site: Address
    parent: int  # step that contributed the site node; 0 is the problem root


@dataclass(frozen=True)
class RootSpec:
    category: str
    indices: tuple[Term, ...]
    top: FeatureStructure = EMPTY_FS


@dataclass(frozen=True)
class Derivation:
    root: RootSpec | None
    steps: tuple[DerivationStep, ...] = ()

    def extended(self, step: DerivationStep) -> Derivation:
        return Derivation(self.root, self.steps + (step,))

    def to_dict(self) -> dict | None:
        """Nested records, one per element, children in step order."""
        if not self.steps:
            return None
        records = {
            s.step: {
                "element": {"lexeme": s.lexeme, "construction": s.construction, "instance": s.instance},
                "operation": s.operation,
                "site": list(s.site),
                "step": s.step,
                "children": [],
            }
            for s in self.steps
        }
        for s in self.steps[1:]:
            records[s.parent]["children"].append(records[s.step])
        top = records[self.steps[0].step]
        if self.root is not None:
            top["root_site"] = {
                "category": self.root.category,
                "indices": [format_term(t) for t in self.root.indices],
                "top": {k: format_term(v) for k, v in self.root.top.items},
            }
        return top

    @classmethod
    def from_dict(cls, data: dict) -> Derivation:
        from .terms import make_term

        try:
            root = None
            if "root_site" in data:
                rs = data["root_site"]
                root = RootSpec(
                    rs["category"],
                    tuple(make_term(i) for i in rs["indices"]),
                    FeatureStructure.from_pairs((k, make_term(v)) for k, v in rs.get("top", {}).items()),
                )
            steps = []

            def visit(rec: dict, parent: int) -> None:
                el = rec["element"]
                steps.append(
                    DerivationStep(
                        int(rec["step"]),
                        el["lexeme"],
                        el["construction"],
                        int(el["instance"]),
                        rec["operation"],
                        tuple(int(i) for i in rec["site"]),
                        parent,
                    )
                )
                for child in rec.get("children", []):
                    visit(child, int(rec["step"]))

            visit(data, 0)
        except (KeyError, TypeError, ValueError) as exc:
            raise ReplayError(f"malformed derivation record: {exc!r}") from exc
        return cls(root, tuple(sorted(steps, key=lambda s: s.step)))


def find_entry(grammar: Grammar, lexeme: str, construction: str):
    for lex in grammar.lexicon:
        if lex.name == lexeme and any(name == construction for name, _ in lex.trees):
            return lex, grammar.constructions[construction]
    raise ReplayError(f"grammar has no entry {lexeme} with construction {construction}")


def apply_step(tree: DerivedTree, grammar: Grammar, step: DerivationStep) -> DerivedTree:
    lex, cons = find_entry(grammar, step.lexeme, step.construction)
    try:
        site = node_at(tree.root, step.site)
        element = instantiate_element(lex, cons, tree.resolve(site.indices), instance=step.instance)
        aux = element.tree.with_origin(step.step)
        if step.operation == "substitute":
            return substitute(tree, step.site, aux)
        if step.operation == "adjoin":
            return adjoin(tree, step.site, aux)
    except (TagError, ElementError) as exc:
        raise ReplayError(f"step {step.step} ({step.lexeme}) no longer applies: {exc}") from exc
    raise ReplayError(f"unknown operation {step.operation!r}")


def replay_derivation(derivation: Derivation, grammar: Grammar) -> DerivedTree:
    """Rebuild the derived tree by re-applying every recorded operation in order."""
    steps = list(derivation.steps)
    if derivation.root is not None:
        tree = initial_tree(derivation.root.category, derivation.root.indices, derivation.root.top)
    else:
        if not steps:
            raise ReplayError("empty derivation")
        first = steps.pop(0)
        lex, cons = find_entry(grammar, first.lexeme, first.construction)
        try:
            element = instantiate_element(lex, cons, instance=first.instance)
        except ElementError as exc:
            raise ReplayError(str(exc)) from exc
        tree = DerivedTree(element.tree.with_origin(first.step))
    for step in steps:
        tree = apply_step(tree, grammar, step)
    return tree

"""Communicative-intent bookkeeping and the hearer's constraint-network model."""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from .prover import (
    DEFAULT_DEPTH,
    And,
    Box,
    Implies,
    KnowledgeBase,
    Modality,
    ProofStep,
    conjoin,
    prove,
)
from .terms import Compound, Term, Var, apply_substitution, format_term, is_ground, resolve, unify, unique_variables

DEFAULT_TUPLE_CAP = 1_000_000


class UnresolvedAnaphor(Exception):
    """A variable has no intended referent."""


class NetworkTooLarge(Exception):
    """Enumerating a relation would exceed the tuple cap."""


@dataclass(frozen=True)
class Link:
    """One conjunct tied to the proof that supports its intended instance."""

    kind: str  # assertion | presupposition | pragmatics
    conjunct: Term
    instance: Term
    modality: Modality
    proof: tuple[ProofStep, ...]

    def to_dict(self) -> dict:
        return {
            "conjunct": format_term(self.conjunct),
            "instance": format_term(self.instance),
            "modality": str(self.modality),
            "proof": [step.describe() for step in self.proof],
        }


@dataclass(frozen=True)
class UpdateCheck:
    update: Term
    achieved: bool
    proof: tuple[ProofStep, ...] = ()

    def to_dict(self) -> dict:
        return {
            "update": format_term(self.update),
            "achieved": self.achieved,
            "proof": [step.describe() for step in self.proof],
        }


def _bind(sigma: Mapping[Var, Term], answer_sub: Mapping[Var, Term], atom: Term) -> dict[Var, Term]:
    out = dict(sigma)
    for v in unique_variables(atom):
        if v not in out:
            value = answer_sub.get(v, v)
            if value != v and is_ground(value):
                out[v] = value
    return out


def _link_chain(
    kb: KnowledgeBase,
    items: Sequence[tuple[str, Term, Modality]],
    sigma: dict[Var, Term],
    limit: int,
) -> Iterator[tuple[dict[Var, Term], tuple[Link, ...]]]:
    """Prove each conjunct in turn, backtracking across them, extending sigma."""
    if not items:
        yield sigma, ()
        return
    (kind, atom, modality), rest = items[0], items[1:]
    query = Box(modality, apply_substitution(atom, sigma))
    for answer in prove(kb, query, limit=limit):
        extended = _bind(sigma, answer.substitution, atom)
        link = Link(kind, atom, apply_substitution(atom, extended), modality, answer.proof)
        for final, links in _link_chain(kb, rest, extended, limit):
            yield final, (link,) + links


def link_assertion(
    kb: KnowledgeBase, assertion: Sequence[Term], sigma: Mapping[Var, Term], limit: int = DEFAULT_DEPTH
) -> tuple[tuple[Link, ...], dict[Var, Term]] | None:
    """Prove each assertion conjunct under [S]; ``None`` when some conjunct fails."""
    items = [("assertion", a, Modality.S) for a in assertion]
    found = next(_link_chain(kb, items, dict(sigma), limit), None)
    if found is None:
        return None
    return found[1], found[0]


def link_context(
    kb: KnowledgeBase,
    presupposition: Sequence[Term],
    pragmatics: Sequence[Term],
    sigma: Mapping[Var, Term],
    limit: int = DEFAULT_DEPTH,
) -> tuple[tuple[Link, ...], tuple[Link, ...], dict[Var, Term]] | None:
    """Prove presupposition then pragmatics under [CR], refining sigma by the first answer."""
    items = [("presupposition", a, Modality.CR) for a in presupposition]
    items += [("pragmatics", a, Modality.CR) for a in pragmatics]
    found = next(_link_chain(kb, items, dict(sigma), limit), None)
    if found is None:
        return None
    final, links = found
    n = len(presupposition)
    return links[:n], links[n:], final


def _skolemize(atoms: Sequence[Term]) -> tuple[Term, ...]:
    rigid = {v: f"#{v.name}" for v in unique_variables(tuple(atoms))}
    return apply_substitution(tuple(atoms), rigid)


def check_update(
    kb: KnowledgeBase,
    assertion: Sequence[Term],
    sigma: Mapping[Var, Term],
    update: Term,
    limit: int = DEFAULT_DEPTH,
) -> UpdateCheck:
    """Does adding the instantiated assertion to the record also add ``update``?"""
    update = apply_substitution(update, sigma)
    premises = _skolemize(apply_substitution(tuple(assertion), sigma))
    if premises:
        body = Implies(Box(Modality.CR, conjoin(premises)), Box(Modality.CR, update))
    else:
        body = Box(Modality.CR, update)
    answer = prove(kb, Box(Modality.CR, body), limit=limit).first()
    if answer is None:
        return UpdateCheck(update, False)
    return UpdateCheck(update, True, answer.proof)


# --- hearer model ---------------------------------------------------------------


class ContextSets:
    """Context set lookup: declared sets win; otherwise a referent the record
    mentions competes with everything the record mentions, and a referent the
    record never mentions competes with nothing."""

    def __init__(self, kb: KnowledgeBase) -> None:
        self.kb = kb
        self._inventory = kb.inventory
        self._known = frozenset(self._inventory)

    def from_record(self, referent: Term) -> bool:
        """False for hearer-new referents, which nothing in the record competes with."""
        return self.kb.declared_context_set(referent) is not None or referent in self._known

    def __call__(self, referent: Term) -> tuple[Term, ...]:
        declared = self.kb.declared_context_set(referent)
        if declared is not None:
            return declared
        if referent in self._known:
            return self._inventory
        return (referent,)


def candidate_space(
    context_sets, sigma: Mapping[Var, Term], variables: Sequence[Var]
) -> dict[Var, tuple[Term, ...]]:
    """Per-variable candidate domains D(sigma(X)); their product is the space."""
    out = {}
    for v in variables:
        if v not in sigma:
            raise UnresolvedAnaphor(f"variable {v} has no intended referent")
        out[v] = tuple(context_sets(sigma[v]))
    return out


def space_size(domains: Mapping[Var, Sequence[Term]]) -> int:
    return math.prod(len(d) for d in domains.values())


@dataclass(frozen=True)
class Relation:
    conjunct: Term
    variables: tuple[Var, ...]
    tuples: frozenset[tuple[Term, ...]]


@dataclass
class ConstraintNetwork:
    domains: dict[Var, tuple[Term, ...]]
    relations: list[Relation] = field(default_factory=list)
    unresolved: tuple[Var, ...] = ()

    @property
    def variables(self) -> tuple[Var, ...]:
        return tuple(self.domains)

    def ambiguous(self) -> dict[Var, tuple[Term, ...]]:
        return {v: d for v, d in self.domains.items() if len(d) > 1}

    def to_dict(self) -> dict:
        out = {v.name: [format_term(t) for t in d] for v, d in self.domains.items()}
        for v in self.unresolved:
            out[v.name] = None
        return out


def _canonical(atom: Term) -> tuple[Term, tuple[Var, ...]]:
    variables = unique_variables(atom)
    renaming = {v: Var(f"_Q{i}") for i, v in enumerate(variables)}
    return apply_substitution(atom, renaming), tuple(renaming.values())


class RelationCache:
    """Memoizes the open [CR] answers of each conjunct shape."""

    def __init__(self, kb: KnowledgeBase, limit: int = DEFAULT_DEPTH) -> None:
        self.kb = kb
        self.limit = limit
        self._answers: dict[Term, list[tuple[Term, ...]]] = {}

    def answers(self, atom: Term) -> tuple[tuple[Var, ...], list[tuple[Term, ...]]]:
        canon, cvars = _canonical(atom)
        if canon not in self._answers:
            found = []
            for answer in prove(self.kb, Box(Modality.CR, canon), limit=self.limit):
                row = tuple(answer.substitution.get(v, v) for v in cvars)
                if row not in found:
                    found.append(row)
            self._answers[canon] = found
        return tuple(unique_variables(atom)), self._answers[canon]


def build_relation(
    cache: RelationCache,
    atom: Term,
    domains: Mapping[Var, Sequence[Term]],
    cap: int = DEFAULT_TUPLE_CAP,
) -> Relation:
    """R_i: tuples of candidate values under which the conjunct is provable."""
    variables, rows = cache.answers(atom)
    if math.prod(len(domains[v]) for v in variables) > cap:
        raise NetworkTooLarge(f"relation for {format_term(atom)} exceeds {cap} tuples")
    tuples: set[tuple[Term, ...]] = set()
    for row in rows:
        options = []
        for v, pattern in zip(variables, row):
            if is_ground(pattern):
                options.append([pattern] if pattern in domains[v] else [])
            else:
                options.append([d for d in domains[v] if unify(pattern, d, {}) is not None])
        for combo in itertools.product(*options):
            if all(is_ground(p) for p in row) or unify(Compound("", row), Compound("", combo), {}) is not None:
                tuples.add(combo)
    return Relation(atom, variables, frozenset(tuples))


def _revise(relation: Relation, domains: dict[Var, tuple[Term, ...]]) -> list[Var]:
    live = [t for t in relation.tuples if all(val in domains[v] for v, val in zip(relation.variables, t))]
    changed = []
    for i, v in enumerate(relation.variables):
        supported = {t[i] for t in live}
        kept = tuple(d for d in domains[v] if d in supported)
        if len(kept) != len(domains[v]):
            domains[v] = kept
            changed.append(v)
    return changed


def gac_filter(
    kb: KnowledgeBase,
    presupposition: Sequence[Term],
    domains: Mapping[Var, Sequence[Term]],
    cache: RelationCache | None = None,
    cap: int = DEFAULT_TUPLE_CAP,
    unresolved: Sequence[Var] = (),
) -> ConstraintNetwork:
    """Prune candidate domains to generalized arc consistency."""
    cache = cache or RelationCache(kb)
    current = {v: tuple(d) for v, d in domains.items()}
    blocked = set(unresolved)
    relations = [
        build_relation(cache, atom, current, cap)
        for atom in presupposition
        if not blocked.intersection(unique_variables(atom))
    ]
    for r in relations:
        if not r.variables and not r.tuples:
            # An unprovable ground conjunct rules out every reading.
            current = {v: () for v in current}
    watchers: dict[Var, list[int]] = {}
    for i, r in enumerate(relations):
        for v in r.variables:
            watchers.setdefault(v, []).append(i)
    queue = deque(range(len(relations)))
    queued = set(queue)
    while queue:
        i = queue.popleft()
        queued.discard(i)
        for v in _revise(relations[i], current):
            for j in watchers[v]:
                if j != i and j not in queued:
                    queue.append(j)
                    queued.add(j)
    return ConstraintNetwork(current, relations, tuple(unresolved))


def recognized(network: ConstraintNetwork, sigma: Mapping[Var, Term]) -> bool:
    """True iff every domain is exactly the intended referent."""
    if network.unresolved:
        return False
    return all(d == (sigma.get(v),) for v, d in network.domains.items())


def recognition_status(network: ConstraintNetwork, sigma: Mapping[Var, Term]) -> str:
    if network.unresolved:
        return "unresolved"
    if any(len(d) > 1 for d in network.domains.values()):
        return "ambiguous"
    if any(len(d) == 0 for d in network.domains.values()):
        return "inconsistent"
    if not recognized(network, sigma):
        return "misidentified"
    return "recognized"


def hearer_network(
    kb: KnowledgeBase,
    anaphors: Sequence[Var],
    presupposition: Sequence[Term],
    sigma: Mapping[Var, Term],
    context_sets: ContextSets | None = None,
    cache: RelationCache | None = None,
    cap: int = DEFAULT_TUPLE_CAP,
) -> ConstraintNetwork:
    """Candidate space over ``anaphors`` pruned by the presupposition."""
    context_sets = context_sets or ContextSets(kb)
    resolved = [v for v in anaphors if v in sigma and is_ground(sigma[v])]
    unresolved = [v for v in anaphors if v not in resolved]
    domains = candidate_space(context_sets, sigma, resolved)
    return gac_filter(kb, presupposition, domains, cache, cap, unresolved)


def meaning_anaphors(*conjunctions: Sequence[Term]) -> list[Var]:
    return unique_variables(tuple(a for c in conjunctions for a in c))


def instance_text(atoms: Sequence[Term], sigma: Mapping[Var, Term]) -> list[str]:
    return [format_term(resolve(a, sigma)) for a in atoms]


__all__ = [
    "And",
    "ConstraintNetwork",
    "ContextSets",
    "Link",
    "NetworkTooLarge",
    "Relation",
    "RelationCache",
    "UnresolvedAnaphor",
    "UpdateCheck",
    "build_relation",
    "candidate_space",
    "check_update",
    "gac_filter",
    "hearer_network",
    "link_assertion",
    "link_context",
    "meaning_anaphors",
    "recognition_status",
    "recognized",
    "space_size",
]

"""Greedy microplanning: grow one derivation until its intent is complete and recognizable."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from . import sexpr
from .grammar import ElementError, Grammar, instantiate_element
from .interpretation import (
    ConstraintNetwork,
    ContextSets,
    Link,
    NetworkTooLarge,
    RelationCache,
    UpdateCheck,
    check_update,
    hearer_network,
    link_assertion,
    link_context,
    meaning_anaphors,
    recognition_status,
    recognized,
)
from .prover import DEFAULT_DEPTH, Box, KnowledgeBase, conjuncts, entailed_by_mp, formula_from_sexpr, prove
from .sexpr import ParseError, SList, Symbol
from .tag import (
    Derivation,
    DerivationStep,
    DerivedTree,
    Flaw,
    ReplayError,
    RootSpec,
    Site,
    TagError,
    adjoin,
    check_complete,
    format_address,
    initial_tree,
    node_at,
    open_sites,
    replay_derivation,
    substitute,
    surface_tokens,
)
from .terms import (
    EMPTY_FS,
    Term,
    Var,
    apply_substitution,
    format_term,
    is_ground,
    resolve,
    unique_variables,
)

log = logging.getLogger(__name__)


class ProblemError(ParseError):
    """A problem file is malformed or inconsistent with its grammar and KB."""


# --- problem intake -----------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    root: RootSpec
    sigma0: tuple[tuple[Var, Term], ...]
    updates: tuple[Term, ...]
    source: str | None = None


def load_problem(path: str | Path) -> ProblemSpec:
    return problem_from_forms(sexpr.read_file(path), str(path))


def parse_problem(text: str, source: str | None = None) -> ProblemSpec:
    return problem_from_forms(sexpr.read_all(text, source), source)


def problem_from_forms(forms: list, source: str | None = None) -> ProblemSpec:
    problems = [f for f in forms if isinstance(f, SList) and f and f[0] == Symbol("problem")]
    if len(problems) != 1:
        raise ProblemError("expected exactly one (problem ...) form", None, source)
    form = problems[0]
    fields: dict[str, SList] = {}
    for item in form[1:]:
        if not (isinstance(item, SList) and item and isinstance(item[0], Symbol)):
            raise ProblemError("problem fields must be (name ...) lists", sexpr.line_of(item), source)
        fields[str(item[0])] = item
    unknown = set(fields) - {"root", "sigma0", "updates"}
    if unknown or "root" not in fields:
        raise ProblemError(f"problem needs a root field; unknown fields {sorted(unknown)}", form.line, source)
    root = fields["root"]
    if len(root) != 4 or not isinstance(root[2], SList):
        raise ProblemError("root is (root CATEGORY (VARS...) FEATURES)", root.line, source)
    indices = tuple(sexpr.to_term(x) for x in root[2])
    if not all(isinstance(v, Var) for v in indices):
        raise ProblemError("root indices must be variables", root.line, source)
    spec_root = RootSpec(str(root[1]), indices, sexpr.to_avm(root[3]) if root[3] else EMPTY_FS)
    pairs = []
    for item in fields.get("sigma0", SList())[1:]:
        if not (isinstance(item, SList) and len(item) == 2):
            raise ProblemError("sigma0 entries are (VAR CONSTANT)", sexpr.line_of(item), source)
        var, value = sexpr.to_term(item[0]), sexpr.to_term(item[1])
        if not isinstance(var, Var) or not is_ground(value):
            raise ProblemError("sigma0 maps a variable to a ground term", item.line, source)
        pairs.append((var, value))
    updates: list[Term] = []
    for item in fields.get("updates", SList())[1:]:
        updates.extend(conjuncts(formula_from_sexpr(item, source)))
    return ProblemSpec(spec_root, tuple(pairs), tuple(updates), source)


@dataclass(frozen=True)
class MicroplanningProblem:
    grammar: Grammar
    kb: KnowledgeBase
    spec: ProblemSpec
    depth: int = DEFAULT_DEPTH

    @property
    def updates(self) -> tuple[Term, ...]:
        return self.spec.updates

    @property
    def sigma0(self) -> dict[Var, Term]:
        return dict(self.spec.sigma0)

    def validate(self) -> None:
        unknown = [v for _, v in self.spec.sigma0 if v not in self.kb.constants]
        if unknown:
            raise ProblemError(
                f"sigma0 refers to constants the KB never mentions: {', '.join(map(format_term, unknown))}",
                None,
                self.spec.source,
            )
        if self.grammar.constructions:
            category = self.spec.root.category
            known = {n.category for c in self.grammar.constructions.values() for n in c.tree.walk()}
            if category not in known:
                raise ProblemError(f"root category {category} does not occur in the grammar", None, self.spec.source)

    def default_steps(self) -> int:
        return 4 * (len(self.updates) + 1) + 8


# --- states and ranking ---------------------------------------------------------


@dataclass(frozen=True)
class Specificity:
    """Conditions of the last-added element, instantiated by sigma, in comparison order."""

    lexical_pragmatics: tuple[Term, ...] = ()
    lexical_presupposition: tuple[Term, ...] = ()
    content: tuple[Term, ...] = ()
    construction_pragmatics: tuple[Term, ...] = ()

    def fields(self) -> tuple[tuple[Term, ...], ...]:
        return (self.lexical_pragmatics, self.lexical_presupposition, self.content, self.construction_pragmatics)


@dataclass(frozen=True)
class RankKey:
    unachieved: int
    ambiguity: tuple[int, ...]
    salience: tuple[int, ...]
    flaws: tuple[int, int]
    specificity: Specificity = field(default_factory=Specificity)

    def prefix(self) -> tuple:
        return (self.unachieved, self.ambiguity, self.salience, self.flaws)

    def to_dict(self) -> dict:
        return {
            "unachieved": self.unachieved,
            "ambiguity": list(self.ambiguity),
            "salience": list(self.salience),
            "flaws": list(self.flaws),
        }


@dataclass(frozen=True)
class SearchState:
    tree: DerivedTree
    derivation: Derivation
    assertion: tuple[Term, ...]
    presupposition: tuple[Term, ...]
    pragmatics: tuple[Term, ...]
    sigma: Mapping[Var, Term]
    assertion_links: tuple[Link, ...]
    presupposition_links: tuple[Link, ...]
    pragmatics_links: tuple[Link, ...]
    updates: tuple[UpdateCheck, ...]
    network: ConstraintNetwork
    flaws: tuple[Flaw, ...]
    fixed_flaw: bool
    key: RankKey

    @property
    def complete(self) -> bool:
        return not self.flaws

    @property
    def unachieved(self) -> tuple[Term, ...]:
        return tuple(u.update for u in self.updates if not u.achieved)

    @property
    def last_step(self) -> DerivationStep | None:
        return self.derivation.steps[-1] if self.derivation.steps else None


FACTOR_NAMES = ("updates", "ambiguity", "salience", "flaws", "specificity")


class Planner:
    """Holds one problem with its per-run caches; every method is deterministic."""

    def __init__(self, problem: MicroplanningProblem) -> None:
        problem.validate()
        self.problem = problem
        self.kb = problem.kb
        self.grammar = problem.grammar
        self.depth = problem.depth
        self.context_sets = ContextSets(self.kb)
        self.relations = RelationCache(self.kb, self.depth)
        self._updates: dict[tuple, UpdateCheck] = {}
        self._entails: dict[tuple, bool] = {}
        self.rejections: list[str] = []

    # -- state construction

    def init_state(self) -> SearchState:
        spec = self.problem.spec
        tree = initial_tree(spec.root.category, spec.root.indices, spec.root.top)
        sigma = self.problem.sigma0
        network = hearer_network(self.kb, list(sigma), (), sigma, self.context_sets, self.relations)
        _, flaws = check_complete(tree)
        updates = tuple(UpdateCheck(u, False) for u in self.problem.updates)
        return self._finish(
            tree, Derivation(spec.root), (), (), (), sigma, (), (), (), updates, network, tuple(flaws), False, Specificity()
        )

    def _finish(self, tree, derivation, a, p, q, sigma, al, pl, ql, updates, network, flaws, fixed, spec):
        key = RankKey(
            unachieved=sum(not u.achieved for u in updates),
            ambiguity=tuple(sorted(len(d) for d in network.domains.values() if len(d) >= 2)),
            salience=tuple(
                sorted(
                    len(self.context_sets(r))
                    for r in dict.fromkeys(sigma[v] for v in network.domains)
                    if self.context_sets.from_record(r)
                )
            ),
            flaws=(len(flaws), 0 if fixed else 1),
            specificity=spec,
        )
        return SearchState(tree, derivation, a, p, q, dict(sigma), al, pl, ql, updates, network, flaws, fixed, key)

    def expand(self, state: SearchState) -> list[SearchState]:
        """Neighbors in enumeration order: sites in preorder, then grammar order."""
        out = []
        for site in open_sites(state.tree):
            for lex in self.grammar.lexicon:
                if lex.target.category != site.category:
                    continue
                for cons_name, _ in lex.trees:
                    cons = self.grammar.constructions[cons_name]
                    if cons.auxiliary != (site.kind == "adjunction"):
                        continue
                    neighbor = self._extend(state, site, lex, cons)
                    if neighbor is not None:
                        out.append(neighbor)
        return out

    def _reject(self, site: Site, lexeme: str, why: str) -> None:
        self.rejections.append(f"{lexeme} at {site.describe()}: {why}")
        return None

    def _extend(self, state: SearchState, site: Site, lex, cons) -> SearchState | None:
        step_no = len(state.derivation.steps) + 1
        try:
            element = instantiate_element(lex, cons, site.indices, instance=step_no)
        except ElementError as exc:
            return self._reject(site, lex.name, str(exc))
        aux = element.tree.with_origin(step_no)
        try:
            if site.kind == "substitution":
                tree, operation = substitute(state.tree, site.address, aux), "substitute"
            else:
                tree, operation = adjoin(state.tree, site.address, aux), "adjoin"
        except TagError as exc:
            return self._reject(site, lex.name, str(exc))
        binding = tree.binding
        sigma = _merge_sigma(state.sigma, binding)
        if sigma is None:
            return self._reject(site, lex.name, "combining identifies referents the speaker keeps apart")
        element = element.substitute(binding)

        linked = link_assertion(self.kb, element.assertion, sigma, self.depth)
        if linked is None:
            return self._reject(site, lex.name, "assertion not supported by speaker knowledge")
        new_al, sigma = linked
        linked = link_context(self.kb, element.presupposition, element.pragmatics, sigma, self.depth)
        if linked is None:
            return self._reject(site, lex.name, "presupposition or pragmatics not in the conversational record")
        new_pl, new_ql, sigma = linked

        assertion = apply_substitution(state.assertion, binding) + element.assertion
        presupposition = apply_substitution(state.presupposition, binding) + element.presupposition
        pragmatics = apply_substitution(state.pragmatics, binding) + element.pragmatics
        updates = tuple(
            u if u.achieved else self.check(assertion, sigma, u.update) for u in state.updates
        )
        try:
            network = hearer_network(
                self.kb,
                meaning_anaphors(assertion, presupposition, pragmatics),
                presupposition,
                sigma,
                self.context_sets,
                self.relations,
            )
        except NetworkTooLarge as exc:
            return self._reject(site, lex.name, str(exc))
        _, flaws = check_complete(tree)
        after = {_reidentify(f, binding) for f in flaws}
        fixed = any(_reidentify(f, binding) not in after for f in state.flaws)
        step = DerivationStep(
            step_no,
            lex.name,
            cons.name,
            step_no,
            operation,
            site.address,
            node_at(state.tree.root, site.address).origin or 0,
        )
        spec = Specificity(*(apply_substitution(f, sigma) for f in (
            element.lexical_pragmatics,
            element.lexical_presupposition,
            element.content,
            element.construction_pragmatics,
        )))
        return self._finish(
            tree,
            state.derivation.extended(step),
            assertion,
            presupposition,
            pragmatics,
            sigma,
            state.assertion_links + new_al,
            state.presupposition_links + new_pl,
            state.pragmatics_links + new_ql,
            updates,
            network,
            tuple(flaws),
            fixed,
            spec,
        )

    def check(self, assertion: Sequence[Term], sigma: Mapping[Var, Term], update: Term) -> UpdateCheck:
        instance = apply_substitution(tuple(assertion), sigma)
        key = (instance, apply_substitution(update, sigma))
        if key not in self._updates:
            self._updates[key] = check_update(self.kb, assertion, sigma, update, self.depth)
        return self._updates[key]

    # -- ranking

    def entails(self, m: tuple[Term, ...], n: tuple[Term, ...]) -> bool:
        key = (m, n)
        if key not in self._entails:
            self._entails[key] = entailed_by_mp(self.kb, m, n, self.depth)
        return self._entails[key]

    def compare(self, a: RankKey, b: RankKey) -> tuple[int, str | None]:
        """Negative when ``a`` ranks ahead of ``b``; also names the deciding factor."""
        for name, x, y in zip(FACTOR_NAMES, a.prefix(), b.prefix()):
            if x != y:
                return (-1 if x < y else 1), name
        for m, n in zip(a.specificity.fields(), b.specificity.fields()):
            forward, reverse = self.entails(m, n), self.entails(n, m)
            if forward and not reverse:
                return -1, "specificity"
            if reverse and not forward:
                return 1, "specificity"
        return 0, None

    def select(self, neighbors: Sequence[SearchState]) -> int:
        """Index of the best neighbor; ties keep the earliest one."""
        best = 0
        for i in range(1, len(neighbors)):
            if self.compare(neighbors[i].key, neighbors[best].key)[0] < 0:
                best = i
        return best

    # -- goal

    def goal_reached(self, state: SearchState) -> bool:
        return (
            state.complete
            and all(u.achieved for u in state.updates)
            and recognized(state.network, state.sigma)
        )

    def postcheck(self, state: SearchState) -> list[str]:
        """Re-establish the goal from scratch; returns the problems found."""
        problems = []
        try:
            tree = replay_derivation(state.derivation, self.grammar)
        except ReplayError as exc:
            return [f"derivation does not replay: {exc}"]
        complete, flaws = check_complete(tree)
        if not complete:
            problems.append("replayed tree is incomplete: " + "; ".join(f.describe() for f in flaws))
        assertion = apply_substitution(state.assertion, state.tree.binding)
        for u in self.problem.updates:
            if not check_update(self.kb, assertion, state.sigma, u, self.depth).achieved:
                problems.append(f"update {format_term(u)} is not achieved")
        for link in (*state.assertion_links, *state.presupposition_links, *state.pragmatics_links):
            query = Box(link.modality, apply_substitution(link.conjunct, state.sigma))
            if prove(self.kb, query, limit=self.depth).first() is None:
                problems.append(f"{link.kind} link {format_term(link.instance)} does not re-verify")
        network = hearer_network(
            self.kb,
            meaning_anaphors(state.assertion, state.presupposition, state.pragmatics),
            state.presupposition,
            state.sigma,
            ContextSets(self.kb),
            RelationCache(self.kb, self.depth),
        )
        if not recognized(network, state.sigma):
            problems.append(f"hearer interpretation is {recognition_status(network, state.sigma)}")
        return problems


def _merge_sigma(sigma: Mapping[Var, Term], binding: Mapping[Var, Term]) -> dict[Var, Term] | None:
    out: dict[Var, Term] = {}
    for v, value in sigma.items():
        key = resolve(v, binding)
        if isinstance(key, Var):
            if out.setdefault(key, value) != value:
                return None
        elif key != value:
            return None
    return out


def _reidentify(flaw: Flaw, binding: Mapping[Var, Term]) -> tuple:
    return flaw.kind, flaw.category, apply_substitution(flaw.indices, binding)


# --- greedy loop --------------------------------------------------------------------


@dataclass(frozen=True)
class TraceEntry:
    step: int
    lexeme: str
    construction: str
    operation: str
    site: str
    candidates: int
    key: RankKey
    ambiguity_before: tuple[int, ...]
    runner_up: str | None
    decided_by: str | None

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "lexeme": self.lexeme,
            "construction": self.construction,
            "operation": self.operation,
            "site": self.site,
            "candidates": self.candidates,
            "key": self.key.to_dict(),
            "ambiguity_before": list(self.ambiguity_before),
            "runner_up": self.runner_up,
            "decided_by": self.decided_by,
        }

    def describe(self) -> str:
        k = self.key
        runner = f"; beat {self.runner_up} on {self.decided_by}" if self.runner_up else ""
        return (
            f"step {self.step}: {self.lexeme}/{self.construction} {self.operation} at {self.site} "
            f"of {self.candidates} candidates; unachieved={k.unachieved} ambiguity={list(k.ambiguity)} "
            f"salience={list(k.salience)} flaws={list(k.flaws)}{runner}"
        )


@dataclass(frozen=True)
class GenerationResult:
    success: bool
    state: SearchState
    trace: tuple[TraceEntry, ...]
    reason: str | None = None
    problems: tuple[str, ...] = ()
    grammar: Grammar | None = None

    @property
    def tokens(self) -> list[str]:
        return surface_tokens(self.state.tree, self.grammar) if self.grammar else []

    def failure_report(self) -> dict:
        state = self.state
        return {
            "reason": self.reason,
            "unachieved_updates": [format_term(apply_substitution(u, state.sigma)) for u in state.unachieved],
            "ambiguous": {
                v.name: [format_term(t) for t in d] for v, d in state.network.ambiguous().items()
            },
            "unresolved": [v.name for v in state.network.unresolved],
            "interpretation": recognition_status(state.network, state.sigma),
            "flaws": [f.describe() for f in state.flaws],
            "problems": list(self.problems),
        }


def generate_greedy(problem: MicroplanningProblem, max_steps: int | None = None, on_step=None) -> GenerationResult:
    """Expand, rank and commit to the best neighbor until the goal holds or progress stops."""
    planner = Planner(problem)
    if max_steps is None:
        max_steps = problem.default_steps()
    state = planner.init_state()
    trace: list[TraceEntry] = []
    reason = "step bound reached"
    for _ in range(max_steps):
        if planner.goal_reached(state):
            break
        planner.rejections.clear()
        neighbors = planner.expand(state)
        if not neighbors:
            reason = "no applicable element"
            break
        best = planner.select(neighbors)
        rest = [n for i, n in enumerate(neighbors) if i != best]
        runner_up, decided_by = None, None
        if rest:
            second = rest[planner.select(rest)]
            _, decided_by = planner.compare(neighbors[best].key, second.key)
            runner_up = f"{second.last_step.lexeme}/{second.last_step.construction}@{format_address(second.last_step.site)}"
        chosen = neighbors[best]
        step = chosen.last_step
        entry = TraceEntry(
            step.step,
            step.lexeme,
            step.construction,
            step.operation,
            format_address(step.site),
            len(neighbors),
            chosen.key,
            state.key.ambiguity,
            runner_up,
            decided_by,
        )
        trace.append(entry)
        if on_step is not None:
            on_step(entry, neighbors, tuple(planner.rejections))
        state = chosen
    if planner.goal_reached(state):
        problems = planner.postcheck(state)
        if not problems:
            return GenerationResult(True, state, tuple(trace), None, (), problem.grammar)
        return GenerationResult(False, state, tuple(trace), "post-check failed", tuple(problems), problem.grammar)
    return GenerationResult(False, state, tuple(trace), reason, (), problem.grammar)


def iter_variables(state: SearchState) -> Iterator[Var]:
    yield from unique_variables((*state.assertion, *state.presupposition, *state.pragmatics))

from __future__ import annotations

import pytest

from microplan.grammar import Grammar, parse_grammar
from microplan.planner import (
    FACTOR_NAMES,
    MicroplanningProblem,
    Planner,
    ProblemError,
    RankKey,
    Specificity,
    generate_greedy,
    parse_problem,
)
from microplan.prover import Modality, parse_kb
from microplan.sexpr import ParseError
from microplan.terms import Compound
from bundles import OBLIGATION, make_problem, run

TINY_GRAMMAR = """
(construction (name bareNP) (params R) (mode presupposing) (pragmatics true)
  (tree (node np (R) () () (anchor 1 ()))))
(lexeme (name cup) (params N) (target np (N) complement) (content (cup N)) (trees (bareNP N)))
(morph cup (() "cup"))
"""


def test_problem_parsing():
    spec = parse_problem("(problem (root s (E) ()) (sigma0 (E a1)) (updates (p a1) (and (q a1) (r a1))))")
    assert spec.root.category == "s"
    assert [str(u) for u in spec.updates] == ["p(a1)", "q(a1)", "r(a1)"]


@pytest.mark.parametrize(
    "text",
    [
        "(root s (E) ())",
        "(problem (sigma0 (E a1)))",
        "(problem (root s (a1) ()))",
        "(problem (root s (E) ()) (sigma0 (E X)))",
        "(problem (root s (E) ()) (colour blue))",
        "(problem (root s (E) ()) (updates (or (p a) (q a))))",
    ],
)
def test_malformed_problems(text):
    with pytest.raises(ParseError) as info:
        parse_problem(text, "p.sexp")
    assert "p.sexp" in str(info.value)


def test_sigma0_must_name_known_constants():
    grammar = parse_grammar(TINY_GRAMMAR)
    kb = parse_kb("(fact CR (cup c1))")
    spec = parse_problem("(problem (root np (X) ()) (sigma0 (X c9)))")
    with pytest.raises(ProblemError, match="c9"):
        Planner(MicroplanningProblem(grammar, kb, spec))


def test_root_category_must_exist_in_the_grammar():
    grammar = parse_grammar(TINY_GRAMMAR)
    kb = parse_kb("(fact CR (cup c1))")
    with pytest.raises(ProblemError, match="vp"):
        Planner(MicroplanningProblem(grammar, kb, parse_problem("(problem (root vp (X) ()) (sigma0 (X c1)))")))


def test_initial_state():
    planner = Planner(make_problem("instruction"))
    state = planner.init_state()
    assert state.key.unachieved == 4 and not state.complete
    assert [f.kind for f in state.flaws] == ["open-site"]
    np_state = Planner(make_problem("instruction", problem="problem-np.sexp")).init_state()
    assert np_state.key.unachieved == 0


def test_empty_grammar_fails_cleanly():
    kb = parse_kb("(fact CR (cup c1))")
    spec = parse_problem("(problem (root np (X) ()) (sigma0 (X c1)))")
    result = generate_greedy(MicroplanningProblem(Grammar({}, (), {}, "empty"), kb, spec))
    assert not result.success
    assert result.reason == "no applicable element"
    assert result.failure_report()["flaws"]


def test_single_referent_single_noun():
    kb = parse_kb("(fact CR (cup c1))")
    spec = parse_problem("(problem (root np (X) ()) (sigma0 (X c1)))")
    result = generate_greedy(MicroplanningProblem(parse_grammar(TINY_GRAMMAR), kb, spec))
    assert result.success
    assert result.tokens == ["cup"] and len(result.trace) == 1


def test_instruction_goal_is_reached():
    result = run("instruction")
    assert result.success, result.failure_report()
    assert " ".join(result.tokens) == "slide coupling nut onto elbow to uncover fuel-line sealing ring"
    assert [e.lexeme for e in result.trace] == [
        "slide", "purpose", "uncover", "sealing-ring", "fuel-line", "onto", "coupling-nut", "elbow",
    ]


def test_without_obligation_no_imperative_applies():
    result = run("instruction", drop_facts=[OBLIGATION])
    assert not result.success
    assert result.reason == "no applicable element"
    assert len(result.failure_report()["unachieved_updates"]) == 4


def test_postcheck_accepts_the_final_state():
    problem = make_problem("rabbit")
    result = generate_greedy(problem)
    assert result.success
    assert Planner(problem).postcheck(result.state) == []
    assert " ".join(result.tokens) == "the rabbit in the hat"


def test_step_bound_is_reported():
    result = generate_greedy(make_problem("instruction"), max_steps=2)
    assert not result.success and result.reason == "step bound reached"
    assert len(result.trace) == 2


def key(unachieved=0, ambiguity=(), salience=(), flaws=(0, 1), specificity=Specificity()):
    return RankKey(unachieved, ambiguity, salience, flaws, specificity)


@pytest.fixture(scope="module")
def planner():
    return Planner(make_problem("instruction"))


@pytest.mark.parametrize(
    "better, worse, factor",
    [
        (key(unachieved=1), key(unachieved=2), "updates"),
        (key(ambiguity=()), key(ambiguity=(2,)), "ambiguity"),
        (key(ambiguity=(2, 3)), key(ambiguity=(3,)), "ambiguity"),
        (key(salience=(3,)), key(salience=(17,)), "salience"),
        (key(flaws=(1, 1)), key(flaws=(2, 0)), "flaws"),
        (key(flaws=(1, 0)), key(flaws=(1, 1)), "flaws"),
        (
            key(specificity=Specificity(lexical_pragmatics=(OBLIGATION,))),
            key(specificity=Specificity()),
            "specificity",
        ),
    ],
)
def test_each_factor_decides_alone(planner, better, worse, factor):
    assert planner.compare(better, worse) == (-1, factor)
    assert planner.compare(worse, better) == (1, factor)


def test_earlier_factors_dominate(planner):
    assert planner.compare(key(unachieved=1, ambiguity=(5, 5)), key(unachieved=2))[1] == "updates"
    assert planner.compare(key(ambiguity=(), flaws=(9, 1)), key(ambiguity=(2,)))[1] == "ambiguity"


def test_specificity_needs_strict_entailment(planner):
    same = Specificity(content=(Compound("cn", ("n11",)),))
    assert planner.compare(key(specificity=same), key(specificity=same)) == (0, None)
    unrelated = Specificity(content=(Compound("el", ("e2",)),))
    assert planner.compare(key(specificity=same), key(specificity=unrelated)) == (0, None)


def test_ties_keep_enumeration_order(planner):
    state = planner.init_state()
    neighbors = planner.expand(state)
    assert neighbors
    best = planner.select(neighbors)
    assert all(planner.compare(n.key, neighbors[best].key)[0] >= 0 for n in neighbors)
    assert all(planner.compare(n.key, neighbors[best].key)[0] > 0 for n in neighbors[:best])


def test_factor_names():
    assert FACTOR_NAMES == ("updates", "ambiguity", "salience", "flaws", "specificity")


def test_specificity_fields_come_from_the_element(planner):
    state = planner.init_state()
    (slide,) = [n for n in planner.expand(state) if n.last_step.lexeme == "slide"]
    spec = slide.key.specificity
    assert [str(a) for a in spec.construction_pragmatics] == ["obl(s0,h0)"]
    assert [a.functor for a in spec.content] == ["move", "next"]


def test_rejections_explain_pruned_candidates():
    planner = Planner(make_problem("instruction", drop_facts=[OBLIGATION]))
    assert planner.expand(planner.init_state()) == []
    assert any("pragmatics" in r for r in planner.rejections)


def test_deterministic_trace():
    a = [e.to_dict() for e in run("instruction").trace]
    b = [e.to_dict() for e in run("instruction").trace]
    assert a == b


def test_modality_of_assertion_links():
    result = run("instruction")
    assert {link.modality for link in result.state.assertion_links} == {Modality.S}
    assert {link.modality for link in result.state.presupposition_links} == {Modality.CR}

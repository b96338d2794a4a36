from __future__ import annotations

import random

import pytest

from microplan import data_path
from microplan.interpretation import (
    ContextSets,
    NetworkTooLarge,
    RelationCache,
    UnresolvedAnaphor,
    build_relation,
    candidate_space,
    check_update,
    gac_filter,
    hearer_network,
    link_assertion,
    link_context,
    recognition_status,
    space_size,
)
from microplan.prover import Modality, load_kb
from microplan.terms import Compound, Var, format_term
from oracles import brute_force_solutions, random_network_instance

H, N, P, R, F, X, E, O = (Var(n) for n in "HNPRFXEO")


def atom(functor, *args):
    return Compound(functor, tuple(args))


@pytest.fixture(scope="module")
def kb():
    return load_kb(data_path("instruction", "kb.sexp"))


@pytest.fixture(scope="module")
def rabbit():
    return load_kb(data_path("rabbit", "kb.sexp"))


@pytest.fixture(scope="module")
def kitchen():
    return load_kb(data_path("kitchen", "kb.sexp"))


def named(sigma):
    return {v.name: format_term(t) for v, t in sigma.items()}


def test_assertion_link_binds_from_speaker_facts(kb):
    links, sigma = link_assertion(kb, [atom("move", "a1", H, N, P)], {})
    assert named(sigma) == {"H": "h0", "N": "n11", "P": "p(l(on,j2),l(on,e2))"}
    assert links[0].modality == Modality.S
    assert format_term(links[0].instance) == "move(a1,h0,n11,p(l(on,j2),l(on,e2)))"


def test_assertion_without_speaker_support_fails(kb):
    assert link_assertion(kb, [atom("move", "a2", H, N, P)], {}) is None


def test_presupposition_link_through_a_rule(kb):
    plinks, qlinks, sigma = link_context(kb, [atom("nn", "r11", F, X)], [], {})
    assert named(sigma) == {"F": "f4", "X": "for"}
    assert [s.index for s in plinks[0].proof] == [17, 16]
    assert qlinks == ()


def test_pragmatics_link_and_nullary_conditions(kb):
    _, qlinks, _ = link_context(kb, [], [atom("obl", "s0", "h0"), "zero-genre"], {})
    assert [format_term(q.instance) for q in qlinks] == ["obl(s0,h0)", "zero-genre"]
    assert link_context(kb.without((Modality.CR, "zero-genre")), [], ["zero-genre"], {}) is None


def test_context_linking_backtracks_across_conjuncts(rabbit):
    _, _, sigma = link_context(rabbit, [atom("rabbit", R), atom("big", R)], [], {})
    assert sigma[R] == "r2"


def test_only_ground_values_enter_sigma(kb):
    _, _, sigma = link_context(kb, [atom("start-at", P, "n11")], [], {})
    assert P not in sigma


def test_update_achieved_by_assertion(kb):
    move = atom("move", "a1", H, N, P)
    sigma = {H: "h0", N: "n11", P: Compound("p", (Compound("l", ("on", "j2")), Compound("l", ("on", "e2"))))}
    assert check_update(kb, [move], sigma, move).achieved
    assert not check_update(kb, [], sigma, move).achieved


def test_update_by_inference(kitchen):
    E2, C, L = Var("E2"), Var("C"), Var("L")
    assertion = [atom("hold", E, H, C, O), atom("purpose", E, E2), atom("fill", E2, H, C, L)]
    sigma = {E: "a1", H: "h1", C: "c1", O: "o1", E2: "a2", L: "l1"}
    result = check_update(kitchen, assertion, sigma, atom("upright", "o1"))
    assert result.achieved and result.proof
    without_fill = assertion[:2]
    assert not check_update(kitchen, without_fill, sigma, atom("upright", "o1")).achieved


def test_wash_does_not_imply_upright():
    kb = load_kb(data_path("kitchen", "kb-wash.sexp"))
    E2, C = Var("E2"), Var("C")
    assertion = [atom("hold", E, H, C, O), atom("purpose", E, E2), atom("wash", E2, H, C)]
    sigma = {E: "a1", H: "h1", C: "c1", O: "o1", E2: "a2"}
    assert not check_update(kb, assertion, sigma, atom("upright", "o1")).achieved


def test_context_sets(kb, rabbit):
    sets = ContextSets(kb)
    assert set(sets("r11")) >= {"r11", "a_r11", "n11", "e2"}
    assert not ContextSets(kb).from_record("zzz")
    assert ContextSets(kb)("zzz") == ("zzz",)
    assert ContextSets(rabbit)("r1") == ("r1", "r2", "r3")
    assert ContextSets(rabbit).from_record("h1")


def test_candidate_space(rabbit):
    sets = ContextSets(rabbit)
    R1, H1 = Var("R"), Var("H")
    domains = candidate_space(sets, {R1: "r1", H1: "h1"}, [R1, H1])
    assert space_size(domains) == 9
    with pytest.raises(UnresolvedAnaphor):
        candidate_space(sets, {R1: "r1"}, [R1, H1])


def test_full_instruction_presupposition_is_recognized(kb):
    presupposition = [
        atom("sr", R), atom("fl", F), atom("nn", R, F, X), atom("def", R),
        atom("cn", N), atom("el", E),
    ]
    sigma = {R: "r11", F: "f4", X: "for", N: "n11", E: "e2"}
    net = hearer_network(kb, [R, F, X, N, E], presupposition, sigma)
    assert recognition_status(net, sigma) == "recognized"


def test_without_the_compound_modifier_the_alternative_survives(kb):
    sigma = {R: "r11"}
    net = hearer_network(kb, [R], [atom("sr", R)], sigma)
    assert set(net.domains[R]) == {"r11", "a_r11"}
    assert recognition_status(net, sigma) == "ambiguous"


def test_rabbit_in_hat_is_unique(rabbit):
    sigma = {R: "r1", H: "h1"}
    just_rabbit = hearer_network(rabbit, [R], [atom("rabbit", R)], sigma)
    assert len(just_rabbit.domains[R]) == 3
    net = hearer_network(rabbit, [R, H], [atom("rabbit", R), atom("in", R, H), atom("hat", H)], sigma)
    assert net.domains == {R: ("r1",), H: ("h1",)}


def test_misidentified_and_inconsistent(rabbit):
    sigma = {R: "r2"}
    net = hearer_network(rabbit, [R], [atom("rabbit", R), atom("small", R), atom("white", R)], sigma)
    assert recognition_status(net, sigma) == "misidentified"
    net = hearer_network(rabbit, [R], [atom("rabbit", R), atom("brown", R), atom("white", R)], sigma)
    assert recognition_status(net, sigma) == "inconsistent"


def test_unresolved_variables_are_reported(rabbit):
    net = hearer_network(rabbit, [R, H], [atom("in", R, H)], {R: "r1"})
    assert net.unresolved == (H,)
    assert net.to_dict()["H"] is None
    assert recognition_status(net, {R: "r1"}) == "unresolved"


def test_false_ground_conjunct_empties_every_domain(rabbit):
    net = hearer_network(rabbit, [R], [atom("rabbit", R), atom("in", "r3", "h3")], {R: "r1"})
    assert net.domains[R] == ()


def test_tuple_cap(rabbit):
    cache = RelationCache(rabbit)
    domains = {R: ("r1", "r2", "r3"), H: ("h1", "h2", "h3")}
    with pytest.raises(NetworkTooLarge):
        build_relation(cache, atom("in", R, H), domains, cap=8)


@pytest.mark.parametrize("seed", range(0, 200, 20))
def test_filtering_is_conservative_and_monotone(seed):
    for s in range(seed, seed + 20):
        inst = random_network_instance(random.Random(s))
        net = gac_filter(inst.kb, inst.presupposition, inst.domains)
        for v, d in net.domains.items():
            assert set(d) <= set(inst.domains[v]), f"seed {s}: pruning grew {v}"
        for solution in brute_force_solutions(inst):
            for v, value in solution.items():
                assert value in net.domains[v], f"seed {s}: lost solution value {v}={value}"
        fewer = gac_filter(inst.kb, inst.presupposition[:-1], inst.domains)
        for v, d in net.domains.items():
            assert set(d) <= set(fewer.domains[v]), f"seed {s}: extra conjunct grew {v}"
        status = recognition_status(net, inst.sigma)
        if status == "recognized":
            assert brute_force_solutions(inst) == [inst.sigma], f"seed {s}"

#!/usr/bin/env python3
"""
Tests for the LTL to Büchi translation, the graph searches and the GR(1)
classification. The lasso evaluator in bin.ltl serves as oracle.
"""

import itertools
import os
import sys

# Add the parent directory to the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from hypothesis import given, settings
from hypothesis import strategies as st

from bin.automata import (Gr1Kind, classify_gr1, find_accepting_lasso, ltl_to_nba, nba_accepts,
                          nba_to_dot, nba_to_text, strongly_connected_components)
from bin.ltl import (FALSE, TRUE, Op, always, atom, conj, disj, evaluate, evaluate_boolean, implies,
                     is_boolean, neg, negate_nnf, nxt, pretty, signal_names, subformulas)
from bin.spec_parser import SignalTable, parse_formula
from test_ltl import formulas

TABLE = SignalTable(local_inputs=("r",), outputs=("g", "start"), global_inputs=("p", "q", "s", "hready"))

CORPUS = [
    "p", "!p", "X p", "X X q", "p & q", "p | X q",
    "G p", "F p", "G F p", "F G p", "!G F p", "G(p -> F q)",
    "G(p -> X q)", "p U q", "p W q", "!(p U q)", "(p U q) U p", "G(p -> X(!p W q))",
    "p W[2] q", "G(p -> (q W[1] !p))", "F p & F q", "G F p & G F q", "F(p & X X q)",
    "G(p <-> X q)", "true", "false",
]

VALUATIONS = [frozenset(s) for s in ([], ["p"], ["q"], ["p", "q"])]


def _words(max_stem=3, max_loop=3):
    for stem_len in range(max_stem + 1):
        for stem in itertools.product(VALUATIONS, repeat=stem_len):
            for loop_len in range(1, max_loop + 1):
                for loop in itertools.product(VALUATIONS, repeat=loop_len):
                    yield list(stem), list(loop)


def test_nba_matches_lasso_semantics():
    print("🧪 Testing NBA acceptance against lasso evaluation...")
    for text in CORPUS:
        f = parse_formula(text, TABLE)
        nba = ltl_to_nba(f)
        checked = 0
        for stem, loop in _words():
            expected = evaluate(f, stem, loop)
            got = nba_accepts(nba, stem, loop)
            assert got == expected, f"{text}: stem={stem} loop={loop} expected {expected}, got {got}"
            checked += 1
        print(f"   {text:<28} {nba.num_states:>3} states, {checked} words")
    print("✅ NBA semantics test passed!")


THREE_ATOM = ["G(p -> F(q | s))", "(p U q) W s", "G(s -> X(p W[1] q))"]
three_valuations = st.sets(st.sampled_from(["p", "q", "s"])).map(frozenset)
three_lassos = st.tuples(st.lists(three_valuations, max_size=3),
                         st.lists(three_valuations, min_size=1, max_size=3))


def test_three_atom_formulas():
    valuations = [frozenset(c) for n in range(4) for c in itertools.combinations(["p", "q", "s"], n)]
    for text in THREE_ATOM:
        f = parse_formula(text, TABLE)
        nba = ltl_to_nba(f)
        for stem_len in range(2):
            for stem in itertools.product(valuations, repeat=stem_len):
                for loop in itertools.product(valuations, repeat=1):
                    assert nba_accepts(nba, list(stem), list(loop)) == evaluate(f, list(stem), list(loop)), text


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(THREE_ATOM), three_lassos)
def test_three_atom_formulas_on_longer_lassos(text, lasso):
    stem, loop = lasso
    f = parse_formula(text, TABLE)
    assert nba_accepts(ltl_to_nba(f), stem, loop) == evaluate(f, stem, loop), f"{text}: {stem} {loop}"


@settings(max_examples=60, deadline=None)
@given(formulas)
def test_negated_automaton_is_complement(f):
    positive = ltl_to_nba(f)
    negative = ltl_to_nba(negate_nnf(f))
    for stem, loop in _words(max_stem=1, max_loop=2):
        assert nba_accepts(positive, stem, loop) != nba_accepts(negative, stem, loop), pretty(f)


def test_empty_and_universal():
    empty = ltl_to_nba(FALSE)
    assert empty.num_states == 0 and empty.initial == frozenset()
    assert not nba_accepts(empty, [], [frozenset()])
    unsat = ltl_to_nba(parse_formula("G p & F !p", TABLE))
    assert unsat.num_states == 0, "unsatisfiable formulas have no live states"
    universal = ltl_to_nba(TRUE)
    assert nba_accepts(universal, [], [frozenset()])
    assert nba_accepts(universal, [frozenset(["p"])], [frozenset(["q"])])


def test_alphabet_defaults_to_atoms():
    nba = ltl_to_nba(parse_formula("G(r_i -> F g_i)", TABLE))
    assert nba.atoms == ("g_i", "r_i")
    wide = ltl_to_nba(atom("p"), atoms=["p", "q"])
    assert wide.atoms == ("p", "q")


def test_find_accepting_lasso():
    print("🧪 Testing nested depth-first search...")
    graph = {0: [("a", 1)], 1: [("b", 2)], 2: [("c", 1), ("d", 3)], 3: []}
    lasso = find_accepting_lasso([0], lambda n: graph[n], lambda n: n == 2)
    assert lasso is not None
    assert [n for n, _ in lasso.stem] == [0, 1]
    assert [n for n, _ in lasso.loop] == [2, 1]
    assert [e for _, e in lasso.loop] == ["c", "b"]
    assert find_accepting_lasso([0], lambda n: graph[n], lambda n: n == 3) is None
    assert find_accepting_lasso([0], lambda n: graph[n], lambda n: n == 0) is None
    print("✅ Nested DFS test passed!")


def test_scc_order():
    graph = {"a": ["b"], "b": ["c", "a"], "c": ["d"], "d": ["c"], "e": []}
    components = strongly_connected_components(["a", "e"], lambda n: graph[n])
    as_sets = [set(c) for c in components]
    assert as_sets.index({"c", "d"}) < as_sets.index({"a", "b"}), "sinks come first"
    assert {"e"} in as_sets
    assert sum(len(c) for c in components) == 5


def test_classify_gr1():
    print("🧪 Testing GR(1) classification...")
    inputs = ["r", "p"]
    cases = [
        ("G p", Gr1Kind.SIMPLE_ASSUMPTION),
        ("G(r_i & !p)", Gr1Kind.SIMPLE_ASSUMPTION),
        ("G(r_i -> X g_i)", Gr1Kind.SIMPLE_SAFETY),
        ("G(!g_i | start_i)", Gr1Kind.SIMPLE_SAFETY),
        ("G(r_i -> X r_i)", Gr1Kind.GENERAL),
        ("G(r_i -> F g_i)", Gr1Kind.GENERAL),
        ("G(start_i -> X(!start_i W[3] g_i))", Gr1Kind.GENERAL),
        ("r_i -> g_i", Gr1Kind.GENERAL),
        ("G F p", Gr1Kind.GENERAL),
    ]
    for text, kind in cases:
        got = classify_gr1(parse_formula(text, TABLE), inputs)
        print(f"   {text:<36} {got.kind.value}")
        assert got.kind == kind, f"{text}: expected {kind.value}, got {got.kind.value}"
    safety = classify_gr1(parse_formula("G(r_i -> X g_i)", TABLE), inputs)
    assert pretty(safety.formula) == "(!r_i | X g_i)", "bodies are desugared"
    as_input = classify_gr1(parse_formula("G(r_i -> X g_i)", TABLE), inputs + ["g"])
    assert as_input.kind == Gr1Kind.GENERAL, "X over an input is not one-step safety"
    assert classify_gr1(parse_formula("G(!g_i | start_i)", TABLE), ["g", "start"]).kind == Gr1Kind.SIMPLE_ASSUMPTION
    print("✅ GR(1) classification test passed!")


GR1_INPUTS = ("r", "p")
UNBOUNDED_OPS = {Op.UNTIL, Op.WEAK_UNTIL, Op.BOUNDED_WEAK_UNTIL, Op.GLOBALLY, Op.EVENTUALLY}
window_literals = st.sampled_from([atom("r"), atom("g"), atom("p"), atom("q")])
window_bodies = st.recursive(
    st.one_of(window_literals, window_literals.map(nxt)),
    lambda children: st.one_of(
        children.map(neg),
        st.tuples(children, children).map(lambda ab: conj(*ab)),
        st.tuples(children, children).map(lambda ab: disj(*ab)),
        st.tuples(children, children).map(lambda ab: implies(*ab)),
    ),
    max_leaves=5,
)
gr1_candidates = st.one_of(window_bodies.map(always), formulas.map(always), formulas)
gr1_valuations = st.sets(st.sampled_from(["r", "g", "p", "q"])).map(frozenset)
gr1_lassos = st.tuples(st.lists(gr1_valuations, max_size=3),
                       st.lists(gr1_valuations, min_size=1, max_size=3))


@settings(max_examples=300, deadline=None)
@given(gr1_candidates, gr1_lassos)
def test_simple_gr1_bodies_match_one_step_windows(f, lasso):
    stem, loop = lasso
    got = classify_gr1(f, GR1_INPUTS)
    body = f.children[0] if f.op == Op.GLOBALLY else None
    if body is None or any(node.op in UNBOUNDED_OPS for node in subformulas(body)):
        assert got.kind == Gr1Kind.GENERAL, pretty(f)
    if got.kind == Gr1Kind.GENERAL:
        return

    beta = got.formula
    word = stem + loop

    def following(k):
        return k + 1 if k + 1 < len(word) else len(stem)

    windows = all(evaluate_boolean(beta, word[k], word[following(k)]) for k in range(len(word)))
    assert windows == evaluate(f, stem, loop), \
        f"{pretty(f)} classified {got.kind.value} with body {pretty(beta)} on {stem} {loop}"
    if got.kind == Gr1Kind.SIMPLE_ASSUMPTION:
        assert is_boolean(beta) and signal_names(beta) <= set(GR1_INPUTS), pretty(beta)
    else:
        for node in subformulas(beta):
            if node.op == Op.NEXT:
                assert is_boolean(node.children[0]), pretty(beta)
                assert not signal_names(node.children[0]) & set(GR1_INPUTS), pretty(beta)


def test_exports():
    nba = ltl_to_nba(parse_formula("G F p", TABLE))
    dot = nba_to_dot(nba, name="gfp")
    assert dot.startswith("digraph gfp")
    assert "doublecircle" in dot
    text = nba_to_text(nba)
    assert text.splitlines()[0] == f"states {nba.num_states}"
    assert "atoms p" in text


def main():
    """Run all tests"""
    print("🚀 Starting automata tests...")
    test_nba_matches_lasso_semantics()
    test_empty_and_universal()
    test_find_accepting_lasso()
    test_scc_order()
    test_classify_gr1()
    test_exports()
    print("\n🎉 All automata tests passed!")


if __name__ == "__main__":
    main()

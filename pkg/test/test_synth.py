#!/usr/bin/env python3
"""
Tests for the bounded-synthesis encoding, the bound iteration and staged
synthesis.

The central check pins every cell of a small template and asks the builtin
solver: the pinned system must be satisfiable exactly when the model
checker accepts the template against the same formula.
"""

import itertools
import os
import sys

# Add the parent directory to the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest

from bin.ltl import TRUE, atom, evaluate_boolean, pretty
from bin.machine import ProcessTemplate, SingleProcess
from bin.solve import SolverStatus, check_assignment, solve_builtin
from bin.spec_parser import ShapeError, SpecSyntaxError, load_spec
from bin.synth import (BoundTooSmall, Outcome, StageRegression, SynthOptions, apply_gr1_direct,
                       build_system, decode_model, decompose_synthesize, encode, format_stats,
                       hardcode_token, load_stages, pin_template, smt_file_name, synthesize)
from bin.transforms import hub_reduce, translate_pipeline
from bin.verify import model_check
from ring_helper import arbiter_template, monolithic_spec, spec_path

PROPERTIES = [
    ("G(r -> F g)", ()),
    ("G(r -> F(g | !r))", ("G F tok",)),
    ("G F g", ()),
    ("G F g", ("G F tok",)),
    ("G(g -> tok)", ()),
    ("G !g", ()),
    ("G(tok -> F snd)", ()),
    ("F G !g", ()),
    ("G(g -> X !g)", ()),
    ("G((tok & !snd) -> X tok)", ()),
    ("G(r -> X g)", ()),
    ("G(!tok -> g)", ("G r",)),
]


def two_state_templates():
    """Every two-state template with forced token moves"""
    for idle_g, token_g, token_snd in itertools.product((False, True), repeat=3):
        idle = {"g"} if idle_g else set()
        token = {"tok"} | ({"g"} if token_g else set()) | ({"snd"} if token_snd else set())

        def step(q, names, token_snd=token_snd):
            if q == 0:
                return 1 if "rcv" in names else 0
            if "rcv" in names:
                return None
            return 0 if token_snd else 1

        name = f"idle{'+g' if idle_g else ''}/tok{'+g' if token_g else ''}{'+snd' if token_snd else ''}"
        yield name, ProcessTemplate.from_function(("r", "rcv"), ("g", "tok", "snd"), [idle, token], step)


def test_encode_errors():
    spec = monolithic_spec("G(g -> tok)")
    with pytest.raises(BoundTooSmall):
        encode(spec, 1)
    with pytest.raises(ShapeError):
        encode(load_spec(spec_path("arbiter.spec")), 2)
    cs = encode(spec, 3)
    assert cs.rank_ceiling == cs.nba.num_states * 3
    assert cs.inputs == ("r", "rcv") and set(cs.outputs) == {"g", "tok", "snd"}
    assert smt_file_name(cs) == "mono.n3.smt2"


def test_pinned_template_duality():
    print("🧪 Testing constraint system against the model checker...")
    for text, assumptions in PROPERTIES:
        spec = monolithic_spec(text, assumptions)
        cs = encode(spec, 2)
        for name, template in two_state_templates():
            pinned = pin_template(cs, template)
            outcome = solve_builtin(pinned)
            verdict = model_check(SingleProcess(template), cs.formula)
            sat = outcome.status == SolverStatus.SAT
            assert outcome.status != SolverStatus.UNKNOWN
            assert sat == verdict.passed, \
                f"{text} under {assumptions} on {name}: solver {outcome.status.value}, checker {verdict.status.value}"
            if sat:
                assert check_assignment(pinned, outcome.assignment) == []
        print(f"   {text:<28} ok")
    print("✅ Duality test passed!")


def test_direct_gr1_encoding_is_sound():
    print("🧪 Testing the direct GR(1) encoding...")
    for text, assumptions in PROPERTIES:
        spec = monolithic_spec(text, assumptions)
        plain = encode(spec, 2)
        direct = apply_gr1_direct(plain)
        for name, template in two_state_templates():
            direct_sat = solve_builtin(pin_template(direct, template)).status == SolverStatus.SAT
            plain_sat = solve_builtin(pin_template(plain, template)).status == SolverStatus.SAT
            assert not direct_sat or plain_sat, f"{text} on {name}: direct encoding accepted more"
    print("✅ Direct GR(1) encoding test passed!")


def test_direct_gr1_moves_simple_conjuncts():
    cs = encode(hub_reduce(load_spec(spec_path("arbiter.spec"))), 2)
    direct = apply_gr1_direct(cs)
    assert direct.gr1_direct
    assert [p.label for p in direct.safety] == ["G12", "TR1", "TR2", "TR3"]
    assert direct.alpha == TRUE
    assert direct.nba.num_states <= cs.nba.num_states
    alpha = apply_gr1_direct(encode(monolithic_spec("G(!tok -> g)", ("G r",)), 2)).alpha
    assert pretty(alpha) == "r"


@pytest.fixture(scope="module")
def amba_stages():
    return load_stages(spec_path("amba_i.stages"))


def test_direct_gr1_shrinks_amba_stage(amba_stages):
    print("🧪 Testing the direct GR(1) encoding on the first AMBA stage...")
    full = encode(hub_reduce(amba_stages[0].with_assumptions()), 2)
    residual = apply_gr1_direct(full)
    assert residual.gr1_direct and residual.safety
    assert residual.nba.num_states < full.nba.num_states, \
        f"full {full.nba.num_states} residual {residual.nba.num_states}"
    print(f"   automaton states: {full.nba.num_states} -> {residual.nba.num_states}")
    print("✅ AMBA stage automaton test passed!")


def test_pin_template_under_alpha():
    cs = encode(hub_reduce(load_spec(spec_path("arbiter.spec"))), 3)
    pinned = pin_template(cs, arbiter_template(), atom("r"))
    r_bit = 1 << cs.inputs.index("r")
    assert pinned.pins.floor == 2
    assert sorted(pinned.pins.out) == [0, 1]
    assert len(pinned.pins.delta) == 3
    assert all(mask & r_bit for _, mask in pinned.pins.delta)
    everything = pin_template(cs, arbiter_template())
    assert len(everything.pins.delta) == 6


def test_pin_amba_stage_into_next(amba_stages):
    first, second = amba_stages[0], amba_stages[1]
    cs = encode(hub_reduce(second.with_assumptions()), 2)
    assert len(cs.inputs) == 6 and cs.num_masks == 64

    def step(q, names):
        if q == 1:
            return None if "rcv" in names else 0
        return 1 if "rcv" in names else 0

    token_labels = {"tok", "snd", "hgrant"} & set(cs.outputs)
    earlier = ProcessTemplate.from_function(cs.inputs, cs.outputs, [set(), token_labels], step)
    pinned = pin_template(cs, earlier, first.alpha())
    assert pinned.pins.floor == 2
    assert pinned.pins.out == {0: frozenset(), 1: frozenset(token_labels)}

    locked = cs.mask_of(["hlock", "hburst_b4"])
    assert len([1 for q, _ in pinned.pins.delta if q == 0]) == 16
    assert len([1 for q, _ in pinned.pins.delta if q == 1]) == 8
    assert all(mask & locked == locked for _, mask in pinned.pins.delta)
    assert all(not mask & cs.rcv_bit for q, mask in pinned.pins.delta if q == 1)
    assert pinned.pins.delta[(0, cs.mask_of(["hlock", "hburst_b4", "rcv"]))] == 1

    # whatever the first stage could see, the second stage sees as well
    for mask in range(cs.num_masks):
        names = cs.valuation(mask)
        if evaluate_boolean(first.alpha(), names):
            assert evaluate_boolean(second.alpha(), names)
    assert hardcode_token(pinned).token_hardcoded


def test_pin_template_errors():
    cs = encode(hub_reduce(load_spec(spec_path("arbiter.spec"))), 2)
    other = ProcessTemplate.from_function(("x", "rcv"), ("g", "tok", "snd"), [set(), {"tok", "snd"}],
                                          lambda q, names: 0)
    with pytest.raises(StageRegression):
        pin_template(cs, other)

    def step(q, names):
        if q == 1:
            return None if "rcv" in names else 0
        return 1 if "rcv" in names else q

    three = ProcessTemplate.from_function(("r", "rcv"), ("g", "tok", "snd"),
                                          [set(), {"tok", "snd", "g"}, set()], step)
    with pytest.raises(BoundTooSmall):
        pin_template(cs, three)
    big = hardcode_token(encode(hub_reduce(load_spec(spec_path("arbiter.spec"))), 3))
    with pytest.raises(StageRegression):
        pin_template(big, three)


def test_synthesize_arbiter():
    print("🧪 Synthesizing the arbiter...")
    spec = load_spec(spec_path("arbiter.spec"))
    result = synthesize(hub_reduce(spec), range(2, 5), SynthOptions(), ring_spec=spec)
    print(format_stats(result.stats))
    assert result.outcome == Outcome.MODEL
    assert result.bound == 2
    assert result.verified, result.report.to_text()
    model = result.model
    assert model.labels[0] == frozenset()
    assert model.labels[1] == frozenset({"g", "tok", "snd"})
    assert [s.status for s in result.stats] == ["sat"]
    print("✅ Arbiter synthesis test passed!")


def test_synthesize_with_direct_gr1():
    spec = load_spec(spec_path("arbiter.spec"))
    options = SynthOptions(gr1_direct=True)
    result = synthesize(hub_reduce(spec), [2, 3], options, ring_spec=spec)
    assert result.outcome == Outcome.MODEL and result.verified
    assert result.stats[0].gr1_direct


def test_unrealizable():
    print("🧪 Testing an unrealizable spec...")
    steps = translate_pipeline(load_spec(spec_path("unreal.spec")), [], hub=True)
    reduced = steps[-1][1]
    result = synthesize(reduced, [2, 3])
    assert result.outcome == Outcome.NOT_FOUND
    assert result.message == "not found up to 3"
    assert [s.bound for s in result.stats] == [2, 3]
    assert synthesize(reduced, []).message == "empty bound range"
    print("✅ Unrealizable spec test passed!")


def test_build_and_decode():
    spec = hub_reduce(load_spec(spec_path("arbiter.spec")))
    cs = build_system(spec, 2, SynthOptions(), gr1_direct=False)
    assert cs.token_hardcoded
    outcome = solve_builtin(cs)
    assert outcome.status == SolverStatus.SAT
    model = decode_model(cs, outcome.assignment)
    assert model.initial_idle == 0 and model.initial_token == 1
    assert (1, model.mask_of(["rcv"])) not in model.delta


def test_smt_dir(tmp_path):
    spec = hub_reduce(load_spec(spec_path("arbiter.spec")))
    options = SynthOptions(smt_dir=str(tmp_path / "smt"))
    synthesize(spec, [2], options)
    written = tmp_path / "smt" / "arbiter.n2.smt2"
    assert written.exists()
    assert "(check-sat)" in written.read_text()


def test_load_stages():
    stages = load_stages(spec_path("amba_i.stages"))
    assert len(stages) == 3
    assert [a.label for a in stages[0].assumptions] == ["S1"]
    assert [a.label for a in stages[1].assumptions] == ["S2"]
    assert stages[2].assumptions == ()
    assert pretty(stages[0].alpha()) == "(hlock & hburst_b4)"
    assert stages[2].alpha() == TRUE
    assert all(s.spec.name == "amba_i" for s in stages)


def test_load_stages_errors(tmp_path):
    arbiter = spec_path("arbiter.spec")
    bad = tmp_path / "bad.stages"
    bad.write_text("[ASSUME] G r_i\n")
    with pytest.raises(SpecSyntaxError):
        load_stages(str(bad))
    bad.write_text(f"[STAGE] {arbiter}\n[ASSUME] G F r_i\n")
    with pytest.raises(ShapeError):
        load_stages(str(bad))
    bad.write_text(f"[STAGE] {arbiter}\n[WHEN] G r_i\n")
    with pytest.raises(SpecSyntaxError):
        load_stages(str(bad))


def test_decompose_synthesize(tmp_path):
    print("🧪 Testing staged synthesis...")
    arbiter = spec_path("arbiter.spec")
    stages_file = tmp_path / "arbiter.stages"
    stages_file.write_text(f"[STAGE] {arbiter}\n[ASSUME] S1: G r_i\n\n[STAGE] {arbiter}\n")
    result = decompose_synthesize(load_stages(str(stages_file)), [2, 3])
    assert result.outcome == Outcome.MODEL
    assert len(result.stages) == 2
    first, second = result.stages
    for q in range(first.model.num_states):
        assert second.model.labels[q] == first.model.labels[q], "later stages keep earlier outputs"
    assert result.verified
    print("✅ Staged synthesis test passed!")


def main():
    """Run all tests"""
    print("🚀 Starting synthesis tests...")
    test_encode_errors()
    test_pinned_template_duality()
    test_direct_gr1_encoding_is_sound()
    test_synthesize_arbiter()
    test_unrealizable()
    test_load_stages()
    print("\n🎉 All synthesis tests passed!")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""
Tests for the specification transformations. The global AMBA spec must
translate conjunct-for-conjunct into the shipped localized specs.
"""

import os
import sys

# Add the parent directory to the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest

from bin.ltl import canonical, index_tags, pretty
from bin.spec_parser import (NameNotFound, Role, Shape, ShapeError, UnsupportedShape, load_spec,
                             parse_spec)
from bin.transforms import (LocalizationRule, add_assumptions, hub_reduce, localize_assumptions,
                            localize_outputs, specialize_zero, token_ring_guarantees,
                            translate_pipeline)
from ring_helper import spec_path

AMBA_GLOBALS = ["hmaster", "hmastlock", "start", "decide", "locked"]


def _assert_same_properties(got, expected):
    got_map = {p.label: canonical(p.formula) for p in got}
    expected_map = {p.label: canonical(p.formula) for p in expected}
    assert sorted(got_map) == sorted(expected_map), f"labels {sorted(got_map)} != {sorted(expected_map)}"
    for label in expected_map:
        assert got_map[label] == expected_map[label], \
            f"{label}: {pretty(next(p.formula for p in got if p.label == label))}"


def _localized_amba():
    spec, rules = localize_outputs(load_spec(spec_path("amba_full.spec")), AMBA_GLOBALS)
    assert rules.rule("hmaster") == LocalizationRule.MASTER_INDEX
    assert rules.rule("start") == LocalizationRule.EXISTS_TOKEN_AND_LOCAL
    return localize_assumptions(spec)


def test_amba_generic_golden():
    print("🧪 Testing AMBA localization against specs/amba_i.spec...")
    got = _localized_amba()
    expected = load_spec(spec_path("amba_i.spec"))
    assert got.localized and got.role == Role.GENERIC
    assert got.shape == Shape.ONE_INDEXED
    assert set(got.local_inputs) == set(expected.local_inputs)
    assert set(got.global_inputs) == set(expected.global_inputs)
    assert set(got.outputs) == set(expected.outputs)
    assert got.global_outputs == ()
    _assert_same_properties(got.assumptions, expected.assumptions)
    _assert_same_properties(got.guarantees, expected.guarantees)
    _assert_same_properties(got.tr_guarantees, expected.tr_guarantees)
    print("✅ AMBA generic golden test passed!")


def test_amba_zero_golden():
    print("🧪 Testing the 0-process variant against specs/amba_0.spec...")
    got = specialize_zero(_localized_amba())
    expected = load_spec(spec_path("amba_0.spec"))
    assert got.role == Role.ZERO
    assert set(got.global_inputs) == set(expected.global_inputs)
    _assert_same_properties(got.assumptions, expected.assumptions)
    _assert_same_properties(got.guarantees, expected.guarantees)
    print("✅ AMBA zero golden test passed!")


def test_localized_formula_structure():
    spec = load_spec(spec_path("arbiter.spec"))
    f = spec.formula()
    assert f.op.value == "&", "localized formula is (ring ass -> TR) & (ass -> gua)"
    assert [p.label for p in spec.tr_guarantees] == [p.label for p in token_ring_guarantees()]


def test_localize_outputs_errors():
    spec = load_spec(spec_path("amba_full.spec"))
    with pytest.raises(NameNotFound):
        localize_outputs(spec, ["hgrant"])
    with pytest.raises(NameNotFound):
        localize_outputs(spec, ["nothing"])
    same, rules = localize_outputs(spec, [])
    assert same is spec and len(rules) == 0


def test_localize_assumptions_needs_global_outputs_first():
    spec = load_spec(spec_path("amba_full.spec"))
    with pytest.raises(ShapeError):
        localize_assumptions(spec)
    with pytest.raises(ShapeError):
        localize_assumptions(load_spec(spec_path("amba_i.spec")))


def test_localize_adds_token_ring_parts():
    spec = parse_spec("[INPUTS] local: r\n[OUTPUTS] local: g\n[GUARANTEE]\nG1: G(r_i -> F g_i)\n")
    localized = localize_assumptions(spec)
    assert "rcv" in localized.local_inputs
    assert {"tok", "snd"} <= set(localized.outputs)
    assert [a.label for a in localized.assumptions] == ["A5"]
    assert localized.property("G12") is None, "no grant output, no G12"


def test_specialize_zero_errors():
    with pytest.raises(ShapeError):
        specialize_zero(load_spec(spec_path("amba_0.spec")))
    with pytest.raises(NameNotFound):
        specialize_zero(load_spec(spec_path("arbiter.spec")))


def test_hub_reduce():
    print("🧪 Testing hub abstraction...")
    reduced = hub_reduce(load_spec(spec_path("arbiter.spec")))
    assert reduced.role == Role.MONOLITHIC
    assert reduced.property("HUB") is not None
    assert pretty(reduced.property("HUB").formula) == "G (tok -> !rcv)"
    for prop in reduced.properties():
        assert index_tags(prop.formula) <= {None}, f"{prop.label} keeps an index"
    with pytest.raises(ShapeError):
        hub_reduce(reduced)
    with pytest.raises(ShapeError):
        hub_reduce(load_spec(spec_path("amba_full.spec")))
    print("✅ Hub abstraction test passed!")


def test_hub_reduce_rejects_two_indexed():
    spec = parse_spec("[INPUTS] local: rcv\n[OUTPUTS] local: g, tok, snd\n[GUARANTEE]\n"
                      "MX: G !(g_i & g_j)\n[TR]\nTR1: G(snd_i -> tok_i)\n")
    with pytest.raises(UnsupportedShape):
        hub_reduce(spec)


def test_translate_pipeline_steps():
    steps = translate_pipeline(load_spec(spec_path("amba_full.spec")), AMBA_GLOBALS, zero=True, hub=True)
    assert [name for name, _ in steps] == ["input", "localize_outputs", "localize_assumptions",
                                           "specialize_zero", "hub_reduce"]
    final = steps[-1][1]
    assert final.role == Role.MONOLITHIC
    assert final.property("G10.2") is not None


def test_add_assumptions():
    spec = load_spec(spec_path("amba_i.spec"))
    extra = parse_spec("[INPUTS] global: hburst_b4\n[OUTPUTS] local: g\n[ASSUME]\nS2: G hburst_b4\n").assumptions
    stronger = add_assumptions(spec, list(extra))
    assert [a.label for a in stronger.assumptions][-1] == "S2"
    assert len(stronger.assumptions) == len(spec.assumptions) + 1


def main():
    """Run all tests"""
    print("🚀 Starting transformation tests...")
    test_amba_generic_golden()
    test_amba_zero_golden()
    test_hub_reduce()
    print("\n🎉 All transformation tests passed!")


if __name__ == "__main__":
    main()

"""
Model checking of token rings and cutoff-based parameterized verification.

model_check searches the product of a system with the Büchi automaton of
the negated property for an accepting lasso. For a property about a single
vertex under interleaving timing the automaton only reads the steps in
which that vertex moves, so the property is evaluated on the local run.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

from .automata import Gr1Kind, classify_gr1, find_accepting_lasso, ltl_to_nba
from .ltl import (Formula, Op, always, atom, conj, erase_index, evaluate, eventually,
                  implies, index_tags, instantiate, negate_nnf, neg, atom_keys, pretty,
                  signal_names)
from .machine import (ProcessTemplate, Run, RingSystem, SingleProcess, Step, Timing,
                      compose_ring)
from .spec_parser import SEND, TOKEN, ParamSpec, Shape, ShapeError, UnsupportedShape

ONE_INDEXED_CUTOFF = 2
TWO_INDEXED_CUTOFF = 4
MUTUAL_EXCLUSION_LABEL = "G12"


class Status(Enum):
    PASS = "pass"
    FAIL = "fail"
    UNSUPPORTED = "unsupported"


@dataclass
class Verdict:
    status: Status
    property: str
    size: int
    timing: Timing
    counterexample: Optional[Run] = None
    message: str = ""
    vertex: Optional[int] = None        # projection vertex of a local property
    checked: Optional[Formula] = None   # assumptions -> property, as checked

    @property
    def passed(self) -> bool:
        return self.status == Status.PASS

    def to_dict(self) -> Dict:
        data = {
            "property": self.property,
            "size": self.size,
            "timing": self.timing.value,
            "status": self.status.value,
        }
        if self.message:
            data["message"] = self.message
        if self.counterexample is not None:
            data["counterexample"] = {
                "loop_start": self.counterexample.loop_start,
                "steps": [{"state": list(s.state) if isinstance(s.state, tuple) else [s.state],
                           "inputs": sorted(s.inputs),
                           "scheduled": sorted(s.scheduled)}
                          for s in self.counterexample.steps],
            }
        return data


def _input_names(system) -> set:
    if isinstance(system, SingleProcess):
        return set(system.template.inputs)
    names = {"sch", "rcv"} | set(system.global_inputs)
    for t in system.templates:
        names |= set(t.inputs)
    return names


def model_check(system, prop: Formula, assumptions: Sequence[Formula] = (),
                label: Optional[str] = None, fair: bool = True) -> Verdict:
    """
    Check that every run satisfying the assumptions satisfies prop.

    Args:
        system: a RingSystem or SingleProcess
        prop: property with concrete vertex indices (bare names for SingleProcess)
        assumptions: assumption formulas, instantiated like prop
        label: property id used in the verdict
        fair: under interleaving, only runs scheduling every vertex infinitely often count

    Returns:
        Verdict; FAIL carries a replayable counterexample lasso
    """
    label = label or pretty(prop)
    size = system.size
    timing = system.timing
    if timing == Timing.FULLY_ASYNCHRONOUS:
        return Verdict(Status.UNSUPPORTED, label, size, timing,
                       message="model checking under fully asynchronous timing is not supported")
    tags = index_tags(prop)
    for f in assumptions:
        tags |= index_tags(f)
    if any(isinstance(t, str) for t in tags):
        raise ShapeError(f"property must be instantiated before model checking: {label}")

    vertices = sorted(t for t in index_tags(prop) if isinstance(t, int))
    if len(vertices) >= 2 and signal_names(prop) & _input_names(system):
        return Verdict(Status.UNSUPPORTED, label, size, timing,
                       message="properties over two or more processes may not mention inputs")
    stutter = (timing == Timing.INTERLEAVING and isinstance(system, RingSystem) and len(vertices) == 1)
    vertex = vertices[0] if stutter else None

    checked = implies(conj(*assumptions), prop)
    nba = ltl_to_nba(negate_nnf(checked))
    relevant = frozenset(atom_keys(checked))
    fairness = list(range(size)) if (fair and timing == Timing.INTERLEAVING) else []
    rounds = 1 + len(fairness)
    cache: Dict = {}

    def system_steps(s):
        if s not in cache:
            cache[s] = system.steps(s, relevant)
        return cache[s]

    def successors(node):
        s, a, level = node
        label_s = system.label(s)
        for step in system_steps(s):
            if stutter and vertex not in step.scheduled:
                moves = [(a, False)]
            else:
                valuation = label_s | step.inputs
                moves = [(b, True) for b in nba.step(a, valuation)]
            for b, real in moves:
                done = [real and b in nba.accepting] + [v in step.scheduled for v in fairness]
                next_level = 0 if level == rounds else level
                while next_level < rounds and done[next_level]:
                    next_level += 1
                yield step, (step.target, b, next_level)

    initial = [(s, a, 0) for s in system.initial_states() for a in sorted(nba.initial)]
    lasso = find_accepting_lasso(initial, successors, lambda node: node[2] == rounds)
    if lasso is None:
        return Verdict(Status.PASS, label, size, timing, vertex=vertex, checked=checked)
    steps = [Step(node[0], step.inputs, step.scheduled) for node, step in lasso.stem + lasso.loop]
    run = Run(tuple(steps), len(lasso.stem))
    return Verdict(Status.FAIL, label, size, timing, counterexample=run, vertex=vertex, checked=checked,
                   message=f"counterexample with stem {len(lasso.stem)} and loop {len(lasso.loop)}")


def replay_counterexample(verdict: Verdict, system) -> bool:
    """True when the verdict's lasso really violates the checked formula"""
    if verdict.counterexample is None or verdict.checked is None:
        return False
    stem, loop = verdict.counterexample.word(system, verdict.vertex)
    if not loop:
        return False
    return not evaluate(verdict.checked, stem, loop)


# ----------------------------------------------------------------------------
# Shapes and cutoffs
# ----------------------------------------------------------------------------

class AssumptionClass(Enum):
    BOOLEAN_INVARIANT = "boolean-invariant"
    LIVENESS = "liveness"
    NONE = "none"


@dataclass(frozen=True)
class SpecShape:
    indexing: str                # "one" or "two"
    assumption_class: AssumptionClass
    uses_global_inputs: bool


def spec_shape(spec: ParamSpec) -> SpecShape:
    """
    Derive the cutoff-relevant shape of a specification.

    Localized specs count as assumption-free: their assumptions are
    local to each process and guard its own guarantees.
    """
    indexing = "two" if spec.shape == Shape.TWO_INDEXED else "one"
    if spec.localized or not spec.assumptions:
        klass = AssumptionClass.NONE
    elif all(classify_gr1(a.formula, spec.inputs).kind == Gr1Kind.SIMPLE_ASSUMPTION
             for a in spec.assumptions):
        klass = AssumptionClass.BOOLEAN_INVARIANT
    else:
        klass = AssumptionClass.LIVENESS
    global_inputs = set(spec.global_inputs)
    uses = any(signal_names(p.formula) & global_inputs for p in spec.properties())
    return SpecShape(indexing, klass, uses)


def cutoff_for(shape: SpecShape) -> int:
    """
    Ring size that suffices for parameterized correctness.

    Raises:
        UnsupportedShape: for unlocalized liveness assumptions
    """
    if shape.assumption_class == AssumptionClass.LIVENESS:
        raise UnsupportedShape("liveness assumptions over local and global inputs have no cutoff; "
                               "localize the assumptions first")
    return TWO_INDEXED_CUTOFF if shape.indexing == "two" else ONE_INDEXED_CUTOFF


# ----------------------------------------------------------------------------
# Parameterized verification
# ----------------------------------------------------------------------------

def token_release_property() -> Formula:
    return always(implies(atom(TOKEN), eventually(atom(SEND))))


def check_token_release(t: ProcessTemplate, ass: Sequence[Formula] = ()) -> Verdict:
    """A reachable token holder eventually sends under every input sequence meeting `ass`"""
    return model_check(SingleProcess(t), token_release_property(),
                       [erase_index(a) for a in ass], label="token-release")


@dataclass
class VerificationReport:
    spec: str
    verdicts: List[Verdict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def failures(self) -> List[Verdict]:
        return [v for v in self.verdicts if not v.passed]

    def to_text(self) -> str:
        lines = [f"Verification of {self.spec}", "=" * 50]
        for v in self.verdicts:
            mark = {"pass": "✅", "fail": "❌", "unsupported": "⚠️ "}[v.status.value]
            where = f"n={v.size}" if v.size > 1 else "single process"
            lines.append(f"{mark} {v.property:<24} {where:<16} {v.timing.value:<13} {v.status.value}")
            if v.message and not v.passed:
                lines.append(f"     {v.message}")
        lines.append("=" * 50)
        lines.append(f"{sum(v.passed for v in self.verdicts)}/{len(self.verdicts)} checks passed")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"spec": self.spec, "passed": self.passed,
                           "verdicts": [v.to_dict() for v in self.verdicts]}, indent=2) + "\n"


def _grant_name(spec: ParamSpec) -> Optional[str]:
    prop = spec.property(MUTUAL_EXCLUSION_LABEL)
    if prop is None:
        return None
    f = prop.formula
    if f.op == Op.GLOBALLY and f.children[0].op == Op.IMPLIES and f.children[0].children[0].op == Op.ATOM:
        return f.children[0].children[0].name
    return None


def _has_index(f: Formula, name: str) -> bool:
    return name in index_tags(f)


def verify_parameterized(t_generic: ProcessTemplate, t_zero: Optional[ProcessTemplate],
                         spec: ParamSpec, zero_spec: Optional[ParamSpec] = None,
                         timing: Timing = Timing.SYNCHRONOUS, full_instantiation: bool = False,
                         verbose: bool = False) -> VerificationReport:
    """
    Verify templates against a localized specification for all ring sizes.

    Args:
        t_generic: template used by every process (but vertex 0 when t_zero is given)
        t_zero: optional template for process 0
        spec: localized specification of the generic process
        zero_spec: specification of process 0 (defaults to spec)
        timing: ring timing model
        full_instantiation: check every vertex instead of relying on rotation symmetry
        verbose: print progress

    Returns:
        VerificationReport with one verdict per check
    """
    zero_spec = zero_spec or spec
    report = VerificationReport(spec.name)

    def record(verdict: Verdict):
        report.verdicts.append(verdict)
        if verbose:
            mark = "✅" if verdict.passed else "❌"
            print(f"{mark} {verdict.property} (n={verdict.size}): {verdict.status.value}")

    record(check_token_release(t_generic, [a.formula for a in spec.assumptions]))
    if t_zero is not None:
        verdict = check_token_release(t_zero, [a.formula for a in zero_spec.assumptions])
        verdict.property = "token-release[0]"
        record(verdict)

    global_inputs = sorted(set(spec.global_inputs) | set(zero_spec.global_inputs))

    def spec_at(v: int) -> ParamSpec:
        return zero_spec if (v == 0 and t_zero is not None) else spec

    def checks_one(ring, v):
        s = spec_at(v)
        tr_labels = {p.label for p in s.tr_guarantees}
        for p in list(s.guarantees) + list(s.tr_guarantees):
            if _has_index(p.formula, "j"):
                continue
            pool = s.ring_assumptions() if p.label in tr_labels else list(s.assumptions)
            ass = [instantiate(a.formula, {"i": v}) for a in pool]
            record(model_check(ring, instantiate(p.formula, {"i": v}), ass, label=f"{p.label}[{v}]"))

    ring = compose_ring(t_generic, ONE_INDEXED_CUTOFF, timing, global_inputs, t_zero)
    if verbose:
        print(f"🔍 Checking one-indexed properties at n={ONE_INDEXED_CUTOFF} ({timing.value})")
    if full_instantiation:
        vertices = range(ONE_INDEXED_CUTOFF)
    else:
        vertices = [0, 1] if t_zero is not None else [0]
    for v in vertices:
        checks_one(ring, v)

    # two-indexed: explicit i/j properties and mutual exclusion derived from G12
    pairs = [(i, j) for i in range(TWO_INDEXED_CUTOFF) for j in range(TWO_INDEXED_CUTOFF) if i != j] \
        if full_instantiation else [(0, j) for j in range(1, TWO_INDEXED_CUTOFF)]
    two_indexed = [p for p in spec.guarantees if _has_index(p.formula, "j")]
    grant = _grant_name(spec)
    if two_indexed or grant:
        big = compose_ring(t_generic, TWO_INDEXED_CUTOFF, timing, global_inputs, t_zero)
        if verbose:
            print(f"🔍 Checking two-indexed properties at n={TWO_INDEXED_CUTOFF} ({timing.value})")
        for i, j in pairs:
            for p in two_indexed:
                ass = [instantiate(a.formula, {"i": v}) for v in range(TWO_INDEXED_CUTOFF)
                       for a in spec_at(v).assumptions]
                record(model_check(big, instantiate(p.formula, {"i": i, "j": j}), ass,
                                   label=f"{p.label}[{i},{j}]"))
            if grant:
                prop = always(neg(conj(atom(grant, i), atom(grant, j))))
                record(model_check(big, prop, label=f"mutex[{i},{j}]"))
    return report

"""
Bounded synthesis of process templates.

encode turns a hub-reduced specification and a state bound into a
ConstraintSystem over three function tables: the transition function
delta(q, input), the outputs out(q) and a ranking rho(a, q) over the product
with the Büchi automaton of the negated specification. The system is
satisfiable iff a template with `bound` states exists whose product with
the automaton has no reachable accepting cycle.

synthesize tries bounds in ascending order; decompose_synthesize runs a
list of stages, each pinning the model of the previous one.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from .automata import NBA, Gr1Class, Gr1Kind, classify_gr1, ltl_to_nba
from .ltl import (TRUE, Formula, Op, conj, erase_index, evaluate_boolean, index_tags,
                  negate_nnf, pretty, strip_prenex)
from .machine import ProcessTemplate, Timing, load_template, validate_template
from .solve import (DEFAULT_CELL_CAP, DEFAULT_NODE_BUDGET, DEFAULT_TIMEOUT, Assignment,
                    SolverOutcome, SolverStatus, check_assignment, emit_smtlib, out_symbol,
                    run_external, solve_builtin)
from .spec_parser import (LABEL_RE, RECEIVE, SECTION_RE, SEND, TOKEN, ParamSpec, Property, Role,
                          ShapeError, SignalTable, SpecSyntaxError, load_spec, parse_formula)
from .transforms import add_assumptions, hub_reduce
from .verify import VerificationReport, check_token_release, verify_parameterized

EXTERNAL_PREFIX = "external:"


class SynthesisError(ValueError):
    pass


class BoundTooSmall(SynthesisError):
    pass


class InconsistentAssignment(SynthesisError):
    pass


class StageRegression(SynthesisError):
    pass


# ----------------------------------------------------------------------------
# Constraints
# ----------------------------------------------------------------------------

def _out(name: str, term) -> str:
    return f"({out_symbol(name)} {term})"


def _delta(q: int, mask: int) -> str:
    return f"(delta {q} {mask})"


def _smt_formula(f: Formula, sigma: FrozenSet[str], inputs: FrozenSet[str], now, after) -> str:
    """Render a one-step Boolean formula; inputs are constants, X moves to `after`"""
    op = f.op
    if op == Op.ATOM:
        if f.key in inputs:
            return "true" if f.key in sigma else "false"
        return _out(f.key, now)
    if op == Op.TRUE:
        return "true"
    if op == Op.FALSE:
        return "false"
    if op == Op.NEXT:
        return _smt_formula(f.children[0], sigma, inputs, after, after)
    parts = [_smt_formula(c, sigma, inputs, now, after) for c in f.children]
    symbol = {Op.NOT: "not", Op.AND: "and", Op.OR: "or", Op.IMPLIES: "=>", Op.IFF: "="}.get(op)
    if symbol is None:
        raise ValueError(f"not a one-step Boolean formula: {pretty(f)}")
    return f"({symbol} {' '.join(parts)})"


@dataclass(frozen=True)
class InitialReach:
    """rho(a, q) >= 0 for an initial automaton state and an initial template state"""
    a: int
    q: int

    def holds(self, cs, asg: Assignment) -> bool:
        return asg.rank.get((self.a, self.q), -1) >= 0

    def smt(self, cs) -> str:
        return f"(>= (rho {self.a} {self.q}) 0)"


@dataclass(frozen=True)
class RankStep:
    """
    rho(a,q) >= 0 and out(q) matches the guard -> rho(b, delta(q,sigma)) >= rho(a,q),
    strictly when b is accepting. The input part of the guard is already
    decided by sigma; `pos`/`neg` are the outputs it requires true/false.
    """
    q: int
    mask: int
    a: int
    b: int
    pos: FrozenSet[str]
    neg: FrozenSet[str]
    strict: bool

    def holds(self, cs, asg: Assignment) -> bool:
        here = asg.rank.get((self.a, self.q), -1)
        if here < 0:
            return True
        out = asg.out[self.q]
        if not self.pos <= out or self.neg & out:
            return True
        there = asg.rank.get((self.b, asg.delta[(self.q, self.mask)]), -1)
        return there > here if self.strict else there >= here

    def smt(self, cs) -> str:
        premise = [f"(>= (rho {self.a} {self.q}) 0)"]
        premise += [_out(o, self.q) for o in sorted(self.pos)]
        premise += [f"(not {_out(o, self.q)})" for o in sorted(self.neg)]
        compare = ">" if self.strict else ">="
        conclusion = f"({compare} (rho {self.b} {_delta(self.q, self.mask)}) (rho {self.a} {self.q}))"
        if len(premise) == 1:
            return f"(=> {premise[0]} {conclusion})"
        return f"(=> (and {' '.join(premise)}) {conclusion})"


@dataclass(frozen=True)
class TokenTyping:
    """Token bookkeeping of delta on one cell"""
    q: int
    mask: int
    receiving: bool

    def holds(self, cs, asg: Assignment) -> bool:
        out = asg.out[self.q]
        has, sends = TOKEN in out, SEND in out
        after = TOKEN in asg.out[asg.delta[(self.q, self.mask)]]
        if self.receiving:
            return has or after
        if not has or sends:
            return not after
        return after

    def smt(self, cs) -> str:
        tok, snd = _out(TOKEN, self.q), _out(SEND, self.q)
        after = _out(TOKEN, _delta(self.q, self.mask))
        if self.receiving:
            return f"(=> (not {tok}) {after})"
        return (f"(and (=> (and {tok} {snd}) (not {after})) (=> (not {tok}) (not {after})) "
                f"(=> (and {tok} (not {snd})) {after}))")


@dataclass(frozen=True)
class SendImpliesToken:
    q: int

    def holds(self, cs, asg: Assignment) -> bool:
        out = asg.out[self.q]
        return SEND not in out or TOKEN in out

    def smt(self, cs) -> str:
        return f"(=> {_out(SEND, self.q)} {_out(TOKEN, self.q)})"


@dataclass(frozen=True)
class SafetyStep:
    """alpha(sigma) -> beta(sigma, out(q), out(delta(q, sigma))) for a simple safety conjunct"""
    q: int
    mask: int
    label: str
    beta: Formula
    receiving: bool

    def holds(self, cs, asg: Assignment) -> bool:
        out = asg.out[self.q]
        if self.receiving and TOKEN in out:
            return True
        after = asg.out[asg.delta[(self.q, self.mask)]]
        return evaluate_boolean(self.beta, cs.valuation(self.mask) | out, after)

    def smt(self, cs) -> str:
        body = _smt_formula(self.beta, cs.valuation(self.mask), frozenset(cs.inputs),
                            self.q, _delta(self.q, self.mask))
        if self.receiving:
            return f"(=> (not {_out(TOKEN, self.q)}) {body})"
        return body


@dataclass(frozen=True)
class PinOutput:
    q: int
    name: str
    value: bool

    def holds(self, cs, asg: Assignment) -> bool:
        return (self.name in asg.out[self.q]) == self.value

    def smt(self, cs) -> str:
        term = _out(self.name, self.q)
        return term if self.value else f"(not {term})"


@dataclass(frozen=True)
class PinDelta:
    q: int
    mask: int
    target: int

    def holds(self, cs, asg: Assignment) -> bool:
        return asg.delta[(self.q, self.mask)] == self.target

    def smt(self, cs) -> str:
        return f"(= {_delta(self.q, self.mask)} {self.target})"


@dataclass(frozen=True)
class Pins:
    """Values fixed from a previous stage"""
    out: Mapping[int, FrozenSet[str]] = field(default_factory=dict)
    delta: Mapping[Tuple[int, int], int] = field(default_factory=dict)
    floor: int = 0


# ----------------------------------------------------------------------------
# Constraint system
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintSystem:
    spec: ParamSpec
    bound: int
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    formula: Formula                # the part of the specification bound to the automaton
    nba: NBA                        # automaton of the negated formula
    alpha: Formula = TRUE           # simple assumptions, filter on inputs
    safety: Tuple[Property, ...] = ()
    gr1_direct: bool = False
    token_hardcoded: bool = False
    pins: Pins = field(default_factory=Pins)

    @property
    def num_masks(self) -> int:
        return 1 << len(self.inputs)

    @property
    def rcv_bit(self) -> int:
        return 1 << self.inputs.index(RECEIVE)

    @property
    def rank_ceiling(self) -> int:
        return self.nba.num_states * self.bound

    def valuation(self, mask: int) -> FrozenSet[str]:
        return frozenset(n for k, n in enumerate(self.inputs) if mask >> k & 1)

    def mask_of(self, names: Iterable[str]) -> int:
        return sum(1 << self.inputs.index(n) for n in set(names) if n in self.inputs)

    def alpha_holds(self, mask: int) -> bool:
        return evaluate_boolean(self.alpha, self.valuation(mask))

    def token_pin(self, q: int) -> Optional[bool]:
        """Required tok value of state q, None when free"""
        if q == 0:
            return False
        if q == 1 or self.token_hardcoded:
            return True
        pinned = self.pins.out.get(q)
        return None if pinned is None else TOKEN in pinned

    def constraints(self) -> Iterator:
        """All constraints in a fixed order"""
        n, inputs = self.bound, frozenset(self.inputs)
        for a in sorted(self.nba.initial):
            yield InitialReach(a, 0)
            yield InitialReach(a, 1)
        yield PinOutput(0, TOKEN, False)
        yield PinOutput(1, TOKEN, True)
        if self.token_hardcoded:
            for q in range(2, n):
                yield PinOutput(q, TOKEN, True)
        for q, values in sorted(self.pins.out.items()):
            for name in self.outputs:
                yield PinOutput(q, name, name in values)
        for (q, mask), target in sorted(self.pins.delta.items()):
            yield PinDelta(q, mask, target)
        for q in range(n):
            yield SendImpliesToken(q)
        rcv = self.rcv_bit
        for q in range(n):
            for mask in range(self.num_masks):
                yield TokenTyping(q, mask, bool(mask & rcv))
        outputs = frozenset(self.outputs)
        for q in range(n):
            for mask in range(self.num_masks):
                if not self.alpha_holds(mask):
                    continue
                sigma = self.valuation(mask)
                receiving = bool(mask & rcv)
                for t in self.nba.transitions:
                    if not (t.pos & inputs) <= sigma or t.neg & sigma or t.pos - inputs - outputs:
                        continue
                    pos = t.pos & outputs
                    neg = (t.neg & outputs) | ({TOKEN} if receiving else set())
                    if pos & neg:
                        continue
                    yield RankStep(q, mask, t.src, t.dst, frozenset(pos), frozenset(neg),
                                   t.dst in self.nba.accepting)
                for prop in self.safety:
                    yield SafetyStep(q, mask, prop.label, prop.formula, receiving)


@lru_cache(maxsize=32)
def negated_automaton(formula: Formula) -> NBA:
    """Automaton for the negation of formula; shared by all bounds"""
    return ltl_to_nba(negate_nnf(formula))


def _hub_signals(spec: ParamSpec) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    inputs = tuple(spec.inputs) + tuple(n for n in (RECEIVE,) if n not in spec.inputs)
    outputs = tuple(spec.all_outputs) + tuple(n for n in (TOKEN, SEND) if n not in spec.all_outputs)
    return inputs, outputs


def encode(spec: ParamSpec, bound: int) -> ConstraintSystem:
    """
    Encode a hub-reduced specification with a state bound.

    Raises:
        BoundTooSmall: bound < 2 (one state with and one without the token are needed)
        ShapeError: the spec still carries process indices
    """
    if bound < 2:
        raise BoundTooSmall(f"bound {bound} is too small; a template needs at least 2 states")
    formula = spec.formula()
    if any(tag is not None for tag in index_tags(formula)):
        raise ShapeError(f"spec {spec.name} must be hub-reduced before encoding")
    inputs, outputs = _hub_signals(spec)
    return ConstraintSystem(spec, bound, inputs, outputs, formula, negated_automaton(formula))


def apply_gr1_direct(cs: ConstraintSystem,
                     classes: Optional[Mapping[str, Gr1Class]] = None) -> ConstraintSystem:
    """
    Take simple GR(1) conjuncts out of the automaton.

    Simple assumptions become a filter on the inputs of every ranking
    premise; simple safety guarantees become per-cell constraints. Only the
    remaining conjuncts are translated to the automaton.

    Args:
        cs: constraint system from encode
        classes: property label -> classification (computed when omitted)
    """
    spec = cs.spec
    if classes is None:
        classes = {p.label: classify_gr1(p.formula, cs.inputs) for p in spec.properties()}

    def kind(p):
        c = classes.get(p.label)
        return c.kind if c is not None else Gr1Kind.GENERAL

    alpha = [p for p in spec.assumptions if kind(p) == Gr1Kind.SIMPLE_ASSUMPTION]
    safety = [p for p in list(spec.guarantees) + list(spec.tr_guarantees)
              if kind(p) == Gr1Kind.SIMPLE_SAFETY]
    if not alpha and not safety:
        return cs
    moved = {p.label for p in alpha + safety}
    residual = replace(spec,
                       assumptions=tuple(p for p in spec.assumptions if p.label not in moved),
                       guarantees=tuple(p for p in spec.guarantees if p.label not in moved),
                       tr_guarantees=tuple(p for p in spec.tr_guarantees if p.label not in moved))
    formula = residual.formula()
    return replace(cs,
                   formula=formula,
                   nba=negated_automaton(formula),
                   alpha=conj(cs.alpha, *(classes[p.label].formula for p in alpha)),
                   safety=cs.safety + tuple(Property(p.label, classes[p.label].formula) for p in safety),
                   gr1_direct=True)


def hardcode_token(cs: ConstraintSystem) -> ConstraintSystem:
    """State 0 is the only state without the token"""
    if cs.bound < 2:
        raise BoundTooSmall(f"bound {cs.bound} is too small to hardcode token states")
    for q, values in cs.pins.out.items():
        if q > 0 and TOKEN not in values:
            raise StageRegression(f"pinned state {q} has no token; cannot hardcode token states")
    return replace(cs, token_hardcoded=True)


def pin_template(cs: ConstraintSystem, template: ProcessTemplate, alpha: Formula = TRUE) -> ConstraintSystem:
    """
    Fix the states of an earlier model: their outputs, and their transitions
    on every input satisfying alpha.

    Raises:
        BoundTooSmall: the bound is below the model size
        StageRegression: the model does not fit this system
    """
    if set(template.inputs) != set(cs.inputs) or set(template.outputs) != set(cs.outputs):
        raise StageRegression("the earlier model uses different signals")
    if template.initial_idle != 0 or template.initial_token != 1:
        raise StageRegression("the earlier model must start in state 0 (idle) and state 1 (token)")
    if cs.bound < template.num_states:
        raise BoundTooSmall(f"bound {cs.bound} is below the {template.num_states} states of the earlier model")
    out = {q: template.labels[q] for q in range(template.num_states)}
    for q, values in out.items():
        expected = cs.token_pin(q)
        if expected is not None and expected != (TOKEN in values):
            raise StageRegression(f"state {q} of the earlier model conflicts with the token layout")
    delta = {}
    for (q, tmask), targets in sorted(template.delta.items()):
        names = template.valuation(tmask)
        if not targets or (template.is_token(q) and RECEIVE in names):
            continue
        if evaluate_boolean(alpha, names):
            delta[(q, cs.mask_of(names))] = min(targets)
    return replace(cs, pins=Pins(out, delta, template.num_states))


def decode_model(cs: ConstraintSystem, assignment: Assignment) -> ProcessTemplate:
    """
    Read the template out of a satisfying assignment.

    Raises:
        InconsistentAssignment: the result is not a well-formed template
    """
    delta = {}
    rcv = cs.rcv_bit
    for q in range(cs.bound):
        for mask in range(cs.num_masks):
            if TOKEN in assignment.out[q] and mask & rcv:
                continue
            delta[(q, mask)] = (assignment.delta[(q, mask)],)
    template = ProcessTemplate(cs.inputs, cs.outputs, tuple(assignment.out), delta, 1, 0)
    violations = validate_template(template)
    if violations:
        raise InconsistentAssignment("decoded template is ill-formed: "
                                     + "; ".join(str(v) for v in violations[:3]))
    return template


# ----------------------------------------------------------------------------
# Bound iteration
# ----------------------------------------------------------------------------

class Outcome(Enum):
    MODEL = "model"
    NOT_FOUND = "not-found"
    UNKNOWN = "unknown"


@dataclass
class SynthOptions:
    gr1_direct: bool = False
    hardcode_token: bool = True
    solver: str = "builtin"             # or "external:<command>"
    timeout: int = DEFAULT_TIMEOUT
    cell_cap: int = DEFAULT_CELL_CAP
    node_budget: int = DEFAULT_NODE_BUDGET
    jobs: int = 1
    timing: Timing = Timing.SYNCHRONOUS
    smt_dir: Optional[str] = None
    verbose: bool = False

    @property
    def external_command(self) -> Optional[str]:
        if self.solver.startswith(EXTERNAL_PREFIX):
            return self.solver[len(EXTERNAL_PREFIX):].strip()
        return None


@dataclass
class BoundStat:
    bound: int
    status: str
    seconds: float
    backend: str
    automaton_states: int
    gr1_direct: bool = False


@dataclass
class SynthesisResult:
    outcome: Outcome
    model: Optional[ProcessTemplate] = None
    bound: Optional[int] = None
    stats: List[BoundStat] = field(default_factory=list)
    report: Optional[VerificationReport] = None
    message: str = ""
    stages: List["SynthesisResult"] = field(default_factory=list)

    @property
    def verified(self) -> bool:
        return self.model is not None and self.report is not None and self.report.passed


def build_system(spec: ParamSpec, bound: int, options: SynthOptions, gr1_direct: bool,
                 prior: Optional[ProcessTemplate] = None, prior_alpha: Formula = TRUE) -> ConstraintSystem:
    cs = encode(spec, bound)
    if gr1_direct:
        cs = apply_gr1_direct(cs)
    if options.hardcode_token:
        cs = hardcode_token(cs)
    if prior is not None:
        cs = pin_template(cs, prior, prior_alpha)
    return cs


def smt_file_name(cs: ConstraintSystem) -> str:
    return f"{cs.spec.name}.n{cs.bound}.smt2"


def solve_system(cs: ConstraintSystem, options: SynthOptions) -> SolverOutcome:
    """Run the configured backend on cs and check any model it returns"""
    command = options.external_command
    script = emit_smtlib(cs) if (command or options.smt_dir) else None
    if options.smt_dir:
        os.makedirs(options.smt_dir, exist_ok=True)
        with open(os.path.join(options.smt_dir, smt_file_name(cs)), "w") as f:
            f.write(script)
    if command is None:
        outcome = solve_builtin(cs, options.node_budget, options.cell_cap)
    else:
        outcome = run_external(command, script, cs, options.timeout)
    if outcome.status == SolverStatus.SAT:
        violated = check_assignment(cs, outcome.assignment)
        if violated:
            raise InconsistentAssignment(f"{outcome.backend} model violates {len(violated)} constraints, "
                                         f"first: {violated[0]}")
    return outcome


def post_verify(model: ProcessTemplate, spec: ParamSpec, ring_spec: Optional[ParamSpec],
                options: SynthOptions) -> VerificationReport:
    """Token release of the model, then the ring checks when a generic ring spec is known"""
    if ring_spec is not None and ring_spec.role == Role.GENERIC:
        return verify_parameterized(model, None, ring_spec, timing=options.timing, verbose=options.verbose)
    report = VerificationReport(spec.name)
    report.verdicts.append(check_token_release(model, [a.formula for a in spec.assumptions]))
    return report


def _log(options: SynthOptions, message: str):
    if options.verbose:
        print(message)


def _run_bounds(spec, bounds, options, gr1_direct, prior, prior_alpha):
    """Yield (bound, system, outcome) in ascending bound order"""
    if options.jobs > 1 and options.external_command:
        systems = [(n, build_system(spec, n, options, gr1_direct, prior, prior_alpha)) for n in bounds]
        executor = ThreadPoolExecutor(max_workers=options.jobs)
        futures = [(n, cs, executor.submit(solve_system, cs, options)) for n, cs in systems]
        try:
            for n, cs, future in futures:
                yield n, cs, future.result()
        finally:
            executor.shutdown(wait=False, cancel_futures=True)
        return
    for n in bounds:
        cs = build_system(spec, n, options, gr1_direct, prior, prior_alpha)
        _log(options, f"🔄 Bound {n}: {cs.nba.num_states} automaton states, "
                      f"{n * cs.num_masks} transition cells")
        yield n, cs, solve_system(cs, options)


def synthesize(spec: ParamSpec, bounds: Sequence[int], options: Optional[SynthOptions] = None,
               ring_spec: Optional[ParamSpec] = None, prior: Optional[ProcessTemplate] = None,
               prior_alpha: Formula = TRUE) -> SynthesisResult:
    """
    Search the smallest template satisfying a hub-reduced specification.

    Args:
        spec: hub-reduced specification
        bounds: candidate state counts, tried in ascending order
        options: solver and encoding options
        ring_spec: localized spec the model is verified against in a ring
        prior: model of an earlier stage to extend
        prior_alpha: assumption under which the earlier model was built

    Returns:
        SynthesisResult; a model is only reported after validation
    """
    options = options or SynthOptions()
    bounds = sorted(n for n in set(bounds) if prior is None or n >= prior.num_states)
    if not bounds:
        return SynthesisResult(Outcome.NOT_FOUND, message="empty bound range")
    stats: List[BoundStat] = []
    attempts = [True, False] if options.gr1_direct else [False]
    unknown = False
    for gr1 in attempts:
        if not gr1 and options.gr1_direct:
            _log(options, "🔄 No model with the direct GR(1) encoding, retrying without it")
        for n, cs, outcome in _run_bounds(spec, bounds, options, gr1, prior, prior_alpha):
            stats.append(BoundStat(n, outcome.status.value, outcome.seconds, outcome.backend,
                                   cs.nba.num_states, cs.gr1_direct))
            if outcome.status == SolverStatus.UNKNOWN:
                unknown = True
                _log(options, f"⚠️  Bound {n}: unknown ({outcome.message})")
                continue
            if outcome.status == SolverStatus.UNSAT:
                _log(options, f"🔍 Bound {n}: no model")
                continue
            model = decode_model(cs, outcome.assignment)
            _log(options, f"✅ Bound {n}: model with {model.num_states} states")
            report = post_verify(model, spec, ring_spec, options)
            return SynthesisResult(Outcome.MODEL, model, n, stats, report)
        if unknown:
            break
    if unknown:
        return SynthesisResult(Outcome.UNKNOWN, bound=bounds[-1], stats=stats,
                               message=f"solver gave up at some bound up to {bounds[-1]}")
    return SynthesisResult(Outcome.NOT_FOUND, bound=bounds[-1], stats=stats,
                           message=f"not found up to {bounds[-1]}")


def format_stats(stats: Sequence[BoundStat]) -> str:
    lines = ["📊 Synthesis statistics", "=" * 50,
             f"{'bound':>5}  {'status':<8} {'seconds':>8}  {'automaton':>9}  backend"]
    for s in stats:
        tag = " (gr1)" if s.gr1_direct else ""
        lines.append(f"{s.bound:>5}  {s.status:<8} {s.seconds:>8.2f}  {s.automaton_states:>9}  {s.backend}{tag}")
    lines.append("=" * 50)
    return "\n".join(lines)


# ----------------------------------------------------------------------------
# Decompositional synthesis
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    spec_path: str
    spec: ParamSpec
    assumptions: Tuple[Property, ...] = ()
    model_path: Optional[str] = None

    def with_assumptions(self) -> ParamSpec:
        return add_assumptions(self.spec, list(self.assumptions)) if self.assumptions else self.spec

    def alpha(self) -> Formula:
        """Conjunction of the extra assumptions as a Boolean input filter"""
        return conj(*(classify_gr1(erase_index(strip_prenex(p.formula)), self.spec.inputs).formula
                      for p in self.assumptions))


def load_stages(path: str) -> List[Stage]:
    """
    Read a stage file.

    Format:
        [STAGE] spec path (relative to the stage file)
        [ASSUME] [LABEL:] formula   extra invariant assumption, repeatable
        [MODEL] template path      optional model of this stage to resume from

    Raises:
        SpecSyntaxError: unknown section or misplaced line
        ShapeError: an extra assumption is not an invariant over inputs
    """
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r") as f:
        lines = f.read().splitlines()
    stages: List[Dict] = []
    for number, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        match = SECTION_RE.match(line)
        if not match:
            raise SpecSyntaxError("expected [STAGE], [ASSUME] or [MODEL]", number, 1)
        section, body = match.group(1), match.group(2).strip()
        column = raw.index(body) + 1 if body else 1
        if section == "STAGE":
            spec_path = os.path.join(base, body)
            stages.append({"spec_path": spec_path, "spec": load_spec(spec_path), "assumptions": [],
                           "model_path": None})
            continue
        if not stages:
            raise SpecSyntaxError(f"[{section}] before the first [STAGE]", number, 1)
        stage = stages[-1]
        if section == "ASSUME":
            label = f"S{len(stages)}.{len(stage['assumptions']) + 1}"
            label_match = LABEL_RE.match(body)
            if label_match:
                label = label_match.group(1)
                column += label_match.end()
                body = body[label_match.end():]
            formula = parse_formula(body, SignalTable.of(stage["spec"]), number, column - 1)
            shape = classify_gr1(erase_index(strip_prenex(formula)), stage["spec"].inputs)
            if shape.kind != Gr1Kind.SIMPLE_ASSUMPTION:
                raise ShapeError(f"stage assumption {label} must be G of a Boolean over inputs", number, column)
            stage["assumptions"].append(Property(label, formula))
        elif section == "MODEL":
            stage["model_path"] = os.path.join(base, body)
        else:
            raise SpecSyntaxError(f"unknown stage section [{section}]", number, 1)
    return [Stage(s["spec_path"], s["spec"], tuple(s["assumptions"]), s["model_path"]) for s in stages]


def decompose_synthesize(stages: Sequence[Stage], bounds: Sequence[int],
                         options: Optional[SynthOptions] = None) -> SynthesisResult:
    """
    Synthesize stage by stage, each stage extending the previous model.

    Returns:
        Result of the last stage reached, with every stage result in `stages`

    Raises:
        StageRegression: a later stage cannot extend the previous model
    """
    options = options or SynthOptions()
    results: List[SynthesisResult] = []
    prior: Optional[ProcessTemplate] = None
    prior_alpha: Formula = TRUE
    for k, stage in enumerate(stages, 1):
        spec = stage.with_assumptions()
        reduced = spec if spec.role == Role.MONOLITHIC else hub_reduce(spec)
        _log(options, f"🧩 Stage {k}/{len(stages)}: {os.path.basename(stage.spec_path)}"
                      + "".join(f" + {pretty(a.formula)}" for a in stage.assumptions))
        if stage.model_path:
            model = load_template(stage.model_path)
            result = SynthesisResult(Outcome.MODEL, model, model.num_states,
                                     message=f"loaded from {stage.model_path}")
        else:
            ring_spec = spec if spec.role == Role.GENERIC else None
            start = time.monotonic()
            result = synthesize(reduced, bounds, options, ring_spec, prior, prior_alpha)
            _log(options, f"🧩 Stage {k}: {result.outcome.value} after {time.monotonic() - start:.1f}s")
        results.append(result)
        if result.outcome != Outcome.MODEL:
            if k > 1 and result.outcome == Outcome.NOT_FOUND:
                raise StageRegression(f"stage {k} cannot extend the {prior.num_states}-state model "
                                      f"of stage {k - 1} ({result.message})")
            result.stages = results
            return result
        prior, prior_alpha = result.model, stage.alpha()
    final = results[-1]
    final.stages = results
    return final

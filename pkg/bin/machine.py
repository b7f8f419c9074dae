"""
Process templates and token-ring composition.

A template is a Moore machine whose states carry output valuations. The
distinguished outputs `tok` (holds the token) and `snd` (sends it) and the
input `rcv` (receives it) tie copies of the template together in a ring.
"""

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from graphviz import Digraph

from .spec_parser import RECEIVE, SEND, TOKEN

TEMPLATE_FORMAT = "ringsynth-template"
TEMPLATE_VERSION = 1

# (state, input bit mask) -> successor states
TransitionTable = Mapping[Tuple[int, int], Tuple[int, ...]]


class TemplateError(ValueError):
    pass


class RingTooSmall(TemplateError):
    pass


class TemplateFormatError(TemplateError):
    pass


class Timing(Enum):
    SYNCHRONOUS = "sync"            # every process steps
    INTERLEAVING = "interleaving"   # one process, or a sender/receiver pair
    FULLY_ASYNCHRONOUS = "async"    # any nonempty subset


@dataclass(frozen=True)
class ProcessTemplate:
    """
    A process template.

    Args:
        inputs: ordered input names; bit k of an input mask is inputs[k]
        outputs: output names, including tok and snd
        labels: per state, the set of outputs that are true
        delta: transition relation, (state, mask) -> successors
        initial_token: the initial state used by the token holder
        initial_idle: the initial state used by every other process
    """
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    labels: Tuple[FrozenSet[str], ...]
    delta: TransitionTable = field(default_factory=dict)
    initial_token: int = 1
    initial_idle: int = 0

    @classmethod
    def from_function(cls, inputs: Sequence[str], outputs: Sequence[str],
                      labels: Sequence[Iterable[str]],
                      step: Callable[[int, FrozenSet[str]], Optional[int]],
                      initial_token: int = 1, initial_idle: int = 0) -> "ProcessTemplate":
        """Build a deterministic template; step returns None for a missing transition"""
        inputs = tuple(inputs)
        delta = {}
        for q in range(len(labels)):
            for mask in range(1 << len(inputs)):
                target = step(q, frozenset(n for k, n in enumerate(inputs) if mask >> k & 1))
                if target is not None:
                    delta[(q, mask)] = (target,)
        return cls(inputs, tuple(outputs), tuple(frozenset(l) for l in labels),
                   delta, initial_token, initial_idle)

    @property
    def num_states(self) -> int:
        return len(self.labels)

    @property
    def num_masks(self) -> int:
        return 1 << len(self.inputs)

    def is_token(self, q: int) -> bool:
        return TOKEN in self.labels[q]

    def sends(self, q: int) -> bool:
        return SEND in self.labels[q]

    @property
    def rcv_bit(self) -> int:
        return 1 << self.inputs.index(RECEIVE) if RECEIVE in self.inputs else 0

    def valuation(self, mask: int) -> FrozenSet[str]:
        return frozenset(n for k, n in enumerate(self.inputs) if mask >> k & 1)

    def mask_of(self, names: Iterable[str]) -> int:
        mask = 0
        for name in names:
            if name in self.inputs:
                mask |= 1 << self.inputs.index(name)
        return mask

    def successors(self, q: int, mask: int) -> Tuple[int, ...]:
        return self.delta.get((q, mask), ())

    def token_states(self) -> List[int]:
        return [q for q in range(self.num_states) if self.is_token(q)]


@dataclass(frozen=True)
class Violation:
    condition: str          # "i" .. "iv" or "non-terminating"
    state: Optional[int]
    input_mask: Optional[int]
    message: str

    def __str__(self):
        return f"[{self.condition}] {self.message}"


def validate_template(t: ProcessTemplate) -> List[Violation]:
    """
    Check the well-formedness conditions of a process template.

    Returns:
        List of violations, empty when the template is well formed
    """
    violations: List[Violation] = []
    tokens = [q for q in range(t.num_states) if t.is_token(q)]
    idle = [q for q in range(t.num_states) if not t.is_token(q)]
    if not tokens or not idle:
        violations.append(Violation("i", None, None, "states with and without the token must both exist"))

    for name in (TOKEN, SEND):
        if name not in t.outputs:
            violations.append(Violation("ii", None, None, f"output '{name}' is not declared"))
    if RECEIVE not in t.inputs:
        violations.append(Violation("ii", None, None, f"input '{RECEIVE}' is not declared"))
    if not 0 <= t.initial_token < t.num_states or not t.is_token(t.initial_token):
        violations.append(Violation("ii", t.initial_token, None, "initial token state must hold the token"))
    if not 0 <= t.initial_idle < t.num_states or t.is_token(t.initial_idle):
        violations.append(Violation("ii", t.initial_idle, None, "initial idle state must not hold the token"))

    for q in idle:
        if t.sends(q):
            violations.append(Violation("iii", q, None, f"state {q} sends without holding the token"))

    rcv = t.rcv_bit
    for (q, mask), targets in sorted(t.delta.items()):
        receiving = bool(mask & rcv)
        for target in targets:
            if not 0 <= target < t.num_states:
                violations.append(Violation("iv", q, mask, f"state {q} moves to unknown state {target}"))
                continue
            if t.is_token(q) and receiving:
                violations.append(Violation("iv", q, mask, f"token state {q} has a transition on rcv"))
            elif t.is_token(q) and t.sends(q) and t.is_token(target):
                violations.append(Violation("iv", q, mask, f"sending state {q} keeps the token ({q} -> {target})"))
            elif t.is_token(q) and not t.sends(q) and not t.is_token(target):
                violations.append(Violation("iv", q, mask, f"state {q} loses the token without sending"))
            elif not t.is_token(q) and receiving and not t.is_token(target):
                violations.append(Violation("iv", q, mask, f"state {q} ignores a received token"))
            elif not t.is_token(q) and not receiving and t.is_token(target):
                violations.append(Violation("iv", q, mask, f"state {q} gains the token without rcv"))

    for q in range(t.num_states):
        for mask in range(t.num_masks):
            if t.is_token(q) and mask & rcv:
                continue
            if not t.successors(q, mask):
                names = ",".join(sorted(t.valuation(mask))) or "-"
                violations.append(Violation("non-terminating", q, mask,
                                            f"state {q} has no successor on input {{{names}}}"))
    return violations


# ----------------------------------------------------------------------------
# Systems: ring composition and the single-process view
# ----------------------------------------------------------------------------

GlobalState = Tuple[int, ...]


@dataclass(frozen=True)
class RingStep:
    inputs: FrozenSet[str]          # true input keys, e.g. 'hbusreq[1]', 'rcv[0]', 'hready'
    scheduled: FrozenSet[int]
    target: GlobalState


def vertex_key(name: str, vertex: int) -> str:
    return f"{name}[{vertex}]"


class RingSystem:
    """
    n template copies on a unidirectional ring (vertex v passes to v+1).

    Global transitions are computed on demand by `steps`.
    """

    def __init__(self, templates: Sequence[ProcessTemplate], timing: Timing,
                 global_inputs: Sequence[str] = ()):
        self.templates = tuple(templates)
        self.size = len(self.templates)
        self.timing = timing
        self.global_inputs = tuple(sorted(set(global_inputs)))
        self._local_inputs = tuple(
            tuple(n for n in t.inputs if n != RECEIVE and n not in self.global_inputs)
            for t in self.templates)

    def initial_states(self) -> List[GlobalState]:
        return [tuple(t.initial_token if u == v else t.initial_idle for u, t in enumerate(self.templates))
                for v in range(self.size)]

    def label(self, state: GlobalState) -> FrozenSet[str]:
        return frozenset(vertex_key(o, v) for v, q in enumerate(state)
                         for o in self.templates[v].labels[q])

    def token_holders(self, state: GlobalState) -> List[int]:
        return [v for v, q in enumerate(state) if self.templates[v].is_token(q)]

    def _schedules(self, state: GlobalState) -> List[FrozenSet[int]]:
        n = self.size
        senders = {v for v, q in enumerate(state) if self.templates[v].sends(q)}

        def allowed(m):
            return all((v + 1) % n in m for v in senders & m)

        if self.timing == Timing.SYNCHRONOUS:
            return [frozenset(range(n))]
        if self.timing == Timing.INTERLEAVING:
            return [frozenset({v, (v + 1) % n}) if v in senders else frozenset({v}) for v in range(n)]
        subsets = []
        for r in range(1, n + 1):
            for m in itertools.combinations(range(n), r):
                if allowed(frozenset(m)):
                    subsets.append(frozenset(m))
        return subsets

    def steps(self, state: GlobalState, relevant: Optional[FrozenSet[str]] = None) -> List[RingStep]:
        """
        Enumerate the global transitions leaving `state`.

        Args:
            state: global state
            relevant: when given, input keys outside this set are dropped and
                steps that become equal are merged

        Returns:
            Steps in a deterministic order
        """
        n = self.size
        senders = {v for v, q in enumerate(state) if self.templates[v].sends(q)}
        result: List[RingStep] = []
        seen = set()

        def keep(keys):
            return frozenset(keys) if relevant is None else frozenset(k for k in keys if k in relevant)

        for scheduled in self._schedules(state):
            receivers = {(v + 1) % n for v in senders & scheduled}
            fixed = set()
            if self.timing != Timing.SYNCHRONOUS:
                fixed |= {vertex_key("sch", v) for v in scheduled}
            fixed |= {vertex_key(RECEIVE, w) for w in receivers}
            for g_mask in range(1 << len(self.global_inputs)):
                g = {name for k, name in enumerate(self.global_inputs) if g_mask >> k & 1}
                per_vertex = []
                for v in range(n):
                    if v not in scheduled:
                        per_vertex.append([(frozenset(), state[v])])
                        continue
                    t = self.templates[v]
                    local = self._local_inputs[v]
                    options = set()
                    for l_mask in range(1 << len(local)):
                        l_names = [local[k] for k in range(len(local)) if l_mask >> k & 1]
                        names = set(l_names) | (g & set(t.inputs))
                        if v in receivers:
                            names.add(RECEIVE)
                        for target in t.successors(state[v], t.mask_of(names)):
                            options.add((keep(vertex_key(x, v) for x in l_names), target))
                    if not options:
                        break
                    per_vertex.append(sorted(options, key=lambda o: (sorted(o[0]), o[1])))
                else:
                    shared = keep(fixed | g)
                    for combo in itertools.product(*per_vertex):
                        keys = shared.union(*(c[0] for c in combo))
                        step = RingStep(keys, scheduled, tuple(c[1] for c in combo))
                        if step not in seen:
                            seen.add(step)
                            result.append(step)
        return result


class SingleProcess:
    """
    One template in isolation with the rest of the ring as environment.

    Non-token states accept every input; token states accept only inputs
    without rcv. Both initial states are initial. Keys are bare names.
    """

    timing = Timing.SYNCHRONOUS
    size = 1

    def __init__(self, template: ProcessTemplate):
        self.template = template

    def initial_states(self) -> List[int]:
        return sorted({self.template.initial_idle, self.template.initial_token})

    def label(self, state: int) -> FrozenSet[str]:
        return self.template.labels[state]

    def steps(self, state: int, relevant: Optional[FrozenSet[str]] = None) -> List[RingStep]:
        t = self.template
        result, seen = [], set()
        for mask in range(t.num_masks):
            if t.is_token(state) and mask & t.rcv_bit:
                continue
            names = t.valuation(mask)
            if relevant is not None:
                names = frozenset(n for n in names if n in relevant)
            for target in t.successors(state, mask):
                step = RingStep(names, frozenset({0}), target)
                if step not in seen:
                    seen.add(step)
                    result.append(step)
        return result


def compose_ring(template: ProcessTemplate, n: int, timing: Timing = Timing.SYNCHRONOUS,
                 global_inputs: Sequence[str] = (),
                 zero_template: Optional[ProcessTemplate] = None) -> RingSystem:
    """
    Compose n copies of a template into a token ring.

    Args:
        template: template used at every vertex (vertex 0 too, unless zero_template is given)
        n: ring size
        timing: timing model
        global_inputs: inputs shared by all vertices
        zero_template: optional template for vertex 0

    Returns:
        RingSystem

    Raises:
        RingTooSmall: if n < 2
    """
    if n < 2:
        raise RingTooSmall(f"a token ring needs at least 2 processes, got {n}")
    templates = [zero_template or template] + [template] * (n - 1)
    return RingSystem(templates, timing, global_inputs)


def reachable_states(system) -> List:
    """All states reachable from the initial states, in BFS order"""
    order = list(dict.fromkeys(system.initial_states()))
    seen = set(order)
    index = 0
    while index < len(order):
        for step in system.steps(order[index]):
            if step.target not in seen:
                seen.add(step.target)
                order.append(step.target)
        index += 1
    return order


# ----------------------------------------------------------------------------
# Runs
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Step:
    state: object
    inputs: FrozenSet[str]
    scheduled: FrozenSet[int]


@dataclass(frozen=True)
class Run:
    """Lasso-shaped run: steps[loop_start:] repeats forever"""
    steps: Tuple[Step, ...]
    loop_start: int

    def word(self, system, vertex: Optional[int] = None) -> Tuple[List[FrozenSet[str]], List[FrozenSet[str]]]:
        """
        Valuation sequence of the run as (stem, loop).

        With a vertex, only steps scheduling that vertex are kept.
        """
        stem, loop = [], []
        for k, step in enumerate(self.steps):
            if vertex is not None and vertex not in step.scheduled:
                continue
            (stem if k < self.loop_start else loop).append(system.label(step.state) | step.inputs)
        return stem, loop


@dataclass(frozen=True)
class LocalStep:
    state: int
    inputs: FrozenSet[str]


@dataclass(frozen=True)
class LocalRun:
    steps: Tuple[LocalStep, ...]
    loop_start: int


def project_local_run(run: Run, j: int) -> LocalRun:
    """
    Local run of process j: the steps in which j moves, with j's local state
    and inputs. Vertex-indexed keys of j lose their index; global keys stay.
    """
    suffix = f"[{j}]"
    steps, loop_start = [], 0
    for k, step in enumerate(run.steps):
        if j not in step.scheduled:
            continue
        names = frozenset(key[:-len(suffix)] if key.endswith(suffix) else key
                          for key in step.inputs if key.endswith(suffix) or "[" not in key)
        steps.append(LocalStep(step.state[j], names))
        if k < run.loop_start:
            loop_start += 1
    return LocalRun(tuple(steps), loop_start)


# ----------------------------------------------------------------------------
# Interchange: JSON and DOT
# ----------------------------------------------------------------------------

def template_to_dict(t: ProcessTemplate) -> Dict:
    return {
        "format": TEMPLATE_FORMAT,
        "version": TEMPLATE_VERSION,
        "inputs": list(t.inputs),
        "outputs": list(t.outputs),
        "initial": {"token": t.initial_token, "idle": t.initial_idle},
        "states": [{"id": q, "token": t.is_token(q), "outputs": sorted(t.labels[q])}
                   for q in range(t.num_states)],
        "transitions": [{"from": q, "input": sorted(t.valuation(mask)), "to": target}
                        for (q, mask), targets in sorted(t.delta.items()) for target in targets],
    }


def template_from_dict(data: Dict) -> ProcessTemplate:
    if data.get("format") != TEMPLATE_FORMAT:
        raise TemplateFormatError(f"not a {TEMPLATE_FORMAT} document")
    try:
        inputs = tuple(data["inputs"])
        outputs = tuple(data["outputs"])
        states = sorted(data["states"], key=lambda s: s["id"])
        if [s["id"] for s in states] != list(range(len(states))):
            raise TemplateFormatError("state ids must be 0..n-1")
        labels = tuple(frozenset(s["outputs"]) for s in states)
        delta: Dict[Tuple[int, int], Tuple[int, ...]] = {}
        for tr in data["transitions"]:
            unknown = set(tr["input"]) - set(inputs)
            if unknown:
                raise TemplateFormatError(f"transition uses undeclared inputs {sorted(unknown)}")
            mask = sum(1 << inputs.index(n) for n in set(tr["input"]))
            key = (int(tr["from"]), mask)
            delta[key] = tuple(sorted(set(delta.get(key, ())) | {int(tr["to"])}))
        return ProcessTemplate(inputs, outputs, labels, delta,
                               int(data["initial"]["token"]), int(data["initial"]["idle"]))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, TemplateFormatError):
            raise
        raise TemplateFormatError(f"malformed template document: {e}") from e


def template_to_json(t: ProcessTemplate) -> str:
    return json.dumps(template_to_dict(t), indent=2) + "\n"


def template_from_json(text: str) -> ProcessTemplate:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise TemplateFormatError(f"invalid JSON: {e}") from e
    return template_from_dict(data)


def save_template(t: ProcessTemplate, path: str) -> None:
    with open(path, "w") as f:
        f.write(template_to_json(t))


def load_template(path: str) -> ProcessTemplate:
    with open(path, "r") as f:
        return template_from_json(f.read())


def _merge_cubes(masks: Iterable[int], width: int) -> List[Tuple[int, int]]:
    """Combine minterms into (value, care) cubes by merging neighbours"""
    full = (1 << width) - 1
    cubes = {(m, full) for m in masks}
    while True:
        merged, used = set(), set()
        for a, b in itertools.combinations(sorted(cubes), 2):
            if a[1] == b[1]:
                diff = a[0] ^ b[0]
                if diff and diff & (diff - 1) == 0:
                    merged.add((a[0] & ~diff, a[1] & ~diff))
                    used |= {a, b}
        if not merged:
            return sorted(cubes)
        cubes = (cubes - used) | merged


def _guard_text(t: ProcessTemplate, masks: Iterable[int]) -> str:
    cubes = _merge_cubes(masks, len(t.inputs))
    parts = []
    for value, care in cubes:
        literals = [(n if value >> k & 1 else f"!{n}") for k, n in enumerate(t.inputs) if care >> k & 1]
        parts.append(" & ".join(literals) if literals else "true")
    return "\n".join(parts)


def template_to_dot(t: ProcessTemplate, name: str = "template") -> str:
    """DOT source with outputs inside the nodes and input guards on the edges"""
    graph = Digraph(name)
    graph.attr(rankdir="LR")
    for q in range(t.num_states):
        shown = sorted(t.labels[q] - {TOKEN})
        graph.node(f"t{q}", label=f"t{q}\n" + (",".join(shown) if shown else "-"),
                   shape="doublecircle" if t.is_token(q) else "circle")
    graph.node("init_token", label="", shape="point")
    graph.edge("init_token", f"t{t.initial_token}")
    graph.node("init_idle", label="", shape="point")
    graph.edge("init_idle", f"t{t.initial_idle}")
    edges: Dict[Tuple[int, int], List[int]] = {}
    for (q, mask), targets in sorted(t.delta.items()):
        for target in targets:
            edges.setdefault((q, target), []).append(mask)
    for (q, target), masks in sorted(edges.items()):
        graph.edge(f"t{q}", f"t{target}", label=_guard_text(t, masks))
    return graph.source


def ring_to_dot(system: RingSystem, limit: int = 500, name: str = "ring") -> str:
    """DOT source of the reachable global state graph (first `limit` states)"""
    graph = Digraph(name)
    graph.attr(rankdir="LR")
    states = reachable_states(system)[:limit]
    shown = set(states)
    initial = set(system.initial_states())
    for state in states:
        holders = ",".join(str(v) for v in system.token_holders(state)) or "-"
        graph.node("s" + "_".join(map(str, state)), label=f"{state}\ntoken at {holders}",
                   shape="doublecircle" if state in initial else "circle")
    for state in states:
        targets = sorted({step.target for step in system.steps(state, frozenset())})
        for target in targets:
            if target in shown:
                graph.edge("s" + "_".join(map(str, state)), "s" + "_".join(map(str, target)))
    return graph.source

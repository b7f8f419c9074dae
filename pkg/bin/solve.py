"""
Solver backends for bounded-synthesis constraint systems.

solve_builtin searches transition and output tables directly and decides
the ranking part by looking for accepting cycles in the product with the
automaton; ranks are then read off the acyclic condensation. emit_smtlib
and run_external hand the same system to an SMT solver over a text pipe.
"""

import re
import shlex
import subprocess
import time
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

from .automata import strongly_connected_components
from .ltl import evaluate_boolean
from .spec_parser import SEND, TOKEN

DEFAULT_CELL_CAP = 256
DEFAULT_NODE_BUDGET = 2_000_000
DEFAULT_TIMEOUT = 600


class SolverError(ValueError):
    pass


class TooLarge(SolverError):
    pass


class SolverSpawnError(SolverError):
    pass


class MalformedModel(SolverError):
    pass


class SolverStatus(Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Assignment:
    """Values for the uninterpreted functions of a constraint system"""
    delta: Mapping[Tuple[int, int], int]        # (state, input mask) -> state
    out: Tuple[FrozenSet[str], ...]             # state -> true outputs
    rank: Mapping[Tuple[int, int], int]         # (automaton state, state) -> rank, -1 if unreached


@dataclass
class SolverOutcome:
    status: SolverStatus
    assignment: Optional[Assignment] = None
    seconds: float = 0.0
    backend: str = "builtin"
    message: str = ""


@dataclass(frozen=True)
class RangeViolation:
    symbol: str
    value: int

    def __str__(self):
        return f"{self.symbol} = {self.value} is out of range"


def check_assignment(cs, assignment: Assignment) -> List:
    """
    Evaluate every constraint of cs under the assignment.

    Returns:
        The violated constraints (RangeViolation for out-of-domain values)
    """
    violated: List = []
    for (q, mask), target in sorted(assignment.delta.items()):
        if not 0 <= target < cs.bound:
            violated.append(RangeViolation(f"delta({q},{mask})", target))
    ceiling = cs.rank_ceiling
    for (a, q), value in sorted(assignment.rank.items()):
        if not -1 <= value <= ceiling:
            violated.append(RangeViolation(f"rho({a},{q})", value))
    if violated:
        return violated
    for constraint in cs.constraints():
        if not constraint.holds(cs, assignment):
            violated.append(constraint)
    return violated


# ----------------------------------------------------------------------------
# Built-in solver
# ----------------------------------------------------------------------------

class _BudgetExhausted(Exception):
    pass


class _BuiltinSearch:
    """Backtracking over output and transition cells of the reachable states"""

    def __init__(self, cs, budget: int):
        self.cs = cs
        self.budget = budget
        self.nodes = 0
        self.n = cs.bound
        self.masks = cs.num_masks
        self.rcv_bit = cs.rcv_bit
        self.inputs = set(cs.inputs)
        self.outputs = set(cs.outputs)
        self.nba = cs.nba
        self.alpha_ok = [cs.alpha_holds(m) for m in range(self.masks)]
        self.valuations = [cs.valuation(m) for m in range(self.masks)]
        self.safety = [p.formula for p in cs.safety]
        self.pinned_delta = dict(cs.pins.delta)

        names = list(cs.outputs)
        every = [frozenset(n for k, n in enumerate(names) if v >> k & 1) for v in range(1 << len(names))]
        self.candidates = [[v for v in every if self._out_allowed(q, v)] for q in range(self.n)]

        # automaton moves per (state, mask): (target, outputs required, outputs forbidden)
        self.moves: Dict[Tuple[int, int], List[Tuple[int, FrozenSet[str], FrozenSet[str]]]] = {}
        for t in self.nba.transitions:
            if t.pos - self.inputs - self.outputs:
                continue
            for mask in range(self.masks):
                sigma = self.valuations[mask]
                if not (t.pos & self.inputs) <= sigma or t.neg & sigma:
                    continue
                self.moves.setdefault((t.src, mask), []).append(
                    (t.dst, t.pos & self.outputs, t.neg & self.outputs))

        self.out: List[Optional[FrozenSet[str]]] = [None] * self.n
        self.delta: Dict[Tuple[int, int], int] = {}
        self.reached: List[int] = []
        self.queue: List[Tuple[int, int]] = []
        self.rank: Dict[Tuple[int, int], int] = {}

    def _out_allowed(self, q: int, v: FrozenSet[str]) -> bool:
        cs = self.cs
        if SEND in v and TOKEN not in v:
            return False
        token = cs.token_pin(q)
        if token is not None and (TOKEN in v) != token:
            return False
        pinned = cs.pins.out.get(q)
        return pinned is None or pinned == v

    def _signature(self, q: int):
        cs = self.cs
        pinned = tuple(sorted((m, t) for (p, m), t in self.pinned_delta.items() if p == q))
        return (cs.token_pin(q), cs.pins.out.get(q), pinned)

    def _tick(self):
        self.nodes += 1
        if self.nodes > self.budget:
            raise _BudgetExhausted()

    def _dont_care(self, q: int, mask: int) -> bool:
        return TOKEN in self.out[q] and bool(mask & self.rcv_bit)

    def _typed(self, q: int, mask: int, target_out: FrozenSet[str]) -> bool:
        out_q = self.out[q]
        if TOKEN not in out_q:
            required = bool(mask & self.rcv_bit)
        else:
            required = SEND not in out_q
        return (TOKEN in target_out) == required

    def _safe(self, q: int, mask: int, target_out: FrozenSet[str]) -> bool:
        now = self.valuations[mask] | self.out[q]
        return all(evaluate_boolean(beta, now, target_out) for beta in self.safety)

    # product of the partial template with the automaton
    def _product(self):
        initial = [(a, q) for a in sorted(self.nba.initial) for q in (0, 1)]

        def successors(node):
            a, q = node
            result = []
            for mask in range(self.masks):
                target = self.delta.get((q, mask))
                if target is None or not self.alpha_ok[mask] or self._dont_care(q, mask):
                    continue
                for b, need, forbid in self.moves.get((a, mask), ()):
                    if need <= self.out[q] and not forbid & self.out[q]:
                        result.append((b, target))
            return result
        return initial, successors

    def _accepting_cycle(self) -> bool:
        initial, successors = self._product()
        for component in strongly_connected_components(initial, successors):
            if not any(a in self.nba.accepting for a, _ in component):
                continue
            if len(component) > 1 or component[0] in successors(component[0]):
                return True
        return False

    def _ranks(self) -> Dict[Tuple[int, int], int]:
        initial, successors = self._product()
        components = strongly_connected_components(initial, successors)
        incoming: Dict[Tuple[int, int], int] = {node: 0 for node in initial}
        rank: Dict[Tuple[int, int], int] = {}
        for component in reversed(components):
            value = max(incoming.get(node, -1) for node in component)
            members = set(component)
            for node in component:
                rank[node] = value
            for node in component:
                for succ in successors(node):
                    if succ not in members:
                        gain = 1 if succ[0] in self.nba.accepting else 0
                        incoming[succ] = max(incoming.get(succ, -1), value + gain)
        return {(a, q): rank.get((a, q), -1)
                for a in range(self.nba.num_states) for q in range(self.n)}

    # reaching new states
    def _reach(self, q: int, v: FrozenSet[str]):
        self.out[q] = v
        self.reached.append(q)
        self.queue.extend((q, m) for m in range(self.masks))

    def _unreach(self, q: int):
        self.out[q] = None
        self.reached.pop()
        del self.queue[-self.masks:]

    def _options(self, q: int, mask: int):
        pinned = self.pinned_delta.get((q, mask))
        if pinned is not None:
            states = [pinned]
        else:
            states = sorted(self.reached)
            seen = set()
            for u in range(self.n):
                if self.out[u] is None:
                    signature = self._signature(u)
                    if signature not in seen:
                        seen.add(signature)
                        states.append(u)
        for t in states:
            if self.out[t] is not None:
                yield t, None
            else:
                for v in self.candidates[t]:
                    yield t, v

    def _first_typed(self, q: int, mask: int, decided) -> Optional[int]:
        pinned = self.pinned_delta.get((q, mask))
        for t in ([pinned] if pinned is not None else decided):
            if self.out[t] is not None and self._typed(q, mask, self.out[t]):
                return t
        return None

    def extend(self, pos: int) -> bool:
        self._tick()
        if pos == len(self.queue):
            return self._leaf()
        q, mask = self.queue[pos]
        if self._dont_care(q, mask):
            self.delta[(q, mask)] = q
            if self.extend(pos + 1):
                return True
            del self.delta[(q, mask)]
            return False
        if not self.alpha_ok[mask]:
            target = self._first_typed(q, mask, sorted(self.reached))
            if target is None:
                return False
            self.delta[(q, mask)] = target
            if self.extend(pos + 1):
                return True
            del self.delta[(q, mask)]
            return False
        for t, new_out in list(self._options(q, mask)):
            target_out = self.out[t] if new_out is None else new_out
            if not self._typed(q, mask, target_out) or not self._safe(q, mask, target_out):
                continue
            if new_out is not None:
                self._reach(t, new_out)
            self.delta[(q, mask)] = t
            if not self._accepting_cycle() and self.extend(pos + 1):
                return True
            del self.delta[(q, mask)]
            if new_out is not None:
                self._unreach(t)
        return False

    def _row(self, u: int) -> Optional[Dict[Tuple[int, int], int]]:
        """Transitions of u to states that already have outputs, or None"""
        decided = [t for t in range(self.n) if self.out[t] is not None]
        row = {}
        for mask in range(self.masks):
            if self._dont_care(u, mask):
                row[(u, mask)] = u
                continue
            pinned = self.pinned_delta.get((u, mask))
            choice = None
            for t in ([pinned] if pinned is not None else decided):
                if self.out[t] is None or not self._typed(u, mask, self.out[t]):
                    continue
                if self.alpha_ok[mask] and not self._safe(u, mask, self.out[t]):
                    continue
                choice = t
                break
            if choice is None:
                return None
            row[(u, mask)] = choice
        return row

    def _complete_greedily(self, unreached: List[int]) -> bool:
        for u in unreached:
            for v in self.candidates[u]:
                self.out[u] = v
                row = self._row(u)
                if row is not None:
                    self.delta.update(row)
                    break
            else:
                return False
        return True

    def _complete_exhaustively(self, unreached: List[int], k: int) -> bool:
        if k == len(unreached):
            rows = [self._row(u) for u in unreached]
            if any(row is None for row in rows):
                return False
            for row in rows:
                self.delta.update(row)
            return True
        u = unreached[k]
        for v in self.candidates[u]:
            self._tick()
            self.out[u] = v
            if self._complete_exhaustively(unreached, k + 1):
                return True
        self.out[u] = None
        return False

    def complete_unreached(self) -> bool:
        """
        Give every unreached state outputs and transitions meeting the local
        constraints.

        Unreached states only answer to constraints on their own cells. The
        greedy pass handles states one at a time; when a pinned transition
        points at a later unreached state it can fail, and then every output
        combination is tried (within the node budget).
        """
        unreached = [u for u in range(self.n) if self.out[u] is None]
        if self._complete_greedily(unreached):
            return True
        for u in unreached:
            self.out[u] = None
        return self._complete_exhaustively(unreached, 0)

    def _leaf(self) -> bool:
        reached = set(self.reached)
        if self.complete_unreached():
            self.rank = self._ranks()
            return True
        self.out = [o if q in reached else None for q, o in enumerate(self.out)]
        self.delta = {k: t for k, t in self.delta.items() if k[0] in reached}
        return False

    def run(self) -> Optional[Assignment]:
        for v0 in self.candidates[0]:
            self._reach(0, v0)
            for v1 in self.candidates[1]:
                self._reach(1, v1)
                if self.extend(0):
                    return Assignment(dict(self.delta), tuple(self.out), self.rank)
                self._unreach(1)
            self._unreach(0)
        return None


def solve_builtin(cs, budget: int = DEFAULT_NODE_BUDGET, cell_cap: int = DEFAULT_CELL_CAP) -> SolverOutcome:
    """
    Decide a constraint system by finite-domain search.

    Args:
        cs: the constraint system
        budget: maximal number of search nodes
        cell_cap: maximal number of transition cells (states x input valuations)

    Returns:
        SolverOutcome; unknown when the budget runs out

    Raises:
        TooLarge: the system has more transition cells than cell_cap
    """
    cells = cs.bound * cs.num_masks
    if cells > cell_cap:
        raise TooLarge(f"{cells} transition cells exceed the built-in cap of {cell_cap}; "
                       f"use an external solver")
    start = time.monotonic()
    search = _BuiltinSearch(cs, budget)
    try:
        assignment = search.run()
    except _BudgetExhausted:
        return SolverOutcome(SolverStatus.UNKNOWN, seconds=time.monotonic() - start,
                             message=f"search budget of {budget} nodes exhausted")
    seconds = time.monotonic() - start
    if assignment is None:
        return SolverOutcome(SolverStatus.UNSAT, seconds=seconds)
    return SolverOutcome(SolverStatus.SAT, assignment, seconds)


# ----------------------------------------------------------------------------
# SMT-LIB
# ----------------------------------------------------------------------------

def out_symbol(name: str) -> str:
    return f"out_{name}"


def emit_smtlib(cs) -> str:
    """SMT-LIB v2 script for cs; identical systems give identical text"""
    n, masks = cs.bound, cs.num_masks
    lines = [
        f"; spec {cs.spec.name}, bound {n}, automaton states {cs.nba.num_states}",
        "; inputs " + " ".join(cs.inputs) + " (bit k of the input index is the k-th input)",
        "(set-logic UFLIA)",
        "(declare-fun delta (Int Int) Int)",
    ]
    lines += [f"(declare-fun {out_symbol(o)} (Int) Bool)" for o in cs.outputs]
    lines.append("(declare-fun rho (Int Int) Int)")
    for q in range(n):
        for mask in range(masks):
            lines.append(f"(assert (and (<= 0 (delta {q} {mask})) (< (delta {q} {mask}) {n})))")
    for a in range(cs.nba.num_states):
        for q in range(n):
            lines.append(f"(assert (and (<= (- 1) (rho {a} {q})) (<= (rho {a} {q}) {cs.rank_ceiling})))")
    for constraint in cs.constraints():
        lines.append(f"(assert {constraint.smt(cs)})")
    lines.append("(check-sat)")
    terms = [f"(delta {q} {m})" for q in range(n) for m in range(masks)]
    terms += [f"({out_symbol(o)} {q})" for o in cs.outputs for q in range(n)]
    terms += [f"(rho {a} {q})" for a in range(cs.nba.num_states) for q in range(n)]
    lines.append("(get-value (" + " ".join(terms) + "))")
    return "\n".join(lines) + "\n"


TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


def _read_sexprs(text: str) -> List:
    stack: List[List] = [[]]
    for token in TOKEN_RE.findall(text):
        if token == "(":
            stack.append([])
        elif token == ")":
            if len(stack) == 1:
                raise MalformedModel("unbalanced ')' in solver output")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(token)
    if len(stack) != 1:
        raise MalformedModel("unbalanced '(' in solver output")
    return stack[0]


def _int_value(value) -> int:
    if isinstance(value, list) and len(value) == 2 and value[0] == "-":
        return -_int_value(value[1])
    try:
        return int(value)
    except (TypeError, ValueError):
        raise MalformedModel(f"expected an integer, got {value!r}")


def parse_get_value(text: str, cs) -> Assignment:
    """
    Read a (get-value ...) response into an Assignment.

    Raises:
        MalformedModel: unreadable response or missing cells
    """
    delta: Dict[Tuple[int, int], int] = {}
    outputs: Dict[Tuple[str, int], bool] = {}
    rank: Dict[Tuple[int, int], int] = {}
    symbols = {out_symbol(o): o for o in cs.outputs}
    for top in _read_sexprs(text):
        if not isinstance(top, list):
            continue
        for pair in top:
            if not (isinstance(pair, list) and len(pair) == 2 and isinstance(pair[0], list)):
                continue
            term, value = pair
            head, args = term[0], term[1:]
            if head == "delta" and len(args) == 2:
                delta[(_int_value(args[0]), _int_value(args[1]))] = _int_value(value)
            elif head == "rho" and len(args) == 2:
                rank[(_int_value(args[0]), _int_value(args[1]))] = _int_value(value)
            elif head in symbols and len(args) == 1:
                if value not in ("true", "false"):
                    raise MalformedModel(f"expected a Boolean for {head}, got {value!r}")
                outputs[(symbols[head], _int_value(args[0]))] = value == "true"
    missing = [f"delta {q} {m}" for q in range(cs.bound) for m in range(cs.num_masks) if (q, m) not in delta]
    missing += [f"{out_symbol(o)} {q}" for o in cs.outputs for q in range(cs.bound) if (o, q) not in outputs]
    if missing:
        raise MalformedModel(f"solver model lacks {len(missing)} values, e.g. ({missing[0]})")
    for a in range(cs.nba.num_states):
        for q in range(cs.bound):
            rank.setdefault((a, q), -1)
    out = tuple(frozenset(o for o in cs.outputs if outputs[(o, q)]) for q in range(cs.bound))
    return Assignment(delta, out, rank)


def parse_solver_output(text: str, cs, backend: str = "external", seconds: float = 0.0) -> SolverOutcome:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines:
        raise MalformedModel("solver produced no output")
    status = lines[0]
    if status == "unsat":
        return SolverOutcome(SolverStatus.UNSAT, seconds=seconds, backend=backend)
    if status == "unknown":
        return SolverOutcome(SolverStatus.UNKNOWN, seconds=seconds, backend=backend)
    if status != "sat":
        raise MalformedModel(f"unexpected solver answer: {status[:80]}")
    rest = text[text.index("sat") + 3:]
    return SolverOutcome(SolverStatus.SAT, parse_get_value(rest, cs), seconds, backend)


def run_external(cmd: str, script: str, cs, timeout: int = DEFAULT_TIMEOUT) -> SolverOutcome:
    """
    Run an SMT solver that reads the script on standard input.

    Args:
        cmd: command line, e.g. 'z3 -in'
        script: SMT-LIB text from emit_smtlib
        cs: the encoded system, to read the model back
        timeout: seconds before the solver is killed

    Returns:
        SolverOutcome; unknown on timeout

    Raises:
        SolverSpawnError: the command cannot be started
        MalformedModel: the solver output cannot be read
    """
    args = shlex.split(cmd)
    if not args:
        raise SolverSpawnError("empty solver command")
    backend = f"external:{args[0]}"
    start = time.monotonic()
    try:
        result = subprocess.run(args, input=script, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        return SolverOutcome(SolverStatus.UNKNOWN, seconds=time.monotonic() - start, backend=backend,
                             message=f"timeout after {timeout}s")
    except (FileNotFoundError, PermissionError, OSError) as e:
        raise SolverSpawnError(f"cannot start solver '{cmd}': {e}") from e
    seconds = time.monotonic() - start
    if not result.stdout.strip():
        raise MalformedModel(f"solver produced no output (exit {result.returncode}): {result.stderr.strip()[:200]}")
    return parse_solver_output(result.stdout, cs, backend, seconds)

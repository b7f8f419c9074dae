"""
Büchi automata for LTL.

ltl_to_nba builds a nondeterministic Büchi automaton with the classic
tableau construction: every state is the set of obligations that must hold
from now on, expanded into cubes of literals plus next-step obligations.
Untils postponed along a transition are tracked per transition and the
resulting generalized acceptance is degeneralized with a counter.

The module also holds the graph searches shared by the model checker and
the built-in solver (nested DFS for accepting lassos, Tarjan SCCs).
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import (Callable, Dict, FrozenSet, Generic, Hashable, Iterable, List,
                    Optional, Sequence, Set, Tuple, TypeVar)

from graphviz import Digraph

from .ltl import (TRUE, Formula, Op, atom, conj, conjuncts, desugar, is_boolean, is_nnf, neg,
                  pretty, signal_names, split_key, subformulas, to_nnf, atom_keys)

N = TypeVar("N", bound=Hashable)
E = TypeVar("E")

# Terms per state above which subsumption pruning is skipped (quadratic).
SUBSUMPTION_LIMIT = 4000


# ----------------------------------------------------------------------------
# Graph searches
# ----------------------------------------------------------------------------

@dataclass
class Lasso(Generic[N, E]):
    """Accepting lasso: stem then loop, each a list of (node, edge taken from it)"""
    stem: List[Tuple[N, E]]
    loop: List[Tuple[N, E]]


def _red_search(seed, successors, red: Set) -> Optional[List]:
    red.add(seed)
    stack = [(seed, iter(successors(seed)))]
    edges: List = []
    while stack:
        node, it = stack[-1]
        step = next(it, None)
        if step is None:
            stack.pop()
            if edges:
                edges.pop()
            continue
        edge, child = step
        if child == seed:
            return list(zip([n for n, _ in stack], edges + [edge]))
        if child not in red:
            red.add(child)
            stack.append((child, iter(successors(child))))
            edges.append(edge)
    return None


def find_accepting_lasso(initial: Iterable[N],
                         successors: Callable[[N], Iterable[Tuple[E, N]]],
                         accepting: Callable[[N], bool]) -> Optional[Lasso]:
    """
    Nested depth-first search for a reachable cycle through an accepting node.

    Args:
        initial: start nodes
        successors: node -> iterable of (edge, successor)
        accepting: acceptance predicate on nodes

    Returns:
        A Lasso, or None when no accepting cycle is reachable
    """
    blue: Set = set()
    red: Set = set()
    for root in initial:
        if root in blue:
            continue
        blue.add(root)
        path = [root]
        edges: List = []
        iters = [iter(successors(root))]
        while iters:
            step = next(iters[-1], None)
            if step is not None:
                edge, child = step
                if child not in blue:
                    blue.add(child)
                    path.append(child)
                    edges.append(edge)
                    iters.append(iter(successors(child)))
                continue
            node = path[-1]
            if accepting(node):
                cycle = _red_search(node, successors, red)
                if cycle is not None:
                    return Lasso(list(zip(path[:-1], edges)), cycle)
            iters.pop()
            path.pop()
            if edges:
                edges.pop()
    return None


def strongly_connected_components(sources: Iterable[N],
                                  successors: Callable[[N], Iterable[N]]) -> List[List[N]]:
    """
    Iterative Tarjan over the nodes reachable from `sources`.

    Components are returned in completion order: every component comes after
    all components reachable from it.
    """
    preorder: Dict = {}
    lowlink: Dict = {}
    found: Set = set()
    scc_queue: List = []
    neighbours: Dict = {}
    components: List[List[N]] = []
    counter = 0
    for source in sources:
        if source in found:
            continue
        queue = [source]
        while queue:
            v = queue[-1]
            if v not in preorder:
                counter += 1
                preorder[v] = counter
                neighbours[v] = list(successors(v))
            done = True
            for w in neighbours[v]:
                if w not in preorder:
                    queue.append(w)
                    done = False
                    break
            if not done:
                continue
            lowlink[v] = preorder[v]
            for w in neighbours[v]:
                if w not in found:
                    if preorder[w] > preorder[v]:
                        lowlink[v] = min(lowlink[v], lowlink[w])
                    else:
                        lowlink[v] = min(lowlink[v], preorder[w])
            queue.pop()
            if lowlink[v] == preorder[v]:
                found.add(v)
                component = [v]
                while scc_queue and preorder[scc_queue[-1]] > preorder[v]:
                    k = scc_queue.pop()
                    found.add(k)
                    component.append(k)
                components.append(component)
            else:
                scc_queue.append(v)
    return components


# ----------------------------------------------------------------------------
# Automata
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Transition:
    src: int
    pos: FrozenSet[str]
    neg: FrozenSet[str]
    dst: int

    @property
    def guard(self) -> Formula:
        literals = [atom(*split_key(k)) for k in sorted(self.pos)]
        literals += [neg(atom(*split_key(k))) for k in sorted(self.neg)]
        return conj(*literals)

    def matches(self, valuation: FrozenSet[str]) -> bool:
        return self.pos <= valuation and not (self.neg & valuation)

    def guard_text(self) -> str:
        parts = sorted(self.pos) + [f"!{k}" for k in sorted(self.neg)]
        return " & ".join(parts) if parts else "true"


@dataclass(frozen=True)
class NBA:
    """Nondeterministic Büchi automaton with cube guards over named atoms"""
    atoms: Tuple[str, ...]
    num_states: int
    initial: FrozenSet[int]
    transitions: Tuple[Transition, ...]
    accepting: FrozenSet[int]
    labels: Tuple[str, ...] = ()
    _out: Tuple[Tuple[Transition, ...], ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        out: List[List[Transition]] = [[] for _ in range(self.num_states)]
        for t in self.transitions:
            out[t.src].append(t)
        object.__setattr__(self, "_out", tuple(tuple(ts) for ts in out))

    def outgoing(self, state: int) -> Tuple[Transition, ...]:
        return self._out[state]

    def step(self, state: int, valuation: FrozenSet[str]) -> List[int]:
        return [t.dst for t in self._out[state] if t.matches(valuation)]


@dataclass(frozen=True)
class _Term:
    pos: FrozenSet[str]
    neg: FrozenSet[str]
    nxt: FrozenSet[Formula]
    postponed: FrozenSet[Formula]

    def subsumes(self, other: "_Term") -> bool:
        return (self.pos <= other.pos and self.neg <= other.neg
                and self.nxt <= other.nxt and self.postponed <= other.postponed)


_text = lru_cache(maxsize=None)(pretty)


def _term_order(t: _Term):
    # a strict subsumer is strictly smaller, so it sorts first
    size = len(t.pos) + len(t.neg) + len(t.nxt) + len(t.postponed)
    return (size, sorted(t.pos), sorted(t.neg), sorted(map(_text, t.nxt)), sorted(map(_text, t.postponed)))


def _prune(terms: Iterable[_Term]) -> List[_Term]:
    ordered = sorted(set(terms), key=_term_order)
    if len(ordered) > SUBSUMPTION_LIMIT:
        return ordered
    kept: List[_Term] = []
    for term in ordered:
        if not any(k.subsumes(term) for k in kept):
            kept.append(term)
    return kept


def _merge(a: _Term, b: _Term) -> Optional[_Term]:
    if a.pos & b.neg or a.neg & b.pos:
        return None
    return _Term(a.pos | b.pos, a.neg | b.neg, a.nxt | b.nxt, a.postponed | b.postponed)


def _expand(obligations: FrozenSet[Formula]) -> List[_Term]:
    """
    Expand a set of obligations into its minimal terms.

    Every top-level conjunct is expanded once per process and reused by all
    states that carry it; the conjunct tableaux are then multiplied out,
    dropping subsumed terms after each factor.
    """
    parts = {part for f in obligations for part in conjuncts(f)}
    tableaux = sorted((_expand_conjunct(part) for part in sorted(parts, key=_text)), key=len)
    terms = [_Term(frozenset(), frozenset(), frozenset(), frozenset())]
    for tableau in tableaux:
        terms = _prune(filter(None, (_merge(a, b) for a in terms for b in tableau)))
        if not terms:
            break
    return terms


@lru_cache(maxsize=None)
def _expand_conjunct(f: Formula) -> Tuple[_Term, ...]:
    terms: Set[_Term] = set()

    def walk(todo, pos, negs, nxt, postponed, done):
        while todo:
            f = todo[-1]
            todo = todo[:-1]
            if f in done:
                continue
            done = done | {f}
            op = f.op
            if op == Op.TRUE:
                continue
            if op == Op.FALSE:
                return
            if op == Op.ATOM:
                if f.key in negs:
                    return
                pos = pos | {f.key}
            elif op == Op.NOT:
                key = f.children[0].key
                if key in pos:
                    return
                negs = negs | {key}
            elif op == Op.AND:
                todo = todo + (f.children[1], f.children[0])
            elif op == Op.OR:
                walk(todo + (f.children[0],), pos, negs, nxt, postponed, done)
                todo = todo + (f.children[1],)
            elif op == Op.NEXT:
                nxt = nxt | {f.children[0]}
            elif op == Op.UNTIL:
                walk(todo + (f.children[1],), pos, negs, nxt, postponed, done)
                todo = todo + (f.children[0],)
                nxt = nxt | {f}
                postponed = postponed | {f}
            elif op == Op.WEAK_UNTIL:
                walk(todo + (f.children[1],), pos, negs, nxt, postponed, done)
                todo = todo + (f.children[0],)
                nxt = nxt | {f}
            elif op == Op.GLOBALLY:
                todo = todo + (f.children[0],)
                nxt = nxt | {f}
            else:
                raise ValueError(f"formula not in negation normal form: {pretty(f)}")
        terms.add(_Term(frozenset(pos), frozenset(negs), frozenset(nxt), frozenset(postponed)))

    walk((f,), frozenset(), frozenset(), frozenset(), frozenset(), frozenset())
    return tuple(_prune(terms))


def ltl_to_nba(f: Formula, atoms: Optional[Sequence[str]] = None) -> NBA:
    """
    Translate an LTL formula into a Büchi automaton accepting exactly its models.

    Args:
        f: formula; desugared and put in negation normal form when needed
        atoms: alphabet atom keys (defaults to the atoms of f)

    Returns:
        NBA restricted to states from which an accepting cycle is reachable
    """
    if not is_nnf(f):
        f = to_nnf(f)
    alphabet = tuple(atoms) if atoms is not None else tuple(atom_keys(f))
    untils = sorted({g for g in subformulas(f) if g.op == Op.UNTIL}, key=pretty)
    rounds = len(untils)

    # generalized states: obligation sets
    initial_set = frozenset([f])
    expansions: Dict[FrozenSet[Formula], List[_Term]] = {}
    queue = [initial_set]
    while queue:
        state = queue.pop()
        if state in expansions:
            continue
        expansions[state] = _expand(state)
        for term in expansions[state]:
            if term.nxt not in expansions:
                queue.append(term.nxt)

    # degeneralize with a counter over the untils
    Node = Tuple[FrozenSet[Formula], int]
    start: Node = (initial_set, 0)
    edges: Dict[Node, List[Tuple[_Term, Node]]] = {}
    queue2 = [start]
    while queue2:
        node = queue2.pop()
        if node in edges:
            continue
        state, counter = node
        edges[node] = []
        for term in expansions[state]:
            level = 0 if counter == rounds else counter
            while level < rounds and untils[level] not in term.postponed:
                level += 1
            target = (term.nxt, level)
            edges[node].append((term, target))
            if target not in edges:
                queue2.append(target)

    def accepting_node(node: Node) -> bool:
        return node[1] == rounds

    # keep nodes that can reach an accepting cycle
    components = strongly_connected_components([start], lambda n: [t for _, t in edges[n]])
    live: Set[Node] = set()
    for component in components:
        members = set(component)
        cyclic = len(component) > 1 or any(t == component[0] for _, t in edges[component[0]])
        if (cyclic and any(accepting_node(n) for n in component)) or \
                any(t in live for n in component for _, t in edges[n]):
            live |= members

    ids: Dict[Node, int] = {}
    order: List[Node] = []
    if start in live:
        ids[start] = 0
        order.append(start)
        index = 0
        while index < len(order):
            node = order[index]
            index += 1
            for _, target in edges[node]:
                if target in live and target not in ids:
                    ids[target] = len(order)
                    order.append(target)

    transitions = []
    seen = set()
    for node in order:
        for term, target in edges[node]:
            if target not in ids:
                continue
            key = (ids[node], term.pos, term.neg, ids[target])
            if key not in seen:
                seen.add(key)
                transitions.append(Transition(*key))
    labels = tuple(
        "{" + ", ".join(sorted(pretty(g) for g in node[0])) + "}" + f"/{node[1]}" for node in order)
    return NBA(
        atoms=alphabet,
        num_states=len(order),
        initial=frozenset([0]) if order else frozenset(),
        transitions=tuple(transitions),
        accepting=frozenset(ids[n] for n in order if accepting_node(n)),
        labels=labels,
    )


def nba_accepts(a: NBA, stem: Sequence[Iterable[str]], loop: Sequence[Iterable[str]]) -> bool:
    """True iff the lasso word stem . loop^omega is accepted by `a`"""
    if not loop:
        raise ValueError("loop must be nonempty")
    word = [frozenset(v) for v in stem] + [frozenset(v) for v in loop]
    loop_start = len(stem)

    def successors(node):
        state, position = node
        following = position + 1 if position + 1 < len(word) else loop_start
        return [(None, (dst, following)) for dst in a.step(state, word[position])]

    lasso = find_accepting_lasso([(s, 0) for s in sorted(a.initial)], successors,
                                 lambda node: node[0] in a.accepting)
    return lasso is not None


# ----------------------------------------------------------------------------
# GR(1) classification
# ----------------------------------------------------------------------------

class Gr1Kind(Enum):
    SIMPLE_ASSUMPTION = "simple-assumption"   # G alpha, alpha over current inputs
    SIMPLE_SAFETY = "simple-safety"           # G beta, beta over inputs, outputs, next outputs
    GENERAL = "general"


@dataclass(frozen=True)
class Gr1Class:
    kind: Gr1Kind
    formula: Formula = TRUE     # alpha or beta (the body under G)


def _one_step(f: Formula, inputs: Set[str]) -> bool:
    for node in subformulas(f):
        if node.op == Op.NEXT:
            inner = node.children[0]
            if not is_boolean(inner) or signal_names(inner) & inputs:
                return False
        elif node.op in (Op.UNTIL, Op.WEAK_UNTIL, Op.GLOBALLY, Op.EVENTUALLY,
                         Op.BOUNDED_WEAK_UNTIL, Op.FORALL):
            return False
    return True


def classify_gr1(f: Formula, inputs: Iterable[str]) -> Gr1Class:
    """
    Classify a conjunct for the direct constraint encoding.

    Args:
        f: the conjunct
        inputs: input signal names; every other signal is an output

    Returns:
        SimpleAssumption(alpha) for G alpha with alpha an input-only Boolean,
        SimpleSafety(beta) for G beta with X applied only to output-only
        Booleans, General otherwise
    """
    inputs = set(inputs)
    f = desugar(f)
    if f.op != Op.GLOBALLY:
        return Gr1Class(Gr1Kind.GENERAL, f)
    body = f.children[0]
    if is_boolean(body) and signal_names(body) <= inputs:
        return Gr1Class(Gr1Kind.SIMPLE_ASSUMPTION, body)
    if _one_step(body, inputs):
        return Gr1Class(Gr1Kind.SIMPLE_SAFETY, body)
    return Gr1Class(Gr1Kind.GENERAL, f)


# ----------------------------------------------------------------------------
# Export
# ----------------------------------------------------------------------------

def nba_to_text(a: NBA) -> str:
    lines = [
        f"states {a.num_states}",
        "atoms " + " ".join(a.atoms),
        "initial " + " ".join(str(s) for s in sorted(a.initial)),
        "accepting " + " ".join(str(s) for s in sorted(a.accepting)),
    ]
    for t in a.transitions:
        lines.append(f"{t.src} -> {t.dst} : {t.guard_text()}")
    return "\n".join(lines) + "\n"


def nba_to_dot(a: NBA, name: str = "nba") -> str:
    graph = Digraph(name)
    graph.attr(rankdir="LR")
    for state in range(a.num_states):
        shape = "doublecircle" if state in a.accepting else "circle"
        graph.node(str(state), shape=shape)
    for state in sorted(a.initial):
        graph.node(f"init{state}", label="", shape="point")
        graph.edge(f"init{state}", str(state))
    for t in a.transitions:
        graph.edge(str(t.src), str(t.dst), label=t.guard_text())
    return graph.source

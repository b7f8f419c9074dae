"""
Indexed LTL formulas for parameterized token-ring specifications.

This module holds the formula tree used everywhere else in the package, plus
the pure rewrites that operate on it:

- construction helpers (atom, conj, always, ...)
- index handling (index_tags, instantiate, erase_index)
- pretty printing in the spec-file syntax
- desugaring to the core operators and negation normal form
- a direct evaluator on ultimately periodic (lasso) words, used as a test oracle

Formulas are immutable and hash-consed through a cached hash, so they can be
used freely as dictionary keys and set members.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

# Name of the global output whose value is a process index ("hmaster = i").
MASTER = "hmaster"

# Index tags: None (global), "i" / "j" (index variables), int (concrete vertex),
# MASTER_INDEX (the vertex currently named by hmaster).
MASTER_INDEX = "master"
IndexTag = Union[None, str, int]

Valuation = FrozenSet[str]


class Op(Enum):
    """Formula node kinds"""
    ATOM = "atom"
    TRUE = "true"
    FALSE = "false"
    NOT = "!"
    AND = "&"
    OR = "|"
    IMPLIES = "->"
    IFF = "<->"
    NEXT = "X"
    UNTIL = "U"
    WEAK_UNTIL = "W"
    BOUNDED_WEAK_UNTIL = "W[k]"
    GLOBALLY = "G"
    EVENTUALLY = "F"
    FORALL = "forall"       # prenex index quantifier, only before localization


BINARY_OPS = (Op.AND, Op.OR, Op.IMPLIES, Op.IFF, Op.UNTIL, Op.WEAK_UNTIL, Op.BOUNDED_WEAK_UNTIL)
UNARY_OPS = (Op.NOT, Op.NEXT, Op.GLOBALLY, Op.EVENTUALLY)
TEMPORAL_OPS = (Op.NEXT, Op.UNTIL, Op.WEAK_UNTIL, Op.BOUNDED_WEAK_UNTIL, Op.GLOBALLY, Op.EVENTUALLY)


@dataclass(frozen=True)
class Formula:
    """
    One node of an indexed LTL formula.

    `name`/`index` are set for atoms. `bound` is k for W[k]; for FORALL it is
    the excluded vertex (or -1) and `name` holds the index variable.
    """
    op: Op
    children: Tuple["Formula", ...] = ()
    name: Optional[str] = None
    index: IndexTag = None
    bound: int = 0
    _hash: int = field(default=0, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.op == Op.BOUNDED_WEAK_UNTIL and self.bound < 0:
            raise ValueError(f"bounded weak until needs k >= 0, got {self.bound}")
        object.__setattr__(self, "_hash", hash(
            (self.op, self.children, self.name, self.index, self.bound)))

    def __hash__(self):
        return self._hash

    def __str__(self):
        return pretty(self)

    @property
    def key(self) -> str:
        """Valuation key of an atom, e.g. 'hgrant_i', 'hready', 'hgrant[0]'"""
        return atom_key(self.name, self.index)


TRUE = Formula(Op.TRUE)
FALSE = Formula(Op.FALSE)


def atom_key(name: str, index: IndexTag = None) -> str:
    if index is None:
        return name
    if index == MASTER_INDEX:
        return f"{name}[{MASTER}]"
    if isinstance(index, int):
        return f"{name}[{index}]"
    return f"{name}_{index}"


def split_key(key: str) -> Tuple[str, IndexTag]:
    """Inverse of atom_key for concrete and global keys ('g[2]' -> ('g', 2))"""
    if key.endswith("]") and "[" in key:
        name, rest = key[:-1].split("[", 1)
        if rest == MASTER:
            return name, MASTER_INDEX
        return name, int(rest)
    return key, None


# ----------------------------------------------------------------------------
# Construction helpers
# ----------------------------------------------------------------------------

def atom(name: str, index: IndexTag = None) -> Formula:
    return Formula(Op.ATOM, name=name, index=index)


def neg(f: Formula) -> Formula:
    return Formula(Op.NOT, (f,))


def conj(*parts: Formula) -> Formula:
    """Right-nested conjunction; the empty conjunction is true"""
    items = [p for p in parts if p != TRUE]
    if not items:
        return TRUE
    result = items[-1]
    for item in reversed(items[:-1]):
        result = Formula(Op.AND, (item, result))
    return result


def disj(*parts: Formula) -> Formula:
    items = [p for p in parts if p != FALSE]
    if not items:
        return FALSE
    result = items[-1]
    for item in reversed(items[:-1]):
        result = Formula(Op.OR, (item, result))
    return result


def implies(a: Formula, b: Formula) -> Formula:
    return Formula(Op.IMPLIES, (a, b))


def iff(a: Formula, b: Formula) -> Formula:
    return Formula(Op.IFF, (a, b))


def nxt(f: Formula) -> Formula:
    return Formula(Op.NEXT, (f,))


def until(a: Formula, b: Formula) -> Formula:
    return Formula(Op.UNTIL, (a, b))


def weak_until(a: Formula, b: Formula) -> Formula:
    return Formula(Op.WEAK_UNTIL, (a, b))


def bounded_weak_until(a: Formula, b: Formula, k: int) -> Formula:
    return Formula(Op.BOUNDED_WEAK_UNTIL, (a, b), bound=k)


def always(f: Formula) -> Formula:
    return Formula(Op.GLOBALLY, (f,))


def eventually(f: Formula) -> Formula:
    return Formula(Op.EVENTUALLY, (f,))


def forall(var: str, body: Formula, excluded: Optional[int] = None) -> Formula:
    return Formula(Op.FORALL, (body,), name=var, bound=-1 if excluded is None else excluded)


def conjuncts(f: Formula) -> List[Formula]:
    """Flatten a tree of conjunctions into its conjunct list"""
    if f.op == Op.AND:
        return conjuncts(f.children[0]) + conjuncts(f.children[1])
    if f.op == Op.TRUE:
        return []
    return [f]


def disjuncts(f: Formula) -> List[Formula]:
    if f.op == Op.OR:
        return disjuncts(f.children[0]) + disjuncts(f.children[1])
    if f.op == Op.FALSE:
        return []
    return [f]


# ----------------------------------------------------------------------------
# Traversal and index handling
# ----------------------------------------------------------------------------

def map_atoms(f: Formula, fn: Callable[[Formula], Formula]) -> Formula:
    """Rebuild f with every atom replaced by fn(atom)"""
    if f.op == Op.ATOM:
        return fn(f)
    if not f.children:
        return f
    children = tuple(map_atoms(c, fn) for c in f.children)
    if children == f.children:
        return f
    return Formula(f.op, children, f.name, f.index, f.bound)


def atoms(f: Formula) -> Set[Formula]:
    found: Set[Formula] = set()
    stack = [f]
    while stack:
        node = stack.pop()
        if node.op == Op.ATOM:
            found.add(node)
        else:
            stack.extend(node.children)
    return found


def atom_keys(f: Formula) -> List[str]:
    return sorted({a.key for a in atoms(f)})


def signal_names(f: Formula) -> Set[str]:
    return {a.name for a in atoms(f)}


def subformulas(f: Formula) -> Iterable[Formula]:
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(node.children)


def index_tags(f: Formula) -> Set[IndexTag]:
    return {a.index for a in atoms(f)}


def has_quantifier(f: Formula) -> bool:
    return any(node.op == Op.FORALL for node in subformulas(f))


def is_boolean(f: Formula) -> bool:
    """True when f contains no temporal operator and no quantifier"""
    return all(node.op not in TEMPORAL_OPS and node.op != Op.FORALL
               for node in subformulas(f))


def instantiate(f: Formula, mapping: Dict[str, int]) -> Formula:
    """Replace index variables by concrete vertices, e.g. {'i': 0, 'j': 2}"""
    def rename(a: Formula) -> Formula:
        if isinstance(a.index, str) and a.index in mapping:
            return atom(a.name, mapping[a.index])
        return a
    return map_atoms(f, rename)


def erase_index(f: Formula) -> Formula:
    """Drop every index tag (single-process view after hub abstraction)"""
    return map_atoms(f, lambda a: a if a.index is None else atom(a.name))


def strip_prenex(f: Formula) -> Formula:
    while f.op == Op.FORALL:
        f = f.children[0]
    return f


# ----------------------------------------------------------------------------
# Pretty printing (inverse of spec_parser.parse_formula)
# ----------------------------------------------------------------------------

def pretty(f: Formula) -> str:
    op = f.op
    if op == Op.ATOM:
        return f.key
    if op == Op.TRUE:
        return "true"
    if op == Op.FALSE:
        return "false"
    if op == Op.NOT:
        return f"!{pretty(f.children[0])}"
    if op in (Op.NEXT, Op.GLOBALLY, Op.EVENTUALLY):
        return f"{op.value} {pretty(f.children[0])}"
    if op == Op.FORALL:
        guard = f" != {f.bound}" if f.bound >= 0 else ""
        return f"(forall {f.name}{guard}. {pretty(f.children[0])})"
    symbol = f"W[{f.bound}]" if op == Op.BOUNDED_WEAK_UNTIL else op.value
    left, right = f.children
    return f"({pretty(left)} {symbol} {pretty(right)})"


# ----------------------------------------------------------------------------
# Desugaring and negation normal form
# ----------------------------------------------------------------------------

def desugar(f: Formula) -> Formula:
    """
    Rewrite into atoms, true/false, !, &, |, X, U, W and G.

    F p becomes true U p; p W[k] q unfolds to p W (q & X(p W[k-1] q)) with
    p W[0] q = p W q.
    """
    op = f.op
    if op in (Op.ATOM, Op.TRUE, Op.FALSE):
        return f
    if op == Op.IMPLIES:
        return Formula(Op.OR, (neg(desugar(f.children[0])), desugar(f.children[1])))
    if op == Op.IFF:
        a, b = desugar(f.children[0]), desugar(f.children[1])
        return Formula(Op.OR, (Formula(Op.AND, (a, b)), Formula(Op.AND, (neg(a), neg(b)))))
    if op == Op.EVENTUALLY:
        return until(TRUE, desugar(f.children[0]))
    if op == Op.BOUNDED_WEAK_UNTIL:
        p, q = desugar(f.children[0]), desugar(f.children[1])
        result = weak_until(p, q)
        for _ in range(f.bound):
            result = weak_until(p, Formula(Op.AND, (q, nxt(result))))
        return result
    children = tuple(desugar(c) for c in f.children)
    if children == f.children:
        return f
    return Formula(op, children, f.name, f.index, f.bound)


def _negate(f: Formula) -> Formula:
    op = f.op
    if op == Op.TRUE:
        return FALSE
    if op == Op.FALSE:
        return TRUE
    if op == Op.ATOM:
        return neg(f)
    if op == Op.NOT:
        return _nnf(f.children[0])
    if op == Op.AND:
        return Formula(Op.OR, (_negate(f.children[0]), _negate(f.children[1])))
    if op == Op.OR:
        return Formula(Op.AND, (_negate(f.children[0]), _negate(f.children[1])))
    if op == Op.NEXT:
        return nxt(_negate(f.children[0]))
    if op == Op.UNTIL:
        p, q = _negate(f.children[0]), _negate(f.children[1])
        return weak_until(q, Formula(Op.AND, (p, q)))
    if op == Op.WEAK_UNTIL:
        p, q = _negate(f.children[0]), _negate(f.children[1])
        return until(q, Formula(Op.AND, (p, q)))
    if op == Op.GLOBALLY:
        return until(TRUE, _negate(f.children[0]))
    raise ValueError(f"cannot negate non-desugared node {op.name}")


def _nnf(f: Formula) -> Formula:
    if f.op == Op.NOT:
        return _negate(f.children[0])
    if not f.children:
        return f
    if f.op == Op.FORALL:
        raise ValueError("quantified formulas must be instantiated before NNF")
    return Formula(f.op, tuple(_nnf(c) for c in f.children), f.name, f.index, f.bound)


def negate_nnf(f: Formula) -> Formula:
    """NNF of the negation of f (f is desugared first)"""
    return _negate(desugar(f))


def to_nnf(f: Formula) -> Formula:
    return _nnf(desugar(f))


def is_nnf(f: Formula) -> bool:
    for node in subformulas(f):
        if node.op == Op.NOT and node.children[0].op != Op.ATOM:
            return False
        if node.op in (Op.IMPLIES, Op.IFF, Op.EVENTUALLY, Op.BOUNDED_WEAK_UNTIL, Op.FORALL):
            return False
    return True


# ----------------------------------------------------------------------------
# Normal form for comparisons (golden files)
# ----------------------------------------------------------------------------

def canonical(f: Formula):
    """
    Hashable normal form that ignores the nesting and order of conjunctions
    and disjunctions. Used to compare specs conjunct-for-conjunct.
    """
    if f.op == Op.AND:
        return ("&", frozenset(canonical(c) for c in conjuncts(f)))
    if f.op == Op.OR:
        return ("|", frozenset(canonical(c) for c in disjuncts(f)))
    if f.op == Op.IFF:
        return ("<->", frozenset(canonical(c) for c in f.children))
    if f.op == Op.ATOM:
        return ("atom", f.key)
    return (f.op.value, f.bound, f.name, tuple(canonical(c) for c in f.children))


# ----------------------------------------------------------------------------
# Evaluation oracle on lasso words
# ----------------------------------------------------------------------------

def evaluate_boolean(f: Formula, now: Valuation, after: Optional[Valuation] = None) -> bool:
    """
    Evaluate a Boolean formula on one valuation. X is allowed on Boolean
    children when `after` (the next valuation) is given.
    """
    op = f.op
    if op == Op.ATOM:
        return f.key in now
    if op == Op.TRUE:
        return True
    if op == Op.FALSE:
        return False
    if op == Op.NOT:
        return not evaluate_boolean(f.children[0], now, after)
    if op == Op.AND:
        return evaluate_boolean(f.children[0], now, after) and evaluate_boolean(f.children[1], now, after)
    if op == Op.OR:
        return evaluate_boolean(f.children[0], now, after) or evaluate_boolean(f.children[1], now, after)
    if op == Op.IMPLIES:
        return (not evaluate_boolean(f.children[0], now, after)) or evaluate_boolean(f.children[1], now, after)
    if op == Op.IFF:
        return evaluate_boolean(f.children[0], now, after) == evaluate_boolean(f.children[1], now, after)
    if op == Op.NEXT and after is not None:
        return evaluate_boolean(f.children[0], after)
    raise ValueError(f"not a one-step Boolean formula: {pretty(f)}")


def evaluate(f: Formula, stem: Sequence[Iterable[str]], loop: Sequence[Iterable[str]]) -> bool:
    """
    Decide whether the word stem . loop^omega satisfies f.

    Each position of the lasso has exactly one successor, so every temporal
    operator is a least or greatest fixpoint over the positions.
    """
    if not loop:
        raise ValueError("loop must be nonempty")
    word = [frozenset(v) for v in stem] + [frozenset(v) for v in loop]
    size = len(word)
    succ = [p + 1 for p in range(size - 1)] + [len(stem)]
    every = frozenset(range(size))
    cache: Dict[Formula, FrozenSet[int]] = {}

    def pre(target: FrozenSet[int]) -> Set[int]:
        return {p for p in range(size) if succ[p] in target}

    def lfp(base: FrozenSet[int], guard: FrozenSet[int]) -> FrozenSet[int]:
        current: FrozenSet[int] = frozenset()
        while True:
            updated = base | (guard & pre(current))
            if updated == current:
                return current
            current = frozenset(updated)

    def gfp(base: FrozenSet[int], guard: FrozenSet[int]) -> FrozenSet[int]:
        current = every
        while True:
            updated = frozenset(base | (guard & pre(current)))
            if updated == current:
                return current
            current = updated

    def sat(g: Formula) -> FrozenSet[int]:
        if g in cache:
            return cache[g]
        op = g.op
        if op == Op.ATOM:
            result = frozenset(p for p in range(size) if g.key in word[p])
        elif op == Op.TRUE:
            result = every
        elif op == Op.FALSE:
            result = frozenset()
        elif op == Op.NOT:
            result = every - sat(g.children[0])
        elif op == Op.AND:
            result = sat(g.children[0]) & sat(g.children[1])
        elif op == Op.OR:
            result = sat(g.children[0]) | sat(g.children[1])
        elif op == Op.IMPLIES:
            result = (every - sat(g.children[0])) | sat(g.children[1])
        elif op == Op.IFF:
            a, b = sat(g.children[0]), sat(g.children[1])
            result = (a & b) | ((every - a) & (every - b))
        elif op == Op.NEXT:
            inner = sat(g.children[0])
            result = frozenset(p for p in range(size) if succ[p] in inner)
        elif op == Op.UNTIL:
            result = lfp(sat(g.children[1]), sat(g.children[0]))
        elif op == Op.WEAK_UNTIL:
            result = gfp(sat(g.children[1]), sat(g.children[0]))
        elif op == Op.GLOBALLY:
            result = gfp(frozenset(), sat(g.children[0]))
        elif op == Op.EVENTUALLY:
            result = lfp(sat(g.children[0]), every)
        elif op == Op.BOUNDED_WEAK_UNTIL:
            result = sat(desugar(g))
        else:
            raise ValueError("quantified formulas must be instantiated before evaluation")
        cache[g] = result
        return result

    return 0 in sat(f)

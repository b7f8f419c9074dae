"""
Specification transformations for token rings.

The AMBA-style global specification is turned into per-process form in four
steps, each exposed on its own so intermediate specs can be inspected:

    localize_outputs      global outputs g become local g_i
    localize_assumptions  strip the index quantifier, add A5, TR and G12
    specialize_zero       the 0-process variant (no_req, A6, G10.2, G11.2)
    hub_reduce            single-process spec where the environment plays the ring
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

from .ltl import (MASTER, MASTER_INDEX, Formula, Op, always, atom, atoms, conj,
                  conjuncts, erase_index, eventually, has_quantifier, implies,
                  index_tags, is_boolean, map_atoms, neg, nxt, strip_prenex)
from .spec_parser import (RECEIVE, SEND, TOKEN, NameNotFound, ParamSpec, Property, Role,
                          ShapeError, Shape, UnsupportedShape, build_spec)

GRANT = "hgrant"
REQUEST = "hbusreq"
LOCK = "hmastlock"
NO_REQUEST = "no_req"


class LocalizationRule(Enum):
    """How a localized global output is recovered when composing the ring"""
    EXISTS_TOKEN_AND_LOCAL = "exists-token-and-local"   # g holds iff g_i holds at the token holder
    MASTER_INDEX = "master-index"                       # hmaster := i whenever hmaster_i holds


@dataclass(frozen=True)
class OutputLocalization:
    rules: Tuple[Tuple[str, LocalizationRule], ...] = ()

    def rule(self, name: str) -> Optional[LocalizationRule]:
        return dict(self.rules).get(name)

    def __len__(self):
        return len(self.rules)


def token_ring_guarantees(index: Optional[str] = "i") -> List[Property]:
    """The four TR guarantees over tok/snd/rcv"""
    tok, snd, rcv = atom(TOKEN, index), atom(SEND, index), atom(RECEIVE, index)
    return [
        Property("TR1", always(implies(snd, tok))),
        Property("TR2", always(implies(conj(tok, neg(snd)), nxt(tok)))),
        Property("TR3", always(implies(conj(neg(tok), neg(rcv)), nxt(neg(tok))))),
        Property("TR4", always(implies(tok, eventually(snd)))),
    ]


def token_fairness(index: Optional[str] = "i") -> Property:
    return Property("A5", always(eventually(atom(TOKEN, index))))


def _rebuild(spec: ParamSpec, **changes) -> ParamSpec:
    fields = dict(name=spec.name, local_inputs=spec.local_inputs,
                  global_inputs=spec.global_inputs, outputs=spec.outputs,
                  global_outputs=spec.global_outputs, assumptions=spec.assumptions,
                  guarantees=spec.guarantees, tr_guarantees=spec.tr_guarantees,
                  role=spec.role, localized=spec.localized)
    fields.update(changes)
    return build_spec(**fields)


def _with(names, *extra):
    return tuple(names) + tuple(e for e in extra if e not in names)


# ----------------------------------------------------------------------------
# Global outputs
# ----------------------------------------------------------------------------

def _guard_with_master(f: Formula, master: Formula) -> Formula:
    """Add `master` to the premise of the (outermost) implication of f"""
    if f.op in (Op.FORALL, Op.GLOBALLY):
        return Formula(f.op, (_guard_with_master(f.children[0], master),), f.name, f.index, f.bound)
    if f.op == Op.IMPLIES:
        premise, conclusion = f.children
        return implies(Formula(Op.AND, (premise, master)), conclusion)
    return implies(master, f)


def localize_outputs(spec: ParamSpec, globals_: List[str]) -> Tuple[ParamSpec, OutputLocalization]:
    """
    Replace each global output g by its local counterpart g_i.

    Occurrences `p[hmaster]` (the signal of the current master) become p_i
    when hmaster is localized; in assumptions the premise is additionally
    guarded by hmaster_i, since only the master's request is constrained.

    Raises:
        NameNotFound: a name in globals_ is not a global output mentioned by the spec
    """
    if not globals_:
        return spec, OutputLocalization()
    mentioned = set()
    for prop in spec.properties():
        for a in atoms(prop.formula):
            mentioned.add(a.name)
            if a.index == MASTER_INDEX:
                mentioned.add(MASTER)
    for name in globals_:
        if name not in spec.global_outputs or name not in mentioned:
            raise NameNotFound(f"global output '{name}' does not occur in spec {spec.name}")

    names = set(globals_)
    master_atom = atom(MASTER, "i")

    def rename(a: Formula) -> Formula:
        if a.name in names and a.index is None:
            return atom(a.name, "i")
        if a.index == MASTER_INDEX and MASTER in names:
            return atom(a.name, "i")
        return a

    def rewrite(prop: Property, is_assumption: bool) -> Property:
        formula = map_atoms(prop.formula, rename)
        uses_master = any(a.index == MASTER_INDEX for a in atoms(prop.formula))
        if is_assumption and uses_master and MASTER in names:
            formula = _guard_with_master(formula, master_atom)
        return Property(prop.label, formula)

    localized = _rebuild(
        spec,
        outputs=_with(spec.outputs, *globals_),
        global_outputs=tuple(g for g in spec.global_outputs if g not in names),
        assumptions=tuple(rewrite(p, True) for p in spec.assumptions),
        guarantees=tuple(rewrite(p, False) for p in spec.guarantees),
        tr_guarantees=tuple(rewrite(p, False) for p in spec.tr_guarantees),
    )
    rules = tuple((name, LocalizationRule.MASTER_INDEX if name == MASTER
                   else LocalizationRule.EXISTS_TOKEN_AND_LOCAL) for name in globals_)
    return localized, OutputLocalization(rules)


# ----------------------------------------------------------------------------
# Assumptions
# ----------------------------------------------------------------------------

def _concrete(f: Formula) -> set:
    return {t for t in index_tags(f) if isinstance(t, int)}


def _local_initial_part(body: Formula) -> Optional[Formula]:
    """
    Keep the part of an initial-state guarantee every non-0 process must
    satisfy: inner `forall i != 0` bodies and negated local literals.
    Positive literals belong to the token holder and are dropped.
    """
    kept = []
    for part in conjuncts(body):
        if part.op == Op.FORALL:
            inner = strip_prenex(part)
            if is_boolean(inner) and not _concrete(inner):
                kept.extend(conjuncts(inner))
        elif part.op == Op.NOT and part.children[0].op == Op.ATOM \
                and part.children[0].index in (None, "i"):
            kept.append(part)
    return conj(*kept) if kept else None


def localize_assumptions(spec: ParamSpec, grant: str = GRANT) -> ParamSpec:
    """
    Move the index quantifier inside and guard the guarantees by token fairness.

    The result satisfies (ass -> TR) & (ass & G F tok_i -> gua) for every i.
    The guarantee G(grant_i -> tok_i) is added when `grant` is a declared
    local output.

    Raises:
        ShapeError: an assumption or guarantee keeps a quantifier or concrete
            index that is not a 0-process obligation
    """
    if spec.localized:
        raise ShapeError(f"spec {spec.name} is already localized")
    if spec.role != Role.GENERIC:
        raise ShapeError(f"spec {spec.name} has role {spec.role.value}, expected generic")

    assumptions = []
    for prop in spec.assumptions:
        body = strip_prenex(prop.formula)
        if has_quantifier(body) or _concrete(body) or MASTER_INDEX in index_tags(body):
            raise ShapeError(f"assumption {prop.label} is not localizable "
                             f"(localize global outputs first)")
        assumptions.append(Property(prop.label, body))

    guarantees = []
    for prop in spec.guarantees:
        body = strip_prenex(prop.formula)
        if MASTER_INDEX in index_tags(body):
            raise ShapeError(f"guarantee {prop.label} still refers to the master index")
        if not has_quantifier(body) and not _concrete(body):
            guarantees.append(Property(prop.label, body))
        elif is_boolean(body):
            local_part = _local_initial_part(body)
            if local_part is not None:
                guarantees.append(Property(f"{prop.label}.1", local_part))
        elif _concrete(body) == {0}:
            continue    # 0-process obligation, re-added by specialize_zero
        else:
            raise ShapeError(f"guarantee {prop.label} quantifies inside a temporal operator")

    if grant in spec.outputs:
        guarantees.append(Property("G12", always(implies(atom(grant, "i"), atom(TOKEN, "i")))))

    return _rebuild(
        spec,
        local_inputs=_with(spec.local_inputs, RECEIVE),
        outputs=_with(spec.outputs, TOKEN, SEND),
        assumptions=tuple(assumptions) + (token_fairness(),),
        guarantees=tuple(guarantees),
        tr_guarantees=tuple(token_ring_guarantees()),
        localized=True,
    )


# ----------------------------------------------------------------------------
# 0-process
# ----------------------------------------------------------------------------

def specialize_zero(spec: ParamSpec, grant: str = GRANT, request: str = REQUEST,
                    lock: str = LOCK) -> ParamSpec:
    """
    Derive the 0-process specification from the localized generic one.

    G10.1 and G11.1 are removed; the global input no_req, the assumption A6
    and the guarantees G10.2 and G11.2 are added.

    Raises:
        ShapeError: spec is already a 0-process spec or is not localized
        NameNotFound: a required signal is not declared
    """
    if spec.role == Role.ZERO:
        raise ShapeError(f"spec {spec.name} is already a 0-process spec")
    if not spec.localized or spec.role != Role.GENERIC:
        raise ShapeError(f"spec {spec.name} must be a localized generic spec")
    for name in (grant, MASTER, lock):
        if name not in spec.outputs:
            raise NameNotFound(f"output '{name}' not declared in spec {spec.name}")
    if request not in spec.local_inputs:
        raise NameNotFound(f"input '{request}' not declared in spec {spec.name}")

    tok = atom(TOKEN, "i")
    no_req = atom(NO_REQUEST)
    a6 = Property("A6", always(implies(atom(request, "i"), neg(no_req))))
    g10_2 = Property("G10.2", always(implies(conj(no_req, neg(tok), nxt(tok)),
                                             nxt(atom(grant, "i")))))
    g11_2 = Property("G11.2", implies(tok, conj(atom(grant, "i"), atom(MASTER, "i"),
                                                neg(atom(lock, "i")))))

    guarantees = []
    replacements = {"G10.1": g10_2, "G11.1": g11_2}
    for prop in spec.guarantees:
        if prop.label in replacements:
            guarantees.append(replacements.pop(prop.label))
        else:
            guarantees.append(prop)
    guarantees.extend(replacements.values())

    return _rebuild(
        spec,
        global_inputs=_with(spec.global_inputs, NO_REQUEST),
        assumptions=spec.assumptions + (a6,),
        guarantees=tuple(guarantees),
        role=Role.ZERO,
    )


# ----------------------------------------------------------------------------
# Hub abstraction
# ----------------------------------------------------------------------------

def hub_reduce(spec: ParamSpec) -> ParamSpec:
    """
    Single-process specification where the environment simulates the rest
    of the ring.

    Indices are erased, rcv becomes an ordinary input, and the environment
    promises never to deliver the token to a process that already holds it:
    G(tok -> !rcv). Token arrival (A5) stays in the guarantee premise.

    Raises:
        UnsupportedShape: spec is two-indexed
        ShapeError: spec is not a localized generic or 0-process spec
    """
    if spec.shape == Shape.TWO_INDEXED:
        raise UnsupportedShape(f"spec {spec.name} is two-indexed; hub abstraction needs one index")
    if spec.role == Role.MONOLITHIC:
        raise ShapeError(f"spec {spec.name} is already monolithic")
    if spec.shape == Shape.MIXED or not spec.localized:
        raise ShapeError(f"spec {spec.name} must be localized before hub abstraction")

    def erase(props):
        return tuple(Property(p.label, erase_index(p.formula)) for p in props)

    hub = Property("HUB", always(implies(atom(TOKEN), neg(atom(RECEIVE)))))
    return _rebuild(
        spec,
        local_inputs=_with(spec.local_inputs, RECEIVE),
        assumptions=erase(spec.assumptions) + (hub,),
        guarantees=erase(spec.guarantees),
        tr_guarantees=erase(spec.tr_guarantees),
        role=Role.MONOLITHIC,
    )


def add_assumptions(spec: ParamSpec, extra: List[Property]) -> ParamSpec:
    """Strengthen the environment of spec by extra assumptions"""
    return _rebuild(spec, assumptions=tuple(spec.assumptions) + tuple(extra))


def translate_pipeline(spec: ParamSpec, globals_: List[str], zero: bool = False,
                       hub: bool = False, grant: str = GRANT) -> List[Tuple[str, ParamSpec]]:
    """
    Run the transformations in order and return every intermediate spec.

    Steps already applied to `spec` are skipped.
    """
    steps: List[Tuple[str, ParamSpec]] = [("input", spec)]
    if globals_:
        spec, _ = localize_outputs(spec, globals_)
        steps.append(("localize_outputs", spec))
    if not spec.localized:
        spec = localize_assumptions(spec, grant=grant)
        steps.append(("localize_assumptions", spec))
    if zero:
        spec = specialize_zero(spec, grant=grant)
        steps.append(("specialize_zero", spec))
    if hub:
        spec = hub_reduce(spec)
        steps.append(("hub_reduce", spec))
    return steps

"""
Spec-file reader and writer.

A spec file is line oriented:

    # comment
    [ROLE] generic
    [INPUTS] local: hbusreq, hlock, rcv; global: hready
    [OUTPUTS] local: hgrant, tok, snd
    [ASSUME]
    A2: G F hready
    [GUARANTEE]
    G1: G(!hready -> X !start_i)
    [TR]
    TR1: G(snd_i -> tok_i)

Formulas use `! & | -> <-> G F X U W W[k] true false`, `forall i. f` and
`forall i != 0. f`. Atoms are `name` (declared signal), `name_i` / `name_j`
(indexed local signal), `name[3]` (concrete vertex), `name[hmaster]` and
`hmaster = i` / `hmaster = 0`.
"""

import os
import re
import threading
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import ply.lex as lex
import ply.yacc as yacc

from .ltl import (FALSE, MASTER, MASTER_INDEX, TRUE, Formula, IndexTag, Op, always, atom,
                  atoms, bounded_weak_until, conj, eventually, forall, has_quantifier,
                  implies, index_tags, neg, nxt, pretty)

TOKEN = "tok"
SEND = "snd"
RECEIVE = "rcv"


# ----------------------------------------------------------------------------
# Errors
# ----------------------------------------------------------------------------

class SpecError(ValueError):
    """Base class for specification errors, optionally positioned"""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(f"{where}{message}")


class SpecSyntaxError(SpecError):
    pass


class UndeclaredSignal(SpecError):
    pass


class MissingSection(SpecError):
    pass


class ShapeError(SpecError):
    pass


class UnsupportedShape(ShapeError):
    pass


class NameNotFound(SpecError):
    pass


# ----------------------------------------------------------------------------
# Specification types
# ----------------------------------------------------------------------------

class Shape(Enum):
    ONE_INDEXED = "one-indexed"
    TWO_INDEXED = "two-indexed"
    MIXED = "mixed"             # quantifiers / concrete indices, before localization


class Role(Enum):
    GENERIC = "generic"
    ZERO = "zero"
    MONOLITHIC = "monolithic"   # single process after hub abstraction


class Property(NamedTuple):
    label: str
    formula: Formula

    def __str__(self):
        return f"{self.label}: {pretty(self.formula)}"


@dataclass(frozen=True)
class ParamSpec:
    """A parameterized specification: signal declarations plus properties"""
    name: str
    local_inputs: Tuple[str, ...]
    global_inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    global_outputs: Tuple[str, ...] = ()
    assumptions: Tuple[Property, ...] = ()
    guarantees: Tuple[Property, ...] = ()
    tr_guarantees: Tuple[Property, ...] = ()
    role: Role = Role.GENERIC
    shape: Shape = Shape.ONE_INDEXED
    localized: bool = False

    @property
    def inputs(self) -> Tuple[str, ...]:
        return self.local_inputs + self.global_inputs

    @property
    def all_outputs(self) -> Tuple[str, ...]:
        return self.outputs + self.global_outputs

    @property
    def signals(self) -> Tuple[str, ...]:
        return self.inputs + self.all_outputs

    def properties(self) -> List[Property]:
        return list(self.assumptions) + list(self.guarantees) + list(self.tr_guarantees)

    def property(self, label: str) -> Optional[Property]:
        for prop in self.properties():
            if prop.label == label:
                return prop
        return None

    def is_token_fairness(self, f: Formula) -> bool:
        """True for the token-arrival assumption G F tok_i (or G F tok)"""
        return (f.op == Op.GLOBALLY and f.children[0].op == Op.EVENTUALLY
                and f.children[0].children[0].op == Op.ATOM
                and f.children[0].children[0].name == TOKEN)

    def ring_assumptions(self) -> List[Property]:
        """Assumptions without token fairness (premise of the TR part)"""
        return [a for a in self.assumptions if not self.is_token_fairness(a.formula)]

    def formula(self) -> Formula:
        """
        The full specification formula.

        Localized specs guard TR by the assumptions without token fairness and
        the remaining guarantees by all assumptions; otherwise the plain
        assume-guarantee implication is returned.
        """
        ass = conj(*(a.formula for a in self.assumptions))
        gua = conj(*(g.formula for g in self.guarantees))
        tr = conj(*(t.formula for t in self.tr_guarantees))
        if not self.localized:
            return implies(ass, conj(gua, tr))
        ring_ass = conj(*(a.formula for a in self.ring_assumptions()))
        return conj(implies(ring_ass, tr), implies(ass, gua))


def derive_shape(props: Iterable[Property]) -> Shape:
    tags = set()
    quantified = False
    for prop in props:
        tags |= index_tags(prop.formula)
        quantified = quantified or has_quantifier(prop.formula)
    if quantified or MASTER_INDEX in tags or any(isinstance(t, int) for t in tags):
        return Shape.MIXED
    if "j" in tags:
        return Shape.TWO_INDEXED
    return Shape.ONE_INDEXED


def build_spec(name: str,
               local_inputs: Sequence[str],
               global_inputs: Sequence[str],
               outputs: Sequence[str],
               global_outputs: Sequence[str] = (),
               assumptions: Sequence[Property] = (),
               guarantees: Sequence[Property] = (),
               tr_guarantees: Sequence[Property] = (),
               role: Role = Role.GENERIC,
               localized: Optional[bool] = None) -> ParamSpec:
    """
    Assemble a ParamSpec, deriving its shape and checking the declaration
    invariants.

    Raises:
        UndeclaredSignal: a formula mentions a signal that is not declared
        SpecError: rcv declared as output, snd as input, or TR without tok/snd
        ShapeError: an assumption mentions the second index j
    """
    spec = ParamSpec(
        name=name,
        local_inputs=tuple(local_inputs),
        global_inputs=tuple(global_inputs),
        outputs=tuple(outputs),
        global_outputs=tuple(global_outputs),
        assumptions=tuple(assumptions),
        guarantees=tuple(guarantees),
        tr_guarantees=tuple(tr_guarantees),
        role=role,
        localized=bool(tr_guarantees) if localized is None else localized,
    )
    declared = set(spec.signals)
    for prop in spec.properties():
        for a in atoms(prop.formula):
            if a.name not in declared:
                raise UndeclaredSignal(f"{prop.label}: signal '{a.name}' is not declared")
    if RECEIVE in spec.all_outputs:
        raise SpecError(f"'{RECEIVE}' can only be an input")
    if SEND in spec.inputs:
        raise SpecError(f"'{SEND}' can only be an output")
    if spec.tr_guarantees and not {TOKEN, SEND} <= set(spec.outputs):
        raise SpecError(f"token-ring guarantees need outputs '{TOKEN}' and '{SEND}'")
    for prop in spec.assumptions:
        if "j" in index_tags(prop.formula):
            raise ShapeError(f"assumption {prop.label} mentions index j")
    return replace(spec, shape=derive_shape(spec.properties()))


# ----------------------------------------------------------------------------
# Signal resolution
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SignalTable:
    """Declared signals used to resolve atom spellings while parsing"""
    local_inputs: Tuple[str, ...] = ()
    global_inputs: Tuple[str, ...] = ()
    outputs: Tuple[str, ...] = ()
    global_outputs: Tuple[str, ...] = ()
    role: Role = Role.GENERIC

    @property
    def locals(self) -> Tuple[str, ...]:
        return self.local_inputs + self.outputs

    @property
    def declared(self) -> Tuple[str, ...]:
        return self.local_inputs + self.global_inputs + self.outputs + self.global_outputs

    @classmethod
    def of(cls, spec: ParamSpec) -> "SignalTable":
        return cls(spec.local_inputs, spec.global_inputs, spec.outputs,
                   spec.global_outputs, spec.role)

    def resolve(self, text: str, line: int, column: int) -> Tuple[str, IndexTag]:
        if text in self.declared:
            if text in self.locals and self.role != Role.MONOLITHIC:
                raise SpecSyntaxError(f"local signal '{text}' needs an index", line, column)
            return text, None
        base, _, suffix = text.rpartition("_")
        if suffix in ("i", "j") and base and \
                (base in self.locals or base in self.global_outputs):
            return base, suffix
        raise UndeclaredSignal(f"signal '{text}' is not declared", line, column)

    def check_indexed(self, name: str, line: int, column: int) -> None:
        if name not in self.locals and name not in self.global_outputs:
            raise UndeclaredSignal(f"signal '{name}' cannot carry an index", line, column)


# ----------------------------------------------------------------------------
# Lexer and parser (ply)
# ----------------------------------------------------------------------------

class SpecLexer:
    """Token rules of the formula language"""

    reserved = {
        'G': 'ALWAYS',
        'F': 'EVENTUALLY',
        'X': 'NEXT',
        'U': 'UNTIL',
        'W': 'WEAK_UNTIL',
        'true': 'TRUE',
        'false': 'FALSE',
        'forall': 'FORALL',
    }
    tokens = [
        'NAME', 'NUMBER', 'LPAREN', 'RPAREN', 'LBRACKET', 'RBRACKET',
        'NOT', 'AND', 'OR', 'IMPLIES', 'IFF', 'EQUALS', 'NEQUALS', 'DOT',
    ] + sorted(set(reserved.values()))

    t_LPAREN = r'\('
    t_RPAREN = r'\)'
    t_LBRACKET = r'\['
    t_RBRACKET = r'\]'
    t_IFF = r'<->'
    t_IMPLIES = r'->'
    t_NEQUALS = r'!='
    t_NOT = r'!'
    t_AND = r'&'
    t_OR = r'\|'
    t_EQUALS = r'='
    t_DOT = r'\.'
    t_ignore = " \t"

    def __init__(self):
        self.text = ""
        self.line = 1
        self.offset = 0
        self.lexer = lex.lex(module=self)

    def t_NAME(self, t):
        r'[A-Za-z_][A-Za-z0-9_]*'
        t.type = self.reserved.get(t.value, 'NAME')
        return t

    def t_NUMBER(self, t):
        r'\d+'
        t.value = int(t.value)
        return t

    def t_error(self, t):
        raise SpecSyntaxError(f"unexpected character '{t.value[0]}'",
                              self.line, self.offset + t.lexpos + 1)


class FormulaParser:
    """Production rules of the formula language (lowest precedence first)"""

    tokens = SpecLexer.tokens
    precedence = (
        ('right', 'FORALL'),
        ('left', 'IFF'),
        ('right', 'IMPLIES'),
        ('left', 'OR'),
        ('left', 'AND'),
        ('right', 'UNTIL', 'WEAK_UNTIL'),
        ('right', 'NOT', 'ALWAYS', 'EVENTUALLY', 'NEXT'),
    )

    def __init__(self):
        self.lexer = SpecLexer()
        self.signals: Optional[SignalTable] = None
        self.parser = yacc.yacc(module=self, start='expr', debug=False,
                                write_tables=False, errorlog=yacc.NullLogger())
        self._lock = threading.Lock()

    def parse(self, text: str, signals: Optional[SignalTable], line: int, offset: int) -> Formula:
        with self._lock:
            self.signals = signals
            self.lexer.line = line
            self.lexer.offset = offset
            self.lexer.text = text
            if not text.strip():
                raise SpecSyntaxError("empty formula", line, offset + 1)
            return self.parser.parse(text, lexer=self.lexer.lexer)

    def _column(self, p, n: int) -> int:
        return self.lexer.offset + p.lexpos(n) + 1

    def p_quantifier(self, p):
        """expr : FORALL NAME DOT expr %prec FORALL"""
        p[0] = forall(p[2], p[4])

    def p_quantifier_excluding(self, p):
        """expr : FORALL NAME NEQUALS NUMBER DOT expr %prec FORALL"""
        p[0] = forall(p[2], p[6], excluded=p[4])

    def p_unary(self, p):
        """expr : NOT expr
                | ALWAYS expr
                | EVENTUALLY expr
                | NEXT expr
        """
        build = {'!': neg, 'G': always, 'F': eventually, 'X': nxt}[p[1]]
        p[0] = build(p[2])

    def p_binary(self, p):
        """expr : expr AND expr
                | expr OR expr
                | expr IMPLIES expr
                | expr IFF expr
                | expr UNTIL expr
                | expr WEAK_UNTIL expr
        """
        op = {'&': Op.AND, '|': Op.OR, '->': Op.IMPLIES, '<->': Op.IFF,
              'U': Op.UNTIL, 'W': Op.WEAK_UNTIL}[p[2]]
        p[0] = Formula(op, (p[1], p[3]))

    def p_bounded_weak_until(self, p):
        """expr : expr WEAK_UNTIL LBRACKET NUMBER RBRACKET expr %prec WEAK_UNTIL"""
        p[0] = bounded_weak_until(p[1], p[6], p[4])

    def p_group(self, p):
        """expr : LPAREN expr RPAREN"""
        p[0] = p[2]

    def p_constant(self, p):
        """expr : TRUE
                | FALSE
        """
        p[0] = TRUE if p[1] == 'true' else FALSE

    def p_atom(self, p):
        """expr : NAME"""
        column = self._column(p, 1)
        if self.signals is None:
            base, _, suffix = p[1].rpartition("_")
            p[0] = atom(base, suffix) if base and suffix in ("i", "j") else atom(p[1])
            return
        name, index = self.signals.resolve(p[1], self.lexer.line, column)
        p[0] = atom(name, index)

    def p_atom_indexed(self, p):
        """expr : NAME LBRACKET NUMBER RBRACKET
                | NAME LBRACKET NAME RBRACKET
        """
        if isinstance(p[3], str) and p[3] != MASTER:
            raise SpecSyntaxError(f"index must be a number or '{MASTER}', got '{p[3]}'",
                                  self.lexer.line, self._column(p, 3))
        self._check_indexed(p)
        p[0] = atom(p[1], p[3] if isinstance(p[3], int) else MASTER_INDEX)

    def p_atom_equals(self, p):
        """expr : NAME EQUALS NAME
                | NAME EQUALS NUMBER
        """
        if isinstance(p[3], str) and p[3] not in ("i", "j"):
            raise SpecSyntaxError(f"'{p[1]} = {p[3]}' needs an index variable or number",
                                  self.lexer.line, self._column(p, 3))
        self._check_indexed(p)
        p[0] = atom(p[1], p[3])

    def _check_indexed(self, p):
        if self.signals is not None:
            self.signals.check_indexed(p[1], self.lexer.line, self._column(p, 1))

    def p_error(self, p):
        if p is None:
            raise SpecSyntaxError("unexpected end of formula", self.lexer.line,
                                  self.lexer.offset + len(self.lexer.text) + 1)
        raise SpecSyntaxError(f"unexpected '{p.value}'", self.lexer.line,
                              self.lexer.offset + p.lexpos + 1)


_parser: Optional[FormulaParser] = None


def _get_parser() -> FormulaParser:
    global _parser
    if _parser is None:
        _parser = FormulaParser()
    return _parser


def parse_formula(text: str, signals: Optional[SignalTable] = None,
                  line: int = 1, offset: int = 0) -> Formula:
    """
    Parse one formula.

    Args:
        text: formula text
        signals: declarations used to resolve atoms; without them `x_i` is an
            indexed atom and any other name is global
        line: line number reported in errors
        offset: column offset of `text` inside its line

    Returns:
        The formula tree
    """
    return _get_parser().parse(text, signals, line, offset)


# ----------------------------------------------------------------------------
# Spec files
# ----------------------------------------------------------------------------

SECTION_RE = re.compile(r'^\[([A-Z]+)\]\s*(.*)$')
LABEL_RE = re.compile(r'^([A-Za-z][\w.]*)\s*:\s*')
FORMULA_SECTIONS = {"ASSUME": "A", "GUARANTEE": "G", "TR": "TR"}
KNOWN_SECTIONS = {"INPUTS", "OUTPUTS", "ROLE"} | set(FORMULA_SECTIONS)


def _parse_declarations(text: str, section: str, line: int) -> Tuple[List[str], List[str]]:
    local, glob = [], []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        kind, sep, names = part.partition(":")
        kind = kind.strip()
        if not sep or kind not in ("local", "global"):
            raise SpecSyntaxError(f"[{section}] expects 'local: ...; global: ...', got '{part}'", line, 1)
        target = local if kind == "local" else glob
        target.extend(n.strip() for n in names.split(",") if n.strip())
    return local, glob


def parse_spec(text: str, name: str = "spec") -> ParamSpec:
    """
    Parse a spec file into a ParamSpec.

    Raises:
        MissingSection: no [OUTPUTS] section
        SpecSyntaxError: malformed section or formula (with line/column)
        UndeclaredSignal: formula mentions an undeclared signal
    """
    sections = {}
    formula_lines: List[Tuple[str, int, int, str]] = []
    current = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        match = SECTION_RE.match(stripped.strip())
        column = len(stripped) - len(stripped.lstrip())
        if match:
            current = match.group(1)
            if current not in KNOWN_SECTIONS:
                raise SpecSyntaxError(f"unknown section [{current}]", line_no, column + 1)
            sections.setdefault(current, [])
            body = match.group(2)
            if not body:
                continue
            column = stripped.index(body, stripped.index("]") + 1)
        else:
            if current is None:
                raise SpecSyntaxError("text outside of a section", line_no, column + 1)
            body = stripped.strip()
        if current in FORMULA_SECTIONS:
            formula_lines.append((current, line_no, column, body))
        else:
            sections[current].append((line_no, body))

    if "OUTPUTS" not in sections:
        raise MissingSection("missing [OUTPUTS] section")

    role = Role.GENERIC
    for line_no, body in sections.get("ROLE", []):
        try:
            role = Role(body.strip())
        except ValueError:
            raise SpecSyntaxError(f"unknown role '{body.strip()}'", line_no, 1)

    def declarations(section):
        local, glob = [], []
        for line_no, body in sections.get(section, []):
            more_local, more_glob = _parse_declarations(body, section, line_no)
            local += more_local
            glob += more_glob
        return local, glob

    local_inputs, global_inputs = declarations("INPUTS")
    outputs, global_outputs = declarations("OUTPUTS")
    table = SignalTable(tuple(local_inputs), tuple(global_inputs), tuple(outputs),
                        tuple(global_outputs), role)

    parsed = {section: [] for section in FORMULA_SECTIONS}
    for section, line_no, column, body in formula_lines:
        label_match = LABEL_RE.match(body)
        if label_match:
            label = label_match.group(1)
            formula_text = body[label_match.end():]
            column += label_match.end()
        else:
            label = f"{FORMULA_SECTIONS[section]}{len(parsed[section]) + 1}"
            formula_text = body
        formula = parse_formula(formula_text, table, line_no, column)
        parsed[section].append(Property(label, formula))

    return build_spec(name, local_inputs, global_inputs, outputs, global_outputs,
                      parsed["ASSUME"], parsed["GUARANTEE"], parsed["TR"], role)


def load_spec(path: str) -> ParamSpec:
    """Read and parse a spec file; the spec is named after the file"""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_spec(text, name=os.path.splitext(os.path.basename(path))[0])


def format_spec(spec: ParamSpec) -> str:
    """Render a ParamSpec in spec-file syntax (parse_spec inverts it)"""
    def declaration(local, glob):
        parts = []
        if local:
            parts.append("local: " + ", ".join(local))
        if glob:
            parts.append("global: " + ", ".join(glob))
        return "; ".join(parts)

    lines = [f"# {spec.name}", f"[ROLE] {spec.role.value}",
             f"[INPUTS] {declaration(spec.local_inputs, spec.global_inputs)}".rstrip(),
             f"[OUTPUTS] {declaration(spec.outputs, spec.global_outputs)}".rstrip()]
    for section, props in (("ASSUME", spec.assumptions), ("GUARANTEE", spec.guarantees),
                           ("TR", spec.tr_guarantees)):
        if props:
            lines.append(f"[{section}]")
            lines.extend(f"{p.label}: {pretty(p.formula)}" for p in props)
    return "\n".join(lines) + "\n"

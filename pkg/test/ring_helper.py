#!/usr/bin/env python3
"""
Helpers shared by the test files: repository paths, the two-state arbiter
template and small single-process specifications.
"""

import os
import sys

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, REPO_ROOT)

from bin.machine import ProcessTemplate
from bin.spec_parser import parse_spec


def spec_path(name):
    """Path of a file in the shipped specs/ corpus"""
    return os.path.join(REPO_ROOT, "specs", name)


def arbiter_template(grant_when_token=True, sends=True, idle_grant=False):
    """
    Two-state arbiter: state 0 idle, state 1 holds the token.

    With the defaults the token holder grants and passes the token on at once.
    """
    token_label = {"tok"} | ({"g"} if grant_when_token else set()) | ({"snd"} if sends else set())
    idle_label = {"g"} if idle_grant else set()

    def step(q, names):
        if q == 0:
            return 1 if "rcv" in names else 0
        if "rcv" in names:
            return None
        return 0 if sends else 1

    return ProcessTemplate.from_function(("r", "rcv"), ("g", "tok", "snd"), [idle_label, token_label], step)


def monolithic_spec(guarantee, assumptions=(), name="mono"):
    """Single-process spec over r/rcv and g/tok/snd with the hub assumption"""
    lines = ["[ROLE] monolithic", "[INPUTS] local: r, rcv", "[OUTPUTS] local: g, tok, snd",
             "[ASSUME]", "HUB: G(tok -> !rcv)"]
    lines += [f"A{k}: {a}" for k, a in enumerate(assumptions, 1)]
    lines += ["[GUARANTEE]", f"P: {guarantee}"]
    return parse_spec("\n".join(lines) + "\n", name=name)


def solver_answer(cs, assignment):
    """Render an assignment the way an SMT solver answers check-sat and get-value"""
    pairs = []
    for q in range(cs.bound):
        for m in range(cs.num_masks):
            pairs.append(f"((delta {q} {m}) {assignment.delta.get((q, m), q)})")
    for o in cs.outputs:
        for q in range(cs.bound):
            pairs.append(f"((out_{o} {q}) {'true' if o in assignment.out[q] else 'false'})")
    for (a, q), value in sorted(assignment.rank.items()):
        pairs.append(f"((rho {a} {q}) {value if value >= 0 else '(- 1)'})")
    return "sat\n(" + "\n ".join(pairs) + ")\n"

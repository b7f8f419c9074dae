"""
Command-line driver.

    translate  run the specification transformations and write every step
    synth      synthesize a template (optionally stage by stage)
    verify     check templates against a localized specification in rings
    mc         model check one property on a ring of fixed size
    compose    compose a ring and export its state graph
    emit-smt   write the SMT-LIB encoding of one bound

Exit codes: 0 success, 1 property failure or no model, 2 usage or
environment error. Log lines go to standard error.
"""

import argparse
import contextlib
import json
import os
import sys
from typing import List, Optional, Sequence, TextIO, Tuple

from .automata import nba_to_dot
from .config import ConfigError, PipelineConfig, parse_bound_range, parse_optimizations
from .ltl import pretty
from .machine import (ProcessTemplate, SingleProcess, TemplateError, Timing, compose_ring,
                      load_template, reachable_states, ring_to_dot, save_template,
                      template_to_dot, validate_template)
from .solve import SolverError, SolverStatus, check_assignment, emit_smtlib, parse_solver_output
from .spec_parser import ParamSpec, Role, SpecError, format_spec, load_spec, parse_formula
from .synth import (Outcome, StageRegression, SynthesisError, SynthesisResult, build_system,
                    decode_model, decompose_synthesize, format_stats, load_stages,
                    negated_automaton, post_verify, synthesize)
from .transforms import GRANT, hub_reduce, translate_pipeline
from .verify import Status, model_check, replay_counterexample, verify_parameterized

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2

TIMINGS = [Timing.SYNCHRONOUS.value, Timing.INTERLEAVING.value, Timing.FULLY_ASYNCHRONOUS.value]


def log(message: str):
    print(message, file=sys.stderr)


def _names(text: Optional[str]) -> List[str]:
    return [n.strip() for n in (text or "").split(",") if n.strip()]


def _write(path: str, text: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        f.write(text)
    log(f"💾 Wrote {path}")


# ----------------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ring_synth",
                                     description="Parameterized synthesis of token-ring process templates")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("translate", help="localize a global specification step by step")
    p.add_argument("spec")
    p.add_argument("--globals", help="comma-separated global outputs to localize (default: all)")
    p.add_argument("--zero", action="store_true", help="derive the 0-process specification")
    p.add_argument("--hub", action="store_true", help="finish with the hub abstraction")
    p.add_argument("--grant", default=GRANT, help=f"grant output linked to the token (default {GRANT})")
    p.add_argument("--out-dir", help="write every intermediate spec into this directory")

    p = sub.add_parser("synth", help="synthesize a process template")
    p.add_argument("spec", nargs="?", help="spec file (omit with --stages)")
    p.add_argument("--bound", help="state bounds A..B")
    p.add_argument("--timing", choices=TIMINGS[:2], help="timing model used for post-verification")
    p.add_argument("--opt", help="optimizations: gr1-direct, hardcode-token, hub (comma-separated, or none)")
    p.add_argument("--solver", help="builtin or external:<command>")
    p.add_argument("--timeout", type=int, help="seconds per external solver call")
    p.add_argument("--stages", help="stage file for decompositional synthesis")
    p.add_argument("--out-dot", help="write the model as DOT")
    p.add_argument("--out-json", help="write the model as JSON (default <output dir>/<spec>.ring.json)")
    p.add_argument("--emit-smt", help="directory for the SMT-LIB script of every bound")
    p.add_argument("--model-file", help="read a saved solver answer instead of solving (single bound)")
    p.add_argument("--jobs", type=int, help="parallel bounds with an external solver")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("verify", help="verify templates for all ring sizes")
    p.add_argument("model")
    p.add_argument("spec")
    p.add_argument("--zero-model", help="template of process 0")
    p.add_argument("--zero-spec", help="specification of process 0")
    p.add_argument("--timing", choices=TIMINGS[:2])
    p.add_argument("--full", action="store_true", help="check every vertex instead of one per role")
    p.add_argument("--out-json", help="write the report as JSON")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("mc", help="model check a property on a fixed ring")
    p.add_argument("model")
    p.add_argument("--prop", required=True, help="property with concrete indices, e.g. 'G !(g[0] & g[1])'")
    p.add_argument("--assume", action="append", default=[], help="assumption (repeatable)")
    p.add_argument("--size", type=int, default=2, help="ring size; 1 checks the template alone")
    p.add_argument("--timing", choices=TIMINGS[:2])
    p.add_argument("--global-inputs", help="comma-separated inputs shared by all processes")
    p.add_argument("--zero-model", help="template of process 0")

    p = sub.add_parser("compose", help="compose a ring and export its reachable states")
    p.add_argument("model")
    p.add_argument("--size", type=int, default=2)
    p.add_argument("--timing", choices=TIMINGS)
    p.add_argument("--global-inputs", help="comma-separated inputs shared by all processes")
    p.add_argument("--zero-model", help="template of process 0")
    p.add_argument("--out-dot", help="write the ring state graph as DOT")

    p = sub.add_parser("emit-smt", help="write the SMT-LIB encoding of one bound")
    p.add_argument("spec")
    p.add_argument("path", nargs="?", help="output file (default: standard output)")
    p.add_argument("--bound", type=int, required=True)
    p.add_argument("--opt", help="optimizations: gr1-direct, hardcode-token, hub")
    p.add_argument("--out-nba", help="also write the automaton of the negated specification as DOT")
    return parser


def pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults from ringsynth.conf overridden by the command line"""
    config = PipelineConfig.from_config()
    config.command = args.command
    if getattr(args, "spec", None):
        config.spec_paths = [args.spec]
    bound = getattr(args, "bound", None)
    if isinstance(bound, int):
        config.bound_min = config.bound_max = bound
    elif bound:
        config.bound_min, config.bound_max = parse_bound_range(bound)
    if getattr(args, "timing", None):
        config.timing = Timing(args.timing)
    if getattr(args, "opt", None) is not None:
        config.optimizations = parse_optimizations(args.opt)
    for name in ("solver", "timeout", "jobs", "stages", "out_dot", "out_json", "emit_smt"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, "stages_path" if name == "stages" else name, value)
    config.verbose = getattr(args, "verbose", False)
    return config.validate()


# ----------------------------------------------------------------------------
# Shared steps
# ----------------------------------------------------------------------------

def prepare_spec(spec: ParamSpec, config: PipelineConfig) -> Tuple[ParamSpec, Optional[ParamSpec]]:
    """
    Bring a spec into hub-reduced form.

    Returns:
        (spec to encode, localized generic spec for ring verification or None)
    """
    if spec.role == Role.MONOLITHIC:
        return spec, None
    if not spec.localized:
        steps = translate_pipeline(spec, list(spec.global_outputs))
        spec = steps[-1][1]
        log(f"🔄 Localized {spec.name}: " + " -> ".join(name for name, _ in steps[1:]))
    if not config.uses("hub"):
        raise ConfigError(f"spec {spec.name} is not monolithic; enable the 'hub' optimization")
    ring_spec = spec if spec.role == Role.GENERIC else None
    return hub_reduce(spec), ring_spec


def _load_ring(args, config: PipelineConfig):
    template = load_template(args.model)
    zero = load_template(args.zero_model) if args.zero_model else None
    for name, t in (("model", template), ("zero model", zero)):
        if t is None:
            continue
        violations = validate_template(t)
        if violations:
            raise TemplateError(f"{name} is not a well-formed template: {violations[0]}")
    if args.size == 1:
        return SingleProcess(template)
    return compose_ring(template, args.size, config.timing, _names(args.global_inputs), zero)


def _save_model(model: ProcessTemplate, name: str, config: PipelineConfig, suffix: str = ""):
    path = config.out_json if (config.out_json and not suffix) else \
        os.path.join(config.output_dir, f"{name}{suffix}.ring.json")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    save_template(model, path)
    log(f"💾 Wrote {path}")
    if config.out_dot and not suffix:
        _write(config.out_dot, template_to_dot(model, name))


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------

def cmd_translate(args, config: PipelineConfig, out: TextIO) -> int:
    spec = load_spec(args.spec)
    globals_ = _names(args.globals) if args.globals is not None else list(spec.global_outputs)
    steps = translate_pipeline(spec, globals_, zero=args.zero, hub=args.hub, grant=args.grant)
    for k, (step, result) in enumerate(steps):
        log(f"🔄 {k}: {step} ({len(result.assumptions)} assumptions, "
            f"{len(result.guarantees) + len(result.tr_guarantees)} guarantees)")
        if args.out_dir and k:
            _write(os.path.join(args.out_dir, f"{spec.name}.{k}.{step}.spec"), format_spec(result))
    out.write(format_spec(steps[-1][1]))
    return EXIT_OK


def _report_result(result: SynthesisResult, name: str, config: PipelineConfig, out: TextIO) -> int:
    if result.stats:
        log(format_stats(result.stats))
    if result.outcome == Outcome.NOT_FOUND:
        log(f"❌ {name}: {result.message}")
        return EXIT_FAILED
    if result.outcome == Outcome.UNKNOWN:
        log(f"⚠️  {name}: {result.message}")
        return EXIT_FAILED
    _save_model(result.model, name, config)
    log(f"✅ {name}: model with {result.model.num_states} states")
    if result.report is not None:
        out.write(result.report.to_text())
    return EXIT_OK if result.report is None or result.report.passed else EXIT_FAILED


def _synth_from_model_file(spec: ParamSpec, ring_spec: Optional[ParamSpec], config: PipelineConfig,
                           path: str) -> SynthesisResult:
    if config.bound_min != config.bound_max:
        raise ConfigError("--model-file needs a single bound, e.g. --bound 4")
    options = config.synth_options()
    cs = build_system(spec, config.bound_min, options, config.uses("gr1-direct"))
    with open(path, "r") as f:
        outcome = parse_solver_output(f.read(), cs, backend=f"file:{os.path.basename(path)}")
    if outcome.status != SolverStatus.SAT:
        return SynthesisResult(Outcome.NOT_FOUND if outcome.status == SolverStatus.UNSAT else Outcome.UNKNOWN,
                               bound=cs.bound, message=f"solver answer in {path} is {outcome.status.value}")
    violated = check_assignment(cs, outcome.assignment)
    if violated:
        raise SolverError(f"model in {path} violates {len(violated)} constraints, first: {violated[0]}")
    model = decode_model(cs, outcome.assignment)
    return SynthesisResult(Outcome.MODEL, model, cs.bound, report=post_verify(model, spec, ring_spec, options))


def cmd_synth(args, config: PipelineConfig, out: TextIO) -> int:
    options = config.synth_options()
    if config.stages_path:
        stages = load_stages(config.stages_path)
        name = os.path.splitext(os.path.basename(config.stages_path))[0]
        try:
            result = decompose_synthesize(stages, config.bounds, options)
        except StageRegression as e:
            log(f"❌ {e}")
            return EXIT_FAILED
        for k, stage_result in enumerate(result.stages[:-1], 1):
            if stage_result.model is not None:
                _save_model(stage_result.model, name, config, suffix=f".stage{k}")
        return _report_result(result, name, config, out)

    if not args.spec:
        raise ConfigError("synth needs a spec file or --stages")
    spec = load_spec(args.spec)
    reduced, ring_spec = prepare_spec(spec, config)
    if args.model_file:
        result = _synth_from_model_file(reduced, ring_spec, config, args.model_file)
    else:
        log(f"🔍 Synthesizing {spec.name} with bounds {config.bound_min}..{config.bound_max} "
            f"({config.solver}, {', '.join(config.optimizations) or 'no optimizations'})")
        result = synthesize(reduced, config.bounds, options, ring_spec)
    return _report_result(result, spec.name, config, out)


def cmd_verify(args, config: PipelineConfig, out: TextIO) -> int:
    template = load_template(args.model)
    zero = load_template(args.zero_model) if args.zero_model else None
    violations = [(name, v) for name, t in (("model", template), ("zero model", zero))
                  if t is not None for v in validate_template(t)]
    for name, violation in violations:
        log(f"❌ {name}: {violation}")
    if violations:
        return EXIT_FAILED

    spec = load_spec(args.spec)
    if not spec.localized:
        spec = translate_pipeline(spec, list(spec.global_outputs))[-1][1]
    zero_spec = load_spec(args.zero_spec) if args.zero_spec else None
    report = verify_parameterized(template, zero, spec, zero_spec, timing=config.timing,
                                  full_instantiation=args.full, verbose=config.verbose)
    out.write(report.to_text())
    if args.out_json:
        _write(args.out_json, report.to_json())
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_mc(args, config: PipelineConfig, out: TextIO) -> int:
    system = _load_ring(args, config)
    prop = parse_formula(args.prop)
    assumptions = [parse_formula(a) for a in args.assume]
    verdict = model_check(system, prop, assumptions, label=args.prop)
    out.write(json.dumps(verdict.to_dict(), indent=2) + "\n")
    if verdict.status == Status.UNSUPPORTED:
        log(f"⚠️  {verdict.message}")
        return EXIT_ERROR
    if verdict.passed:
        log(f"✅ {pretty(prop)} holds at n={system.size}")
        return EXIT_OK
    replayed = replay_counterexample(verdict, system)
    log(f"❌ {pretty(prop)} fails at n={system.size}: {verdict.message}"
        + ("" if replayed else " (replay did not confirm the counterexample)"))
    return EXIT_FAILED


def cmd_compose(args, config: PipelineConfig, out: TextIO) -> int:
    if args.size < 2:
        raise ConfigError("compose needs --size 2 or more")
    system = _load_ring(args, config)
    states = reachable_states(system)
    holders = {len(system.token_holders(s)) for s in states}
    out.write(f"ring of {system.size} ({system.timing.value}): {len(states)} reachable states, "
              f"token holders per state: {sorted(holders)}\n")
    if args.out_dot:
        _write(args.out_dot, ring_to_dot(system))
    return EXIT_OK if holders == {1} else EXIT_FAILED


def cmd_emit_smt(args, config: PipelineConfig, out: TextIO) -> int:
    spec = load_spec(args.spec)
    reduced, _ = prepare_spec(spec, config)
    cs = build_system(reduced, args.bound, config.synth_options(), config.uses("gr1-direct"))
    script = emit_smtlib(cs)
    if args.path:
        _write(args.path, script)
    else:
        out.write(script)
    if args.out_nba:
        _write(args.out_nba, nba_to_dot(negated_automaton(cs.formula), f"{spec.name}_negated"))
    return EXIT_OK


COMMANDS = {
    "translate": cmd_translate,
    "synth": cmd_synth,
    "verify": cmd_verify,
    "mc": cmd_mc,
    "compose": cmd_compose,
    "emit-smt": cmd_emit_smt,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code"""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR

    out = sys.stdout
    try:
        with contextlib.redirect_stdout(sys.stderr):
            config = pipeline_config(args)
            return COMMANDS[args.command](args, config, out)
    except SpecError as e:
        log(f"❌ Specification error: {e}")
    except TemplateError as e:
        log(f"❌ Template error: {e}")
    except (SynthesisError, SolverError) as e:
        log(f"❌ Synthesis error: {e}")
    except ConfigError as e:
        log(f"❌ Configuration error: {e}")
    except OSError as e:
        log(f"❌ {e}")
    return EXIT_ERROR

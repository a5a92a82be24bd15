"""Command-line entry point (``prasp``)."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .approx import AnnealParams, RefineParams, WalkSatParams
from .engine import Engine, InferenceConfig, load_statements
from .grounder import GroundingError
from .query import QueryFile, QueryResult, format_result
from .syntax import ParseError

log = logging.getLogger("prasp_lite")

#: Switches of the original system that this implementation does not offer.
UNSUPPORTED_FLAGS = {
    "--mod0", "--mod1", "--mlns", "--dnf", "--fullspan", "--stream", "--grounder", "--groundersolver",
    "--SMTsolver", "--folconv", "--ascheckmode", "--cacheinfsetup", "--checkconsistency", "--showindeps",
    "--noremotesampling", "--linoptimconf", "--linsolveconf", "--enforceSMT", "--omitSMT",
    "--strongnegbelief", "--addnegf", "--spangenConf", "--spanqueries", "--assumegroundersolver",
    "--groundingconf", "--extiidanalysis", "-o4", "-o4asp",
}

#: Options whose optional numeric/boolean arguments are collected by hand.
VARIADIC = {"--simanneal": 7, "--itrefinement": 3, "--maxwalksat": 5, "--maxentropy": 4, "--pwdistr": 1, "--xorconf": 2, "--pwsamples": 1}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    background: Path
    queries: list = field(default_factory=list)
    hypotheses: Optional[Path] = None
    examples: Optional[Path] = None
    inference: InferenceConfig = field(default_factory=InferenceConfig)


def _is_value(token: str) -> bool:
    if token.lower() in ("true", "false"):
        return True
    try:
        float(token)
    except ValueError:
        return False
    return True


def _split_variadic(argv: Sequence[str]) -> tuple:
    """Pull the variadic switches (with their values) out of ``argv``."""
    rest, found = [], {}
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in VARIADIC:
            vals = []
            i += 1
            while i < len(argv) and len(vals) < VARIADIC[tok] and _is_value(argv[i]):
                vals.append(argv[i])
                i += 1
            found[tok] = vals
            continue
        rest.append(tok)
        i += 1
    return rest, found


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="prasp",
        description="Probabilistic answer set programming: inference and weight learning.",
        epilog=(
            "Variadic switches (all arguments optional): --simanneal [energy minTemp tempDecr samplingMethod "
            "initTemp samplesPerStep targetAll], --itrefinement [epsilon n retainCounts], --maxwalksat "
            "[costtarget maxit maxtries p repl], --maxentropy [ignored parameters], --xorconf q1 [q2], "
            "--pwdistr [n], --pwsamples [n]."
        ),
    )
    p.add_argument("files", nargs="*", help=".prasp background, .query queries, .hypoth and .examples for learning")
    p.add_argument("-b", "--bgk", help="background knowledge file")
    p.add_argument("-q", "--query", nargs="+", default=[], help="query files")
    p.add_argument("-l", "--learn", help="hypothesis file")
    p.add_argument("-e", "--examples", help="examples file")
    p.add_argument("-o1", "-o1asp", dest="o1", action="store_true", help="--noindepconstrs --noautoindeps --itrefinement")
    p.add_argument("-o2", "-o2asp", dest="o2", action="store_true", help="-o1 plus --initsample 4")
    p.add_argument(
        "-o3", "-o3asp", dest="o3", action="store_true",
        help="--simanneal --nosolve --ignoredeclindeps --noindepconstrs --noautoindeps",
    )
    p.add_argument("--models", type=int, help="number of initial models (0: all)")
    p.add_argument("--initsample", type=int, choices=range(8), metavar="M", help="initial sampling method 0..7")
    p.add_argument("--unisample", type=int, choices=range(-1, 5), metavar="M", help="near-uniform sampling method")
    p.add_argument("--flipsampconf", type=int, choices=range(3), metavar="R", help="sampler used inside flip-sampling")
    p.add_argument("--sirndconf", type=int, metavar="O", help="window size of randomised solver sampling")
    p.add_argument("--nosolve", action="store_true", help="answer queries by counting sampled models")
    p.add_argument("--nospan", action="store_true", help="skip the spanning program (with --maxwalksat)")
    p.add_argument("--weights2cc", action="store_true", help="encode weights by helper-atom counting")
    p.add_argument("--intervalresults", action="store_true", help="report probability ranges")
    p.add_argument("--ndistrs", type=int, default=1, help="number of distributions to answer with")
    p.add_argument("--ignoreentropy", action="store_true", help="take the first distribution found")
    p.add_argument("--noautoindeps", action="store_true", help="do not assume independence of undefined atoms")
    p.add_argument("--noindepconstrs", action="store_true", help="no independence constraint rows")
    p.add_argument("--ignoredeclindeps", action="store_true", help="ignore #indep and #pIndep blocks")
    p.add_argument("--limitindepcombs", type=int, help="cap the number of independence rows")
    p.add_argument("--check", action="store_true", help="compare given weights with inferred probabilities")
    p.add_argument("--showentropy", action="store_true", help="print the entropy of the distribution")
    p.add_argument("--showspan", action="store_true", help="print the spanning program")
    p.add_argument("--showexpansion", action="store_true", help="print the expanded weighted formulas")
    p.add_argument("--verbose", action="store_true", help="print the chosen pipeline settings")
    p.add_argument("--debug", action="store_true", help="print intermediate results")
    p.add_argument("--seed", type=int, help="random seed (runs with the same seed print identical output)")
    p.add_argument("--maxconjexamples", action="store_true", help="maximise the probability of the example conjunction")
    p.add_argument("--keepduplicateexamples", action="store_true", help="keep repeated examples")
    p.add_argument("--nonorm", action="store_true", help="skip the final weight normalisation")
    p.add_argument("--report", metavar="DIR", help="write results.csv and bar charts into DIR")
    p.add_argument("--strict", action="store_true", help="exit with status 3 when a query has no answer")
    return p


def _bool(tok: str) -> bool:
    return tok.lower() == "true"


def _anneal_params(vals: list) -> AnnealParams:
    conv = [float, float, float, int, float, int, _bool]
    names = ["max_energy", "min_temp", "temp_decr", "sampling_method", "init_temp", "samples_per_step", "target_all"]
    kw = {n: c(v) if c is not int else int(float(v)) for n, c, v in zip(names, conv, vals)}
    return AnnealParams(**kw)


def _refine_params(vals: list) -> RefineParams:
    kw = {}
    if len(vals) > 0:
        kw["epsilon"] = float(vals[0])
    if len(vals) > 1:
        kw["max_iterations"] = int(float(vals[1]))
    if len(vals) > 2:
        kw["retain_counts"] = _bool(vals[2])
    return RefineParams(**kw)


def _walksat_params(vals: list) -> WalkSatParams:
    conv = [float, int, int, float, _bool]
    names = ["cost_target", "max_flips", "max_tries", "p", "replacement"]
    kw = {n: (int(float(v)) if c is int else c(v)) for n, c, v in zip(names, conv, vals)}
    return WalkSatParams(**kw)


def dispatch(argv: Sequence[str]) -> tuple:
    """Parse ``argv`` into a :class:`RunConfig` and the display options."""
    for tok in argv:
        name = tok.split("=", 1)[0]
        if name in UNSUPPORTED_FLAGS:
            raise UsageError(f"{name} is not supported in prasp-lite")
    rest, variadic = _split_variadic(argv)
    args = build_parser().parse_args(rest)

    background = Path(args.bgk) if args.bgk else None
    queries = [Path(q) for q in args.query]
    hypoth = Path(args.learn) if args.learn else None
    examples = Path(args.examples) if args.examples else None
    for f in args.files:
        path = Path(f)
        suffix = path.suffix
        if suffix == ".prasp":
            if background is not None:
                raise UsageError("exactly one background knowledge file is allowed")
            background = path
        elif suffix == ".query":
            queries.append(path)
        elif suffix == ".hypoth":
            if hypoth is not None:
                raise UsageError("only one hypothesis file is allowed")
            hypoth = path
        elif suffix == ".examples":
            if examples is not None:
                raise UsageError("only one examples file is allowed")
            examples = path
        else:
            raise UsageError(f"cannot tell the role of {f}; use -b, -q, -l or -e")
    if background is None:
        raise UsageError("a background knowledge file (.prasp or -b) is required")
    if (hypoth is None) != (examples is None):
        raise UsageError("learning needs both a hypothesis file and an examples file")

    solver = "nnls"
    nosolve = args.nosolve
    auto, indep_rows, declared = not args.noautoindeps, not args.noindepconstrs, not args.ignoredeclindeps
    initsample = args.initsample
    if args.o1 or args.o2:
        auto, indep_rows, solver = False, False, "itrefine"
        if args.o2 and initsample is None:
            initsample = 4
    if args.o3:
        solver, nosolve, declared, indep_rows, auto = "simanneal", True, False, False, False
    if "--itrefinement" in variadic:
        solver = "itrefine"
    if "--simanneal" in variadic:
        solver = "simanneal"
    if "--maxwalksat" in variadic:
        solver = "maxwalksat"
    xor = variadic.get("--xorconf", [])
    cfg = InferenceConfig(
        solver=solver,
        nosolve=nosolve,
        nospan=args.nospan,
        weights2cc=args.weights2cc,
        interval_results=args.intervalresults,
        ndistrs=args.ndistrs,
        max_entropy="--maxentropy" in variadic,
        ignore_entropy=args.ignoreentropy,
        auto_indeps=auto,
        indep_constraints=indep_rows,
        declared_indeps=declared,
        limit_indep_combs=args.limitindepcombs,
        initsample=initsample,
        models=args.models,
        uni_method=max(0, args.unisample) if args.unisample is not None else 0,
        xor_q1=int(float(xor[0])) if xor else 100,
        xor_q2=int(float(xor[1])) if len(xor) > 1 else None,
        flip_uni=args.flipsampconf or 0,
        sirnd_o=args.sirndconf if args.sirndconf is not None else 100,
        anneal=_anneal_params(variadic.get("--simanneal", [])),
        refine=_refine_params(variadic.get("--itrefinement", [])),
        walksat=_walksat_params(variadic.get("--maxwalksat", [])),
        seed=args.seed,
    )
    run = RunConfig(background, queries, hypoth, examples, cfg)
    return run, args, variadic


def _install_warning_handler() -> None:
    def show(message, category, filename, lineno, file=None, line=None):
        print(f"WARNING: {message}", file=sys.stderr)

    warnings.showwarning = show


def _configure_logging(args) -> None:
    level = logging.DEBUG if args.debug else logging.INFO if args.verbose else logging.WARNING
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(level)
    log.propagate = False


def _learn(run: RunConfig, args, variadic: dict, out) -> list:
    from .learning import LearningTask, learn

    task = LearningTask(
        load_statements(run.background),
        load_statements(run.hypotheses, query_mode=True),
        load_statements(run.examples),
        conjunctive_target=args.maxconjexamples,
        keep_duplicates=args.keepduplicateexamples,
        normalize=not args.nonorm,
    )
    cfg = run.inference
    explicit = {"--itrefinement", "--simanneal", "--maxwalksat"} & set(variadic) or args.o1 or args.o2 or args.o3
    if not explicit:
        cfg.solver = "itrefine"
    if cfg.solver not in ("itrefine", "nnls"):
        raise UsageError("learning supports the default solver and --itrefinement only")
    result = learn(task, cfg)
    for line in result.lines(task):
        print(line, file=out)
    return [
        QueryResult(h.text.rstrip("."), None, "point", (float(w),)) for h, w in zip(task.hypotheses, result.w)
    ]


def run(run: RunConfig, args, variadic: dict, out=None) -> int:
    out = sys.stdout if out is None else out
    status = 0
    groups = []
    if args.verbose:
        for line in run.inference.describe():
            log.info(line)
    if run.hypotheses is not None:
        groups.append((str(run.hypotheses), _learn(run, args, variadic, out)))
    if run.queries or run.hypotheses is None:
        engine = Engine(load_statements(run.background), run.inference)
        if args.showexpansion:
            for line in engine.expansion_lines():
                print(line, file=out)
        if args.showspan:
            for line in engine.span_lines():
                print(line, file=out)
        for qpath in run.queries:
            qf = QueryFile.from_statements(load_statements(qpath, query_mode=True))
            results = engine.answer(qf)
            for r in results:
                print(format_result(r), file=out)
            if args.strict and any(r.kind == "unknown" for r in results):
                status = 3
            groups.append((str(qpath), results))
        if args.check:
            for line in engine.check_lines():
                print(line, file=out)
        if args.showentropy and not run.inference.interval_results:
            for line in engine.entropy_lines():
                print(line, file=out)
        if "--pwdistr" in variadic:
            vals = variadic["--pwdistr"]
            for line in engine.pwdistr_lines(int(float(vals[0])) if vals else None):
                print(line, file=out)
        if "--pwsamples" in variadic:
            vals = variadic["--pwsamples"]
            for line in engine.pwsample_lines(int(float(vals[0])) if vals else 10):
                print(line, file=out)
    if args.report:
        from .report import write_report

        for path in write_report(args.report, groups):
            log.info("wrote %s", path)
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _install_warning_handler()
    try:
        cfg, args, variadic = dispatch(argv)
    except (UsageError, ValueError) as exc:
        print(f"prasp: error: {exc}", file=sys.stderr)
        return 2
    _configure_logging(args)
    try:
        return run(cfg, args, variadic)
    except (ParseError, GroundingError, UsageError, ValueError, RuntimeError, OSError) as exc:
        print(f"prasp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``drmlab <subcommand> ...``.

Exit codes: 0 success, 1 file/parse error, 2 usage error, 3 not permitted,
4 a simulated request was rejected, 5 a verified property is violated.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .agent import Session, dump_trace, init_agent, install, usable
from .choosers import make_chooser
from .config import Config, ConfigError, load_config
from .rel import ActionKind, LicenseError, Right, compute_label, parse_license, permitted, serialize_license
from .verifier import (
    Bounds,
    BoundsTooLargeError,
    CapExceededError,
    Instance,
    check_liveness,
    check_safety,
    compare_choosers,
    generate_corpus,
)

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DENIED, EXIT_REJECTED, EXIT_VIOLATED = 0, 1, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None


def _load_license(path: str):
    try:
        return parse_license(_read(path))
    except LicenseError as exc:
        raise CliError(f"{path}: {exc}") from None


def _load_licenses(paths) -> list:
    licenses, seen = [], {}
    for p in paths:
        lic = _load_license(p)
        if lic.id in seen:
            raise CliError(f"{p}: license id {lic.id!r} already defined in {seen[lic.id]}")
        seen[lic.id] = p
        licenses.append(lic)
    return licenses


def _state(licenses, now: int = 0):
    s = init_agent()
    for lic in licenses:
        s = install(s, lic)
    return type(s)(s.licenses, s.constraints, now, s.coloring)


def _right(args) -> Right:
    return Right(args.asset, ActionKind(args.action))


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_parse(args, cfg: Config, out) -> int:
    out.write(serialize_license(_load_license(args.file)) + "\n")
    return EXIT_OK


def cmd_eval(args, cfg: Config, out) -> int:
    licenses = _load_licenses(args.licenses)
    s = _state(licenses, args.time)
    ok = permitted(_right(args), s.licenses, s.constraints, s.now)
    out.write("true\n" if ok else "false\n")
    return EXIT_OK if ok else EXIT_DENIED


def cmd_choose(args, cfg: Config, out) -> int:
    licenses = _load_licenses(args.licenses)
    s = _state(licenses, args.time)
    r = _right(args)
    candidates = usable(s, r)
    if not candidates:
        out.write(_dumps({"chosen": None, "reason": f"no usable license for {r}", "request": r.to_json()}) + "\n")
        return EXIT_DENIED
    algo = args.algo or cfg.chooser
    chosen = make_chooser(algo, cfg.precedence)(candidates, s)
    labels = {c: compute_label(s.license(c), s.constraints, cfg.precedence).to_json() for c in sorted(candidates)}
    out.write(chosen + "\n")
    out.write(_dumps({
        "algo": algo,
        "candidates": labels,
        "chosen": chosen,
        "label": labels[chosen],
        "request": r.to_json(),
    }) + "\n")
    return EXIT_OK


def _parse_script(text: str, path: str) -> list:
    commands = []
    for n, raw in enumerate(text.splitlines(), 1):
        words = raw.split("#", 1)[0].split()
        if not words:
            continue
        if words == ["tick"]:
            commands.append(None)
        elif len(words) == 3 and words[0] == "request":
            try:
                commands.append(Right(words[1], ActionKind(words[2])))
            except ValueError:
                raise CliError(f"{path}:{n}: unknown action {words[2]!r}") from None
        else:
            raise CliError(f"{path}:{n}: expected 'request <asset> <action>' or 'tick'")
    return commands


def cmd_simulate(args, cfg: Config, out) -> int:
    licenses = _load_licenses(args.licenses)
    commands = _parse_script(_read(args.script), args.script)
    session = Session(make_chooser(args.algo or cfg.chooser, cfg.precedence))
    for lic in licenses:
        session.install(lic)
    rejected = False
    for cmd in commands:
        if cmd is None:
            session.tick()
        elif session.request(cmd) is None:
            rejected = True
    out.write(session.trace())
    return EXIT_REJECTED if rejected else EXIT_OK


def cmd_verify(args, cfg: Config, out) -> int:
    licenses = _load_licenses(args.licenses)
    instance = Instance(tuple(licenses), args.horizon or cfg.horizon)
    check = check_safety if args.property == "safety" else check_liveness
    algo = args.algo or cfg.chooser
    try:
        verdict = check(instance, algo, cfg.precedence, cfg.state_cap)
    except CapExceededError as exc:
        raise CliError(f"state cap exceeded after {exc.explored} states; raise state_cap") from None
    for w in verdict.warnings:
        print(f"warning: {w}", file=sys.stderr)
    out.write(_dumps(verdict.to_json()) + "\n")
    if args.trace_out and verdict.counterexample is not None:
        Path(args.trace_out).write_text(dump_trace(verdict.counterexample), encoding="utf-8")
    return EXIT_OK if verdict.holds else EXIT_VIOLATED


def _load_corpus_dir(path: str) -> list:
    d = Path(path)
    if not d.is_dir():
        raise CliError(f"{path}: not a directory")
    instances = []
    for f in sorted(d.glob("*.json")):
        try:
            instances.append(Instance.from_json(json.loads(f.read_text(encoding="utf-8")), f.stem))
        except (LicenseError, ValueError, KeyError, TypeError) as exc:
            raise CliError(f"{f}: {exc}") from None
    if not instances:
        raise CliError(f"{path}: no *.json instance files")
    return instances


def cmd_compare(args, cfg: Config, out) -> int:
    if args.corpus:
        corpus = _load_corpus_dir(args.corpus)
    else:
        try:
            bounds = Bounds.parse(args.bounds) if args.bounds else cfg.corpus_bounds
            corpus = list(generate_corpus(bounds))
        except (ValueError, BoundsTooLargeError) as exc:
            raise CliError(f"--bounds: {exc}", EXIT_USAGE) from None
    report = compare_choosers(corpus, cfg.precedence, cfg.state_cap, jobs=args.jobs)
    out.write(report.to_json() if args.format == "json" else report.to_text())
    if args.json_out:
        Path(args.json_out).write_text(report.to_json(), encoding="utf-8")
    if args.figure:
        from .plotting import plot_report

        plot_report(report, args.figure)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drmlab", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="config file (default: $DRMLAB_CONFIG)")
    sub = p.add_subparsers(dest="command", required=True)

    def request_args(sp):
        sp.add_argument("--licenses", nargs="+", required=True, metavar="FILE")
        sp.add_argument("--action", required=True, choices=[a.value for a in ActionKind])
        sp.add_argument("--asset", required=True)
        sp.add_argument("--time", type=int, default=0)

    sp = sub.add_parser("parse", help="validate a license and print its canonical form")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("eval", help="is the right permitted at --time?")
    request_args(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("choose", help="which license serves the request")
    request_args(sp)
    sp.add_argument("--algo", choices=["oma", "labeled"])
    sp.set_defaults(func=cmd_choose)

    sp = sub.add_parser("simulate", help="run a request/tick script and print the trace")
    sp.add_argument("--licenses", nargs="+", required=True, metavar="FILE")
    sp.add_argument("--script", required=True)
    sp.add_argument("--algo", choices=["oma", "labeled"])
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="check safety or liveness exhaustively")
    sp.add_argument("--licenses", nargs="+", required=True, metavar="FILE")
    sp.add_argument("--property", required=True, choices=["safety", "liveness"])
    sp.add_argument("--algo", choices=["oma", "labeled"])
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--trace-out", help="write the counterexample as JSON Lines")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("compare", help="compare both choosers over a corpus")
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--bounds", help="licenses=..,assets=..,actions=..,count=..,deadline=..,horizon=..")
    src.add_argument("--corpus", help="directory of instance files (*.json)")
    sp.add_argument("--format", choices=["text", "json"], default="text")
    sp.add_argument("--json-out", help="also write the JSON report here")
    sp.add_argument("--figure", help="render a summary figure (png, pdf, svg)")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_compare)
    return p


def run_cli(argv: Optional[list] = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "horizon", None) is not None and args.horizon < 1:
        print("drmlab: error: --horizon must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg, out)
    except ConfigError as exc:
        print(f"drmlab: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except CliError as exc:
        print(f"drmlab: {exc}", file=sys.stderr)
        return exc.code


def main() -> None:
    sys.exit(run_cli())

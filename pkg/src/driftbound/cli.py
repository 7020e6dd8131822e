"""Command-line interface.

Every analysis subcommand consumes a scenario config (a JSON file path or a
shipped scenario name), runs the pipeline matching its verb, prints the
report, and exits 0 only if all checks passed.  Common flags: ``--seed``,
``--paths``, ``--horizon`` override the config; ``--out`` selects the
artifact directory; ``--workers`` bounds the JIT thread pool.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from ._backend import active_backend, set_num_threads
from .errors import DriftboundError
from .scenarios import (
    list_scenarios,
    resolve_config,
    run_scenario,
    simulate_scenario,
    validate_scenario,
)

# verbs that restrict which scenario kinds they accept
_VERB_KINDS = {
    "run": None,
    "simulate": None,
    "simulate-switched": ("switched",),
    "verify": ("certificate-verify",),
    "bound": ("bound", "certificate-verify"),
    "value-iterate": ("value-iterate",),
    "check-s1": ("switched",),
    "check-s2": ("switched",),
    "diagnose": ("switched",),
    "iss-check": ("iss",),
    "besq": ("diffusion",),
    "diffusion": ("diffusion",),
}


def _add_common(sub: argparse.ArgumentParser, with_sizes: bool = True) -> None:
    sub.add_argument("config", help="config file path or shipped scenario name")
    sub.add_argument("--seed", type=int, default=None, help="override the seed")
    if with_sizes:
        sub.add_argument("--paths", type=int, default=None, help="override path count")
        sub.add_argument("--horizon", type=int, default=None, help="override horizon")
    sub.add_argument("--out", default=None, help="artifact output directory")
    sub.add_argument("--workers", type=int, default=None,
                     help="thread cap for the jit backend")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftbound",
        description="simulation and certificate verification for stochastic "
                    "hybrid and randomly switched systems",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    for verb, help_text in [
        ("run", "run a scenario end to end"),
        ("simulate", "simulate the scenario's process and export trajectories"),
        ("simulate-switched", "simulate a switched-system scenario's trajectories"),
        ("verify", "verify a supermartingale certificate (exact + statistical)"),
        ("bound", "compute certificate constants and the uniform L1 bound"),
        ("value-iterate", "synthesize the tightest certificate by backward induction"),
        ("check-s1", "check the scalar switching stability condition"),
        ("check-s2", "check the matrix switching stability condition"),
        ("diagnose", "run switched-system stability diagnostics"),
        ("iss-check", "empirical input-to-state stability in L1"),
        ("besq", "squared-radius diffusion identity and shape checks"),
        ("diffusion", "full diffusion scenario (sector, sampled chain)"),
    ]:
        _add_common(subs.add_parser(verb, help=help_text))

    val = subs.add_parser("validate", help="validate a config without running")
    val.add_argument("config")

    subs.add_parser("list", help="list shipped scenarios")
    return parser


def _restrict_checks(doc: dict, verb: str) -> dict:
    """Narrow a scenario to the subset of work a verb asks for."""
    doc = {**doc, "params": dict(doc["params"])}
    if verb == "check-s1":
        doc["params"]["checks"] = ["s1"]
    elif verb == "check-s2":
        doc["params"]["checks"] = ["s2"]
    elif verb == "bound" and doc["kind"] == "certificate-verify":
        doc = {**doc, "kind": "bound",
               "params": {k: doc["params"][k]
                          for k in ("kernel_ref", "certificate_ref", "x0")}}
    return doc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.command == "list":
            rows = list_scenarios()
            width = max(len(r[0]) for r in rows)
            for name, kind, desc in rows:
                print(f"{name:<{width}}  [{kind}] {desc}")
            return 0

        if args.command == "validate":
            doc = validate_scenario(args.config)
            print(f"ok: scenario {doc['name']!r} ({doc['kind']}) is valid")
            return 0

        if args.workers is not None:
            set_num_threads(args.workers)

        doc = resolve_config(args.config)
        allowed = _VERB_KINDS[args.command]
        if allowed is not None and doc.get("kind") not in allowed:
            print(
                f"error: {args.command} needs a scenario of kind "
                f"{' or '.join(allowed)}, got {doc.get('kind')!r}",
                file=sys.stderr,
            )
            return 2
        doc = _restrict_checks(doc, args.command)

        simulate_verbs = ("simulate", "simulate-switched")
        runner = simulate_scenario if args.command in simulate_verbs else run_scenario
        report = runner(
            doc,
            out_dir=args.out,
            seed=args.seed,
            paths=getattr(args, "paths", None),
            horizon=getattr(args, "horizon", None),
        )
        print(f"# backend={active_backend()} runtime_s={report.runtime_s:.3f}")
        print(report.body_text(), end="")
        return 0 if report.ok else 1
    except DriftboundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

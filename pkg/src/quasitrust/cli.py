"""Command-line entry point.

    quasitrust solve --config PATH [--delta-rel R]... [--seed N] [--out DIR] [--<key> VALUE]...
    quasitrust bench-trs --dims LIST --count N --seed N
    quasitrust check --config PATH

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 oracle or derivative-probe mismatch.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from typing import Optional, Sequence

from .errors import ConfigError
from .experiment import (
    EXIT_CONFIG, EXIT_MISMATCH, EXIT_OK, EmitConfig, ExperimentConfig, ProblemConfig,
    derivative_probes, run_experiment, run_trs_bench,
)

log = logging.getLogger("quasitrust")

# keys handled by dedicated flags
_SPECIAL = {"problem", "emit", "delta_rel", "seeds", "output_dir"}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _scalar_type(f: dataclasses.Field):
    t = str(f.type)
    if "bool" in t:
        return None
    if "int" in t:
        return int
    if "float" in t:
        return float
    return str


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    """One flag per config key; problem and emit keys carry their section as prefix."""
    group = parser.add_argument_group("config overrides")
    sections = [(None, ExperimentConfig), ("problem", ProblemConfig), ("emit", EmitConfig)]
    for section, cls in sections:
        for f in dataclasses.fields(cls):
            if section is None and f.name in _SPECIAL:
                continue
            dest = f"{section}__{f.name}" if section else f.name
            flag = _flag(f"{section}_{f.name}" if section else f.name)
            kind = _scalar_type(f)
            if kind is None:
                group.add_argument(flag, dest=dest, action=argparse.BooleanOptionalAction, default=None)
            else:
                group.add_argument(flag, dest=dest, type=kind, default=None, metavar=kind.__name__.upper())


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    for key, value in vars(args).items():
        if value is None:
            continue
        if "__" in key:
            section, name = key.split("__", 1)
            if section in ("problem", "emit"):
                setattr(getattr(cfg, section), name, value)
        elif key in {f.name for f in dataclasses.fields(ExperimentConfig)} and key not in _SPECIAL:
            setattr(cfg, key, value)
    if getattr(args, "delta_rel", None):
        cfg.delta_rel = [float(d) for d in args.delta_rel]
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    return cfg


def _parse_dims(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.replace(" ", "").split(",") if tok]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quasitrust", description="Ivanov regularization with trust-region subproblems.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run the discrepancy-principle solver on a configured experiment")
    solve.add_argument("--config", required=True)
    solve.add_argument("--delta-rel", dest="delta_rel", type=float, action="append",
                       help="relative noise level in percent (repeatable)")
    solve.add_argument("--seed", type=int)
    solve.add_argument("--out")
    _add_override_flags(solve)

    bench = sub.add_parser("bench-trs", help="cross-check the TRS solver against the dense oracle")
    bench.add_argument("--dims", type=_parse_dims, required=True)
    bench.add_argument("--count", type=int, required=True)
    bench.add_argument("--seed", type=int, required=True)

    check = sub.add_parser("check", help="validate a config and run derivative probes")
    check.add_argument("--config", required=True)
    return parser


def _cmd_solve(args) -> int:
    cfg = _apply_overrides(ExperimentConfig.load(args.config), args)
    code, results = run_experiment(cfg)
    for r in results:
        if r.ok:
            print(f"delta_rel={r.delta_rel:g} seed={r.seed}: residual/delta={r.residual / r.delta_abs:.4f} "
                  f"rho={r.rho:.6g} rel_error={r.error:.4g} ({r.termination})")
        else:
            print(f"delta_rel={r.delta_rel:g} seed={r.seed}: FAILED {r.message}")
    print(f"artifacts in {cfg.output_dir}")
    return code


def _cmd_bench(args) -> int:
    code, rows = run_trs_bench(args.dims, args.count, args.seed)
    if not rows:
        print("no instances")
        return code
    print(f"{'dim':>5} {'kind':>10} {'n':>5} {'max_gap':>10} {'max_kkt':>10} {'max_iter':>8}")
    for dim in sorted({r.dim for r in rows}):
        for kind in ("definite", "indefinite", "hard"):
            sel = [r for r in rows if r.dim == dim and r.kind == kind]
            if sel:
                print(f"{dim:>5} {kind:>10} {len(sel):>5} {max(r.gap for r in sel):>10.2e} "
                      f"{max(r.kkt for r in sel):>10.2e} {max(r.iterations for r in sel):>8}")
    if code == EXIT_MISMATCH:
        bad = [r.index for r in rows if not r.gap <= 1e-6]
        print(f"objective gap above 1e-6 for instances {bad} (seed {args.seed})")
    return code


def _cmd_check(args) -> int:
    cfg = ExperimentConfig.load(args.config).validate()
    probes = derivative_probes(cfg)
    ok = probes["gradient"] <= 1e-5 and probes["hessian"] <= 1e-5
    print(f"config ok: {len(cfg.delta_rel)} noise levels x {len(cfg.seeds)} seeds, n = {cfg.n}")
    print(f"gradient probe rel. error {probes['gradient']:.2e}, Hessian probe rel. error {probes['hessian']:.2e}")
    return EXIT_OK if ok else EXIT_MISMATCH


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"solve": _cmd_solve, "bench-trs": _cmd_bench, "check": _cmd_check}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

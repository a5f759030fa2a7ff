"""Command line front end: single solves, convergence studies, reference caching.

Exit codes: 0 on success, 2 for configuration/validation errors (including
the rejected original-kernel fast scheme at vanishing lower order bound),
1 for unexpected runtime failures.
"""

from __future__ import annotations

import argparse
import sys

from .bench import (
    DEFAULT_STUDIES,
    StudyConfig,
    compute_error,
    load_reference,
    run_convergence_study,
    run_single,
    save_reference,
)
from .esa import EsaDivergenceError

__all__ = ["build_parser", "main", "entry"]


def _add_common(parser: argparse.ArgumentParser, with_m: bool) -> None:
    parser.add_argument("--scheme", choices=("l1", "fl1", "rfl1"), default="rfl1")
    parser.add_argument("--n", type=int, default=2**10, help="number of time steps")
    if with_m:
        parser.add_argument("--m", type=int, default=2**8, help="number of spatial cells")
    parser.add_argument("--alpha0", type=float, default=0.0, help="order at t=0")
    parser.add_argument("--alphaT", type=float, default=0.5, help="order at t=T")
    parser.add_argument("--epsilon", default="dt2", help="'dt2' or a fixed accuracy value")
    parser.add_argument("--ref", default=None, help="'auto', or a reference cache path")
    parser.add_argument("--out", default=None, help="CSV output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vofdiff",
        description="Variable-order time-fractional diffusion benchmarks "
        "(L1, fast L1, and robust fast L1 schemes)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ode = sub.add_parser("ode", help="solve the built-in scalar problem once")
    _add_common(p_ode, with_m=False)
    p_ode.set_defaults(func=_cmd_single, example="ode")

    p_pde = sub.add_parser("pde", help="solve the built-in diffusion problem once")
    _add_common(p_pde, with_m=True)
    p_pde.set_defaults(func=_cmd_single, example="pde")

    p_conv = sub.add_parser("convergence", help="run a grid-refinement study")
    p_conv.add_argument("--example", choices=("ode", "pde"), required=True)
    p_conv.add_argument("--scheme", choices=("l1", "fl1", "rfl1"), default="rfl1")
    p_conv.add_argument("--alpha0", type=float, default=0.0)
    p_conv.add_argument("--alphaT", type=float, default=0.5)
    p_conv.add_argument("--vary", choices=("time", "space"), default="time")
    p_conv.add_argument("--resolutions", default=None, help="comma-separated doubling ladder")
    p_conv.add_argument("--fixed", type=int, default=None, help="counterpart resolution")
    p_conv.add_argument("--epsilon", default="dt2")
    p_conv.add_argument("--ref", default="auto", help="'auto', a resolution, or a cache path")
    p_conv.add_argument("--out", default=None)
    p_conv.set_defaults(func=_cmd_convergence)

    p_ref = sub.add_parser("reference", help="compute and cache a reference solution")
    p_ref.add_argument("--example", choices=("ode", "pde"), required=True)
    p_ref.add_argument("--n", type=int, required=True)
    p_ref.add_argument("--m", type=int, default=0)
    p_ref.add_argument("--alpha0", type=float, default=0.0)
    p_ref.add_argument("--alphaT", type=float, default=0.5)
    p_ref.add_argument("--epsilon", default="dt2")
    p_ref.add_argument("--out", required=True)
    p_ref.set_defaults(func=_cmd_reference)

    return parser


def _cmd_single(args) -> int:
    m = getattr(args, "m", 0)
    run = run_single(args.example, args.scheme, args.n, m, args.alpha0, args.alphaT, args.epsilon)
    error = None
    if args.ref == "auto":
        factor = DEFAULT_STUDIES[(args.example, "time")]["ref_factor"]
        from .bench import compute_reference

        reference = compute_reference(args.example, args.alpha0, args.alphaT, factor * args.n, m)
        error = compute_error(run.field, reference)
    elif args.ref is not None:
        reference = load_reference(args.ref, args.example, args.alpha0, args.alphaT)
        error = compute_error(run.field, reference)
    final = run.field.final
    final_txt = f"{final:.10e}" if args.example == "ode" else f"max={max(abs(final)):.10e}"
    err_txt = "" if error is None else f" error={error:.4e}"
    quad_txt = "" if args.scheme == "l1" else f" quad_terms={run.quad_count}"
    print(
        f"{args.example} scheme={args.scheme} n={args.n}"
        + (f" m={m}" if args.example == "pde" else "")
        + f" u(T) {final_txt}{err_txt} cpu={run.cpu_seconds:.3f}s"
        + f" mem_values={run.retained_values}{quad_txt}"
    )
    if args.out is not None:
        err_cell = "" if error is None else repr(error)
        quad_cell = "" if args.scheme == "l1" else str(run.quad_count)
        with open(args.out, "w") as fh:
            fh.write("resolution,error,rate,cpu_s,mem_values,quad_count\n")
            fh.write(f"{args.n},{err_cell},,{run.cpu_seconds:.4f},{run.retained_values},{quad_cell}\n")
    return 0


def _cmd_convergence(args) -> int:
    defaults = DEFAULT_STUDIES[(args.example, args.vary)]
    if args.resolutions is None:
        resolutions = defaults["resolutions"]
    else:
        resolutions = tuple(int(tok) for tok in args.resolutions.split(","))
    fixed = defaults["fixed"] if args.fixed is None else args.fixed
    reference = args.ref
    if isinstance(reference, str) and reference.isdigit():
        reference = int(reference)
    epsilon = args.epsilon if args.epsilon == "dt2" else float(args.epsilon)
    config = StudyConfig(
        example=args.example,
        scheme=args.scheme,
        alpha0=args.alpha0,
        alpha_end=args.alphaT,
        resolutions=resolutions,
        vary=args.vary,
        fixed=fixed,
        epsilon=epsilon,
        reference=reference,
        out=args.out,
    )
    report = run_convergence_study(config)
    for key, value in report.metadata.items():
        print(f"# {key} = {value}")
    print(report.to_markdown())
    return 0


def _cmd_reference(args) -> int:
    if args.epsilon != "dt2":
        raise ValueError("reference solutions pin the dt2 accuracy policy")
    if args.example == "pde" and args.m < 2:
        raise ValueError("pde references need --m >= 2")
    save_reference(args.out, args.example, args.alpha0, args.alphaT, args.n, args.m)
    print(f"reference cached to {args.out} (n={args.n}, m={args.m})")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already reported the problem
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (EsaDivergenceError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()

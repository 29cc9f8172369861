"""Command line: ``curveflow run|verify|sweep|plot``.

Outputs go under the directory named by ``CURVEFLOW_OUT`` (default
``./curveflow-out``). The exit status is 0 only if every requested verdict
passes.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import CurveFlowError
from .runner import SUITES_ALL, output_root, run_batch, run_scenario, run_suite
from .scenario import PRESETS, render_scenario, resolve_scenario, with_overrides


def _seeded(spec, seed):
    """Apply the master seed to generators that take one."""
    if seed is None or not hasattr(spec.generator, "seed"):
        return spec
    return replace(spec, generator=replace(spec.generator, seed=seed))


def cmd_run(args) -> int:
    ok = True
    for ref in args.spec:
        spec = _seeded(resolve_scenario(ref), args.seed)
        outdir = output_root() / spec.name
        _, summary = run_scenario(spec, outdir)
        print(summary.render(include_timing=True), end="")
        print(f"outputs: {outdir}")
        ok &= summary.passed
    return 0 if ok else 1


def cmd_verify(args) -> int:
    names = SUITES_ALL if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        report = run_suite(name, seed=args.seed or 0, outdir=output_root() / name,
                           workers=args.workers)
        print(report.render(), end="")
        ok &= report.passed
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    base = _seeded(resolve_scenario(args.spec), args.seed)
    if "=" not in args.param:
        raise SystemExit("--param must look like key=v1,v2,...")
    key, raw = args.param.split("=", 1)
    key = key.strip()
    specs = []
    for i, value in enumerate(v.strip() for v in _split_values(raw)):
        spec = with_overrides(base, {key: value})
        specs.append(replace(spec, name=f"{base.name}.{key}-{i:02d}"))
    root = output_root() / f"{base.name}.sweep-{key}"
    summaries = run_batch(specs, root, workers=args.workers)
    lines = ["case,value,stop_reason,all_pass"]
    ok = True
    for i, (spec, summary) in enumerate(zip(specs, summaries)):
        value = _split_values(raw)[i].strip()
        lines.append(f"{spec.name},{value},{summary.stop_reason},{str(summary.passed).lower()}")
        ok &= summary.passed
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.csv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0 if ok else 1


def _split_values(raw: str):
    """Split on commas that are not inside brackets."""
    parts, depth, current = [], 0, ""
    for ch in raw:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(current)
            current = ""
        else:
            current += ch
    parts.append(current)
    return parts


def cmd_plot(args) -> int:
    from .plots import emit_plots

    traj = Path(args.traj)
    outdir = Path(args.out) if args.out else traj.parent / "plots"
    for path in emit_plots(traj, outdir):
        print(path)
    return 0


def cmd_show(args) -> int:
    print(render_scenario(resolve_scenario(args.spec)), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curveflow", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=None, help="master seed for generators and sweeps")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run scenario files or presets")
    p.add_argument("spec", nargs="+", help=f"scenario file or preset ({', '.join(PRESETS)})")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run an inequality or accuracy suite")
    p.add_argument("suite", choices=list(SUITES_ALL) + ["all"])
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="grid over one scenario key")
    p.add_argument("spec")
    p.add_argument("--param", required=True, help="key=v1,v2,...")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="SVG plots of a trajectory CSV")
    p.add_argument("traj")
    p.add_argument("--out", default=None, help="output directory (default: plots/ beside the CSV)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("show", help="print a scenario with all defaults filled in")
    p.add_argument("spec")
    p.set_defaults(func=cmd_show)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CurveFlowError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

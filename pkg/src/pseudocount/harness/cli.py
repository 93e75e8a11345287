"""Command-line entry point.

    pseudocount run SPEC.json [--out DIR] [--no-plots]
    pseudocount report BASELINE_DIR VARIANT_DIR [--out FILE]
    pseudocount sweep-lr SPEC.json [--out DIR]
    pseudocount compare-pg SPEC.json [--out DIR]
    pseudocount preset NAME [key=value ...] [--out DIR]

Outputs go under ``--out``, the spec's ``output_dir``, or
``$PSEUDOCOUNT_OUTPUT_ROOT/<name>`` (default ``./runs/<name>``). On success a
JSON summary goes to stdout and the exit code is 0; on failure a JSON object
``{"error": ..., "type": ..., "problems": [...]}`` goes to stderr and the
exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pseudocount.errors import SpecError
from pseudocount.harness import runner
from pseudocount.harness.metrics import improvement_report
from pseudocount.harness.presets import PRESETS, preset
from pseudocount.harness.spec import ExperimentSpec

EXIT_SPEC = 2
EXIT_RUNTIME = 1


def _parse_override(text: str):
    if "=" not in text:
        raise SpecError([f"override {text!r}: expected key=value"])
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _load_kind(path, kind) -> ExperimentSpec:
    spec = ExperimentSpec.load(path)
    if spec.kind != kind:
        raise SpecError([f"kind: this command needs a {kind!r} spec, got {spec.kind!r}"])
    return spec


def _agent_summary(results):
    return {str(seed): m.summary() for seed, m in results.items()}


def cmd_run(args):
    spec = ExperimentSpec.load(args.spec)
    out = runner.resolve_output_dir(spec, args.out)
    result = runner.run_spec(spec, out, plots=not args.no_plots)
    if spec.kind == "agent":
        return {"output_dir": str(out), "seeds": _agent_summary(result)}
    if spec.kind == "pg_comparison":
        return {"output_dir": str(out), "stats": result["stats"]}
    return {"output_dir": str(out), "results": result}


def cmd_report(args):
    base = runner.load_summaries(args.baseline)
    var = runner.load_summaries(args.variant)
    report = improvement_report(base, var)
    if args.out:
        runner.write_json(Path(args.out), report)
    return report


def cmd_sweep_lr(args):
    spec = _load_kind(args.spec, "lr_sweep")
    out = runner.resolve_output_dir(spec, args.out)
    return {"output_dir": str(out), "results": runner.lr_schedule_sweep(spec, out, plots=not args.no_plots)}


def cmd_compare_pg(args):
    spec = _load_kind(args.spec, "pg_comparison")
    out = runner.resolve_output_dir(spec, args.out)
    res = runner.pg_comparison(spec, out, plots=not args.no_plots)
    return {"output_dir": str(out), "stats": res["stats"]}


def cmd_preset(args):
    overrides = dict(_parse_override(o) for o in args.overrides)
    specs = [s.with_overrides(overrides) if overrides else s for s in preset(args.name)]
    root = Path(args.out) if args.out else None
    summary = {}
    for spec in specs:
        out = root / spec.name if root else runner.resolve_output_dir(spec)
        result = runner.run_spec(spec, out, plots=not args.no_plots)
        if spec.kind == "agent":
            summary[spec.name] = {"output_dir": str(out), "seeds": _agent_summary(result)}
        elif spec.kind == "pg_comparison":
            summary[spec.name] = {"output_dir": str(out), "stats": result["stats"]}
        else:
            summary[spec.name] = {"output_dir": str(out), "results": result}
    return summary


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pseudocount", description="Pseudo-count exploration experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, spec=True):
        if spec:
            sp.add_argument("spec", help="experiment spec (JSON)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    sp = sub.add_parser("run", help="run any experiment spec")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="AUC improvement of one run directory over another")
    sp.add_argument("baseline")
    sp.add_argument("variant")
    sp.add_argument("--out", help="also write the report to this JSON file")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("sweep-lr", help="PixelCNN learning-rate schedule sweep")
    common(sp)
    sp.set_defaults(func=cmd_sweep_lr)

    sp = sub.add_parser("compare-pg", help="prediction-gain traces of several density models")
    common(sp)
    sp.set_defaults(func=cmd_compare_pg)

    sp = sub.add_parser("preset", help=f"run a named preset: {', '.join(sorted(PRESETS))}")
    sp.add_argument("name", choices=sorted(PRESETS))
    sp.add_argument("overrides", nargs="*", help="dotted key=value overrides (JSON values)")
    common(sp, spec=False)
    sp.set_defaults(func=cmd_preset)
    return p


def _fail(exc, code):
    payload = {"error": str(exc), "type": type(exc).__name__}
    if isinstance(exc, SpecError):
        payload["problems"] = exc.problems
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except SpecError as exc:
        return _fail(exc, EXIT_SPEC)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(exc, EXIT_RUNTIME)
    sys.stdout.write(json.dumps(runner._jsonable(result), indent=2, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``tendon-relax`` command line: run scenarios, validate configs, list scenarios."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from . import report
from .scenarios import build_scenario, run_scenario, scenario_names, summarize

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2

log = logging.getLogger("tendon_relax.cli")


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tendon-relax",
                                description="Muscle relaxation control on a simulated "
                                            "tendon-driven arm.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write CSV traces")
    run.add_argument("scenario")
    run.add_argument("--mrc", choices=("on", "off", "both"), default="both")
    run.add_argument("--seed", type=_seed, default=42)
    run.add_argument("--config", default=None,
                     help=f"config file (default: ${cfgmod.ENV_VAR}, else built-in defaults)")
    run.add_argument("--out", default=".", help="output directory")
    run.add_argument("--no-figures", action="store_true",
                     help="skip the matplotlib PNG rendering")

    val = sub.add_parser("validate", help="check a config file and print the effective values")
    val.add_argument("config")

    sub.add_parser("list-scenarios", help="print the available scenario names")
    return p


def cmd_run(args) -> int:
    try:
        cfg = cfgmod.load(args.config)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.scenario not in scenario_names():
        print(f"config error: unknown scenario {args.scenario!r}; "
              f"choose from {', '.join(scenario_names())}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"config error: cannot create output directory {out}: {exc.strerror}",
              file=sys.stderr)
        return EXIT_CONFIG

    try:
        scenario = build_scenario(args.scenario, args.seed, cfg.model, cfg.scenario)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    labels = {"on": ["on"], "off": ["off"], "both": ["on", "off"]}[args.mrc]
    traces, csv_files = {}, []
    for label in labels:
        tr = run_scenario(scenario, label == "on", cfg.model, cfg.plant, cfg.control)
        path = out / f"{args.scenario}_{label}_{args.seed}.csv"
        report.write_trace_csv(tr, path)
        csv_files.append(path)
        traces[f"mrc {label}"] = tr
        print(f"wrote {path}")
        if tr.error is not None:
            print(f"simulation diverged ({'with' if label == 'on' else 'without'} MRC): "
                  f"{tr.error}", file=sys.stderr)
            return EXIT_DIVERGED

    if args.mrc == "both":
        summary = summarize(traces["mrc on"], traces["mrc off"])
        report.write_summary(summary, out / "summary.txt")
        print(f"wrote {out / 'summary.txt'}")
    n_j, n_m = cfg.model.n_joints, cfg.model.n_muscles
    report.write_plot_script(csv_files, out / "plot.gp", n_j, n_m)
    print(f"wrote {out / 'plot.gp'}")
    if not args.no_figures:
        fig = out / f"{args.scenario}_{args.seed}.png"
        report.render_figure(traces, fig, f"{args.scenario} (seed {args.seed})")
        print(f"wrote {fig}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = cfgmod.load(args.config)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(cfgmod.dumps(cfg))
    return EXIT_OK


def cmd_list(_args) -> int:
    for name in scenario_names():
        print(name)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "list-scenarios": cmd_list}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

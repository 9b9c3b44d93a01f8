"""Command-line front door.

Subcommands map one-to-one to the harness experiments (sweep, ablation,
anytime, weights, pcc) plus figure rendering (plot) and the invariant
battery (selftest).  Each experiment writes its CSV(s) and a JSON sidecar
with the resolved configuration next to them.  Existing outputs are never
overwritten without --force.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import harness, plotting
from .config import ExperimentConfig, load_config


class CliError(RuntimeError):
    pass


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--force", action="store_true", help="overwrite existing outputs")
    parser.add_argument("--jobs", type=int, default=None, help="worker processes (env CDM_LAB_JOBS)")
    parser.add_argument("--arms", type=int, default=None)
    parser.add_argument("--experts", type=int, default=None)
    parser.add_argument("--runs", type=int, default=None)
    parser.add_argument("--t-cdm", type=int, default=None, dest="t_cdm")
    parser.add_argument("--algorithms", default=None, help="comma-separated subset")
    parser.add_argument("--delta-grid", default=None, dest="delta_grid", help="comma-separated distances")
    parser.add_argument("--expert-config", default=None, dest="expert_config",
                        choices=["homogeneous", "heterogeneous", "polarized"])
    parser.add_argument("--confidence", default=None, help="none | hindsight | noisy:<eta>")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdmlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, doc in (
        ("sweep", "scaled reward across the distance grid"),
        ("ablation", "full panel vs top-fraction panel, paired seeds"),
        ("anytime", "per-timestep scaled average reward at one distance"),
        ("weights", "final policy weights vs expert hindsight reward"),
        ("pcc", "scaled distance vs value correlation for random pairs"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_common_flags(p)
        if name == "ablation":
            p.add_argument("--fraction", type=float, default=0.5)
        if name == "anytime":
            p.add_argument("--delta", type=float, default=0.5)
        if name == "weights":
            p.add_argument("--delta", type=float, default=0.5)
        if name == "pcc":
            p.add_argument("--pairs", type=int, default=500)

    plot = sub.add_parser("plot", help="render an SVG figure from result CSVs")
    plot.add_argument("--kind", required=True, choices=plotting.PLOT_KINDS)
    plot.add_argument("csv", nargs="+", help="input CSV file(s)")
    plot.add_argument("--out", required=True, help="output SVG path")
    plot.add_argument("--force", action="store_true")

    sub.add_parser("selftest", help="run the invariant battery on tiny instances")
    return parser


def _resolve_config(args) -> ExperimentConfig:
    overrides: dict = {}
    for field_name, attr in (
        ("arms", "arms"),
        ("experts", "experts"),
        ("runs", "runs"),
        ("t_cdm", "t_cdm"),
        ("expert_config", "expert_config"),
        ("confidence", "confidence"),
        ("master_seed", "seed"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[field_name] = value
    if getattr(args, "algorithms", None):
        overrides["algorithms"] = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    if getattr(args, "delta_grid", None):
        overrides["delta_grid"] = tuple(float(v) for v in args.delta_grid.split(",") if v.strip())
    if args.config:
        return load_config(args.config, overrides)
    return ExperimentConfig(**overrides)


def _resolve_jobs(args) -> int:
    if getattr(args, "jobs", None) is not None:
        return max(1, args.jobs)
    env = os.environ.get("CDM_LAB_JOBS")
    return max(1, int(env)) if env else 1


def _prepare_outputs(out_dir: Path, names: list[str], force: bool) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / n for n in names]
    for p in paths:
        if p.exists() and not force:
            raise CliError(f"refusing to overwrite {p} (use --force)")
    return paths


def _write_sidecar(path: Path, cfg: ExperimentConfig, command: str, extra: dict | None = None) -> None:
    payload = {"command": command, "config": cfg.to_dict()}
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _run_experiment(args) -> int:
    cfg = _resolve_config(args)
    jobs = _resolve_jobs(args)
    out_dir = Path(args.out)
    command = args.command

    if command == "sweep":
        (csv_path, sidecar) = _prepare_outputs(out_dir, ["sweep.csv", "sweep.config.json"], args.force)
        result = harness.run_sweep(cfg, jobs=jobs)
        result.write_csv(csv_path)
        _write_sidecar(sidecar, cfg, command)
        print(f"wrote {csv_path} ({len(result.rows)} rows)")
    elif command == "ablation":
        (csv_path, sidecar) = _prepare_outputs(out_dir, ["ablation.csv", "ablation.config.json"], args.force)
        full, top = harness.run_ablation(cfg, fraction=args.fraction, jobs=jobs)
        harness.write_ablation_csv(csv_path, full, top, args.fraction)
        _write_sidecar(sidecar, cfg, command, {"fraction": args.fraction})
        print(f"wrote {csv_path} ({len(full.rows) + len(top.rows)} rows)")
    elif command == "anytime":
        csv_path, cross_path, sidecar = _prepare_outputs(
            out_dir, ["anytime.csv", "anytime_crossovers.csv", "anytime.config.json"], args.force
        )
        result = harness.run_anytime(cfg, delta=args.delta, jobs=jobs)
        result.write_csv(csv_path)
        result.write_crossovers_csv(cross_path)
        _write_sidecar(sidecar, cfg, command, {"delta": args.delta})
        print(f"wrote {csv_path} and {cross_path}")
    elif command == "weights":
        (csv_path, sidecar) = _prepare_outputs(out_dir, ["weights.csv", "weights.config.json"], args.force)
        result = harness.run_weight_analysis(cfg, delta=args.delta, jobs=jobs)
        result.write_csv(csv_path)
        _write_sidecar(sidecar, cfg, command, {"delta": args.delta})
        print(f"wrote {csv_path} ({len(result.rows)} rows)")
    elif command == "pcc":
        (csv_path, sidecar) = _prepare_outputs(out_dir, ["pcc.csv", "pcc.config.json"], args.force)
        result = harness.run_distance_pcc(cfg, pairs=args.pairs, jobs=jobs)
        result.write_csv(csv_path)
        _write_sidecar(sidecar, cfg, command, {"pairs": args.pairs})
        print(f"wrote {csv_path} ({len(result.rows)} rows)")
    else:  # pragma: no cover
        raise CliError(f"unhandled command {command!r}")
    return 0


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "selftest":
            from .selftest import run_selftest

            failures = run_selftest()
            return 1 if failures else 0
        if args.command == "plot":
            out_path = Path(args.out)
            if out_path.exists() and not args.force:
                raise CliError(f"refusing to overwrite {out_path} (use --force)")
            for p in args.csv:
                if not Path(p).exists():
                    raise CliError(f"input CSV not found: {p}")
            out_path.parent.mkdir(parents=True, exist_ok=True)
            plotting.plot_csv(args.kind, args.csv, out_path)
            print(f"wrote {out_path}")
            return 0
        return _run_experiment(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))

"""Command-line front end.

Exit status: 0 on success with a reversible verdict, 3 when the verdict is
irreversible, 1 on any error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .bayes import hmc_sample
from .config import FitSpec, HmcSpec, PipelineConfig, load_config
from .dynamics import central_differences, smooth
from .errors import ConfigError, HamscopeError
from .hamfit import Domain, PolyHamiltonian, fit
from .ingest import normalize, split_at_event, write_long_csv
from .pipeline import (
    EXIT_ERROR,
    EXIT_IRREVERSIBLE,
    EXIT_OK,
    StageError,
    dump_json,
    embed_windows,
    load_input,
    manifest,
    read_trajectory_csv,
    run_pipeline,
    utc_now,
    versions,
    write_draws_csv,
    write_outputs,
    write_trajectory_csv,
)
from .structcmp import sir
from .synth import true_sir

log = logging.getLogger("hamscope")


def _global_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML/JSON run configuration")
    common.add_argument("--out-dir", type=Path, help="output directory (overrides config)")
    common.add_argument("--seed", type=int, help="seed for t-SNE and HMC (overrides config)")
    common.add_argument("--verbose", "-v", action="count", default=0)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="hamscope", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("pipeline", parents=[common], help="run the full before/after analysis")
    sub.add_parser("synth", parents=[common], help="write a synthetic dataset and its ground truth")
    sub.add_parser("embed", parents=[common], help="write the shared-frame 2D trajectories")

    p = sub.add_parser("fit", parents=[common], help="fit Hamiltonians to an embedded trajectory CSV")
    p.add_argument("--trajectory", type=Path, required=True)

    p = sub.add_parser("sample", parents=[common], help="HMC posterior for one window of a trajectory CSV")
    p.add_argument("--trajectory", type=Path, required=True)
    p.add_argument("--window", default="before")

    p = sub.add_parser("compare", parents=[common], help="compare two Hamiltonian JSON files")
    p.add_argument("h_before", type=Path)
    p.add_argument("h_after", type=Path)
    p.add_argument("--z1-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--z2-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--grid-resolution", type=int, default=101)
    p.add_argument("--mode", choices=("paper_literal", "dimensionless"), default="paper_literal")
    p.add_argument("--threshold", type=float, default=0.07)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--force-frame", action="store_true", help="compare across embedding frames")
    return parser


def _config(args: argparse.Namespace) -> PipelineConfig:
    if args.config is None:
        raise ConfigError("--config", "this command needs a configuration file")
    cfg = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out_dir is not None:
        updates["output_dir"] = str(args.out_dir)
    return cfg.model_copy(update=updates) if updates else cfg


def _out_dir(args: argparse.Namespace, cfg: PipelineConfig | None = None) -> Path:
    out = args.out_dir or Path(cfg.output_dir if cfg else ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _config(args)
    result = run_pipeline(cfg)
    path = write_outputs(result, cfg.output_dir)
    log.info("wrote %s", path)
    print(json.dumps({k: result.report()[k] for k in ("sir", "verdict", "mode", "threshold")}))
    return result.exit_code


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _config(args)
    if cfg.input.synth is None:
        raise ConfigError("input.synth", "synth command needs a synthetic scenario pair")
    data, event, pair = load_input(cfg)
    out = _out_dir(args, cfg)
    write_long_csv(data, out / "dataset.csv")
    truth = {
        "event_time": event,
        "dt": pair.before.dt,
        "h_before": pair.before.h_true.to_dict(),
        "h_after": pair.after.h_true.to_dict(),
        "true_sir": true_sir(pair, cfg.comparison.mode, cfg.comparison.threshold),
        "mode": cfg.comparison.mode,
        "domain": pair.true_domain().to_dict(),
        "manifest": manifest(cfg, "synth"),
    }
    dump_json(truth, out / "ground_truth.json")
    print(json.dumps({"dataset": str(out / "dataset.csv"), "true_sir": truth["true_sir"]}))
    return EXIT_OK


def cmd_embed(args: argparse.Namespace) -> int:
    cfg = _config(args)
    data, event, _ = load_input(cfg)
    split = split_at_event(data, event)
    nb, stats = normalize(split.before, cfg.normalization)
    na, _ = normalize(split.after, cfg.normalization, stats)
    zb, za, ratio = embed_windows(nb, na, cfg)
    zb, za = smooth(zb, cfg.smoothing.window), smooth(za, cfg.smoothing.window)
    out = _out_dir(args, cfg)
    write_trajectory_csv(out / "trajectory.csv", zb, za)
    dump_json(
        {"frame_id": zb.frame_id, "method": cfg.embedding.method, "explained_variance_ratio": ratio},
        out / "embedding.json",
    )
    return EXIT_OK


def _frame_of(path: Path) -> str:
    return "traj-" + hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def cmd_fit(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else None
    fit_cfg = (cfg.fit if cfg else FitSpec()).build()
    trajs = read_trajectory_csv(args.trajectory)
    frame = _frame_of(args.trajectory)
    states = [z.states for z in trajs.values()]
    dom_spec = cfg.domain if cfg else None
    dom = Domain.bounding(*states, padding=dom_spec.padding if dom_spec else 0.1)
    out = _out_dir(args, cfg)
    for label, z in trajs.items():
        report = fit(central_differences(z), fit_cfg, dom)
        h = replace(report.hamiltonian, frame_id=frame)
        dump_json(h.to_dict(), out / f"hamiltonian_{label}.json")
        summary = report.to_dict()
        summary["hamiltonian"] = h.to_dict()
        dump_json(summary, out / f"fit_{label}.json")
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else None
    hmc = cfg.hmc if cfg else HmcSpec()
    max_degree = cfg.fit.max_degree if cfg else 2
    trajs = read_trajectory_csv(args.trajectory)
    if args.window not in trajs:
        raise ConfigError("--window", f"no window {args.window!r} in {sorted(trajs)}")
    vt = central_differences(trajs[args.window])
    seed = args.seed if args.seed is not None else (cfg.seed if cfg and cfg.seed is not None else None)
    post = hmc_sample(vt, hmc.prior_sigma, hmc.noise_sigma, hmc.build(seed), max_degree)
    out = _out_dir(args, cfg)
    dump_json(post.to_dict(), out / f"posterior_{args.window}.json")
    write_draws_csv(out / f"draws_{args.window}.csv", post)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    hb = PolyHamiltonian.from_json(args.h_before.read_text())
    ha = PolyHamiltonian.from_json(args.h_after.read_text())
    base = hb.domain or Domain((-1.0, 1.0), (-1.0, 1.0))
    dom = Domain(
        tuple(args.z1_range) if args.z1_range else base.z1_range,
        tuple(args.z2_range) if args.z2_range else base.z2_range,
        args.grid_resolution,
    )
    if ha.gauge != hb.gauge:
        ha = replace(ha, gauge=hb.gauge)
    rep = sir(hb, ha, dom, args.mode, args.threshold, args.tau, allow_frame_mismatch=args.force_frame)
    out = rep.to_dict()
    out.update(
        convergence_improvement_before=None,
        convergence_improvement_after=None,
        manifest={
            "command": "compare",
            "config_sha256": None,
            "seeds": {},
            "versions": versions(),
            "timestamp": utc_now(),
        },
    )
    print(json.dumps(out, indent=2, sort_keys=True))
    if args.out_dir:
        rep.diff_grid.write_csv(_out_dir(args) / "diff_grid.csv")
    return EXIT_IRREVERSIBLE if rep.verdict == "irreversible" else EXIT_OK


COMMANDS = {
    "pipeline": cmd_pipeline,
    "synth": cmd_synth,
    "embed": cmd_embed,
    "fit": cmd_fit,
    "sample": cmd_sample,
    "compare": cmd_compare,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (HamscopeError, ValueError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

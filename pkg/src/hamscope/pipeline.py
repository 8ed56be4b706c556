"""End-to-end run: ingest, split, normalize, embed, differentiate, fit, compare."""

from __future__ import annotations

import csv
import json
import logging
import platform
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .bayes import Posterior, hmc_sample
from .config import PipelineConfig
from .dynamics import VelocityTrajectory, central_differences, smooth
from .embed import StateTrajectory, embed_joint, fit_pca, project
from .errors import ConfigError, DimensionMismatch, HamscopeError, PerplexityTooLarge
from .hamfit import Domain, FitReport, fit, monomials
from .ingest import (
    EventSplit,
    TimeSeriesMatrix,
    load_long_csv,
    load_wide_csv,
    normalize,
    parse_timestamp,
    split_at_event,
)
from .structcmp import ComparisonReport, fixed_point_analysis, sir
from .synth import SynthPair, make_event_pair

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_IRREVERSIBLE = 3


class StageError(HamscopeError):
    def __init__(self, stage: str, cause: Exception) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")


class _stage:
    """Context manager tagging exceptions with the pipeline stage name."""

    def __init__(self, name: str) -> None:
        self.name = name

    def __enter__(self) -> None:
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc is None or isinstance(exc, (ConfigError, StageError)):
            return False
        if isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


@dataclass
class PipelineResult:
    config: PipelineConfig
    split: EventSplit
    trajectories: tuple[StateTrajectory, StateTrajectory]
    velocities: tuple[VelocityTrajectory, VelocityTrajectory]
    domain: Domain
    fits: tuple[FitReport, FitReport]
    comparison: ComparisonReport
    posteriors: tuple[Posterior, Posterior] | None = None
    synth: SynthPair | None = None
    explained_variance_ratio: list[float] = field(default_factory=list)
    manifest: dict[str, Any] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_IRREVERSIBLE if self.comparison.verdict == "irreversible" else EXIT_OK

    def report(self) -> dict[str, Any]:
        out = self.comparison.to_dict()
        fb, fa = self.fits
        out.update(
            convergence_improvement_before=fb.convergence_improvement,
            convergence_improvement_after=fa.convergence_improvement,
            frame_id=fb.hamiltonian.frame_id,
            time_unit="seconds",
            embedding=self.config.embedding.method,
            explained_variance_ratio=self.explained_variance_ratio,
            window_lengths=[self.split.before.n_times, self.split.after.n_times],
            fit_before=_fit_summary(fb),
            fit_after=_fit_summary(fa),
            critical_points_before=[c.to_dict() for c in fixed_point_analysis(fb.hamiltonian, self.domain)],
            critical_points_after=[c.to_dict() for c in fixed_point_analysis(fa.hamiltonian, self.domain)],
            manifest=self.manifest,
        )
        if self.posteriors is not None:
            out["posterior_acceptance"] = [p.acceptance_rate for p in self.posteriors]
        return out


def _fit_summary(r: FitReport) -> dict[str, Any]:
    d = r.to_dict()
    d.pop("hamiltonian")
    return d


def versions() -> dict[str, str]:
    return {"hamscope": __version__, "numpy": np.__version__, "python": platform.python_version()}


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def manifest(cfg: PipelineConfig, command: str) -> dict[str, Any]:
    """Everything needed to reproduce a run; only ``timestamp`` varies between reruns."""
    return {
        "command": command,
        "config_sha256": cfg.digest(),
        "seeds": {"embedding": _tsne_seed(cfg), "hmc": _hmc_seed(cfg)},
        "versions": versions(),
        "timestamp": utc_now(),
    }


def _tsne_seed(cfg: PipelineConfig) -> int:
    return cfg.embedding.seed if cfg.seed is None else cfg.seed


def _hmc_seed(cfg: PipelineConfig) -> int:
    return cfg.hmc.seed if cfg.seed is None else cfg.seed


# -- stages -------------------------------------------------------------------


def load_input(cfg: PipelineConfig) -> tuple[TimeSeriesMatrix, float, SynthPair | None]:
    """Observation matrix, event time (epoch seconds) and the synthetic pair if any."""
    if cfg.input.synth is not None:
        pair = make_event_pair(cfg.input.synth.before.build(), cfg.input.synth.after.build())
        data = pair.dataset()
        event = pair.split.event_time if cfg.event_time is None else _event(cfg.event_time)
        return data, event, pair
    loader = load_long_csv if cfg.input.format == "long" else load_wide_csv
    return loader(cfg.input.path), _event(cfg.event_time), None


def _event(value: float | str) -> float:
    if isinstance(value, str):
        try:
            return parse_timestamp(value, numeric=False)
        except ValueError as exc:
            raise ConfigError("event_time", str(exc)) from None
    return float(value)


def embed_windows(
    before: TimeSeriesMatrix, after: TimeSeriesMatrix, cfg: PipelineConfig
) -> tuple[StateTrajectory, StateTrajectory, list[float]]:
    """Put both windows into one shared 2D frame."""
    method = cfg.embedding.method
    if method == "identity":
        if before.n_segments != 2:
            raise DimensionMismatch(f"identity embedding needs 2 series, got {before.n_segments}")
        frame = "identity"
        zb = StateTrajectory(before.values.T, before.dt, "identity", "before", frame, before.timestamps[0])
        za = StateTrajectory(after.values.T, after.dt, "identity", "after", frame, after.timestamps[0])
        return zb, za, []
    joint = TimeSeriesMatrix(
        np.hstack([before.values, after.values]),
        before.segment_ids,
        np.concatenate([before.timestamps, after.timestamps]),
    )
    d_pca = 2 if method == "pca_only" else cfg.pca.d_pca
    limit = min(joint.n_segments, joint.n_times)
    if d_pca > limit:
        raise ConfigError("pca.d_pca", f"{d_pca} exceeds min(N, T) = {limit}")
    model = fit_pca(joint, d_pca)
    ratio = [float(v) for v in model.explained_variance_ratio]
    zb, za = project(model, before, "before"), project(model, after, "after")
    if method == "pca_only":
        if zb.dim < 2:
            raise DimensionMismatch("data has rank < 2; cannot form a planar state")
        return zb, za, ratio
    tsne_cfg = cfg.embedding.tsne(_tsne_seed(cfg))
    try:
        tsne_cfg.check(len(zb) + len(za))
    except PerplexityTooLarge as exc:
        raise ConfigError("embedding.perplexity", str(exc)) from None
    zb, za = embed_joint(zb, za, tsne_cfg)
    return zb, za, ratio


def resolve_domain(cfg: PipelineConfig, zb: StateTrajectory, za: StateTrajectory) -> Domain:
    spec = cfg.domain
    auto = Domain.bounding(zb.states, za.states, padding=spec.padding, grid_resolution=spec.grid_resolution)
    return Domain(
        spec.z1_range or auto.z1_range,
        spec.z2_range or auto.z2_range,
        spec.grid_resolution,
    )


def run_pipeline(cfg: PipelineConfig, command: str = "pipeline") -> PipelineResult:
    with _stage("ingest"):
        data, event, pair = load_input(cfg)
    with _stage("split"):
        split = split_at_event(data, event)
    with _stage("normalize"):
        nb, stats = normalize(split.before, cfg.normalization)
        na, _ = normalize(split.after, cfg.normalization, stats)
    with _stage("embed"):
        zb, za, ratio = embed_windows(nb, na, cfg)
    with _stage("smooth"):
        zb = smooth(zb, cfg.smoothing.window)
        za = smooth(za, cfg.smoothing.window)
    with _stage("differentiate"):
        vb, va = central_differences(zb), central_differences(za)
    dom = resolve_domain(cfg, zb, za)
    fit_cfg = cfg.fit.build()
    with _stage("fit"):
        fb = fit(vb, fit_cfg, dom)
        fa = fit(va, fit_cfg, dom)
        fb.hamiltonian = replace(fb.hamiltonian, frame_id=zb.frame_id)
        fa.hamiltonian = replace(fa.hamiltonian, frame_id=za.frame_id)
    posteriors = None
    if cfg.hmc.enabled:
        with _stage("sample"):
            hcfg = cfg.hmc.build(_hmc_seed(cfg))
            posteriors = tuple(
                hmc_sample(v, cfg.hmc.prior_sigma, cfg.hmc.noise_sigma, hcfg, fit_cfg.max_degree)
                for v in (vb, va)
            )
    with _stage("compare"):
        comp = sir(
            fb.hamiltonian, fa.hamiltonian, dom,
            cfg.comparison.mode, cfg.comparison.threshold, cfg.comparison.tau,
        )
    return PipelineResult(
        cfg, split, (zb, za), (vb, va), dom, (fb, fa), comp, posteriors, pair, ratio,
        manifest(cfg, command),
    )


# -- output files ---------------------------------------------------------------


def dump_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_trajectory_csv(path: str | Path, *trajectories: StateTrajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "z1", "z2", "window"))
        for z in trajectories:
            for t, row in zip(z.times, z.states):
                w.writerow((repr(float(t)), repr(float(row[0])), repr(float(row[1])), z.window_label or ""))


def read_trajectory_csv(path: str | Path) -> dict[str, StateTrajectory]:
    """Trajectories keyed by window label, as written by :func:`write_trajectory_csv`."""
    rows: dict[str, list[tuple[float, float, float]]] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["window"], []).append((float(rec["t"]), float(rec["z1"]), float(rec["z2"])))
    out = {}
    for label, recs in rows.items():
        arr = np.array(recs)
        dt = float(np.mean(np.diff(arr[:, 0]))) if len(arr) > 1 else 1.0
        out[label] = StateTrajectory(arr[:, 1:], dt, "pca_tsne", label or None, None, float(arr[0, 0]))
    return out


def write_velocity_csv(path: str | Path, vt: VelocityTrajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "z1", "z2", "v1", "v2"))
        for t, s, v in zip(vt.times, vt.states, vt.velocities):
            w.writerow([repr(float(x)) for x in (t, s[0], s[1], v[0], v[1])])


def write_draws_csv(path: str | Path, p: Posterior) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"h_{i}{j}" for i, j in monomials(p.max_degree, False)])
        for row in p.samples:
            w.writerow([repr(float(v)) for v in row])


def report_schema() -> dict[str, Any]:
    return json.loads(resources.files("hamscope").joinpath("report.schema.json").read_text())


def write_outputs(result: PipelineResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fb, fa = result.fits
    dump_json(result.report(), out / "report.json")
    dump_json(fb.hamiltonian.to_dict(), out / "hamiltonian_before.json")
    dump_json(fa.hamiltonian.to_dict(), out / "hamiltonian_after.json")
    result.comparison.diff_grid.write_csv(out / "diff_grid.csv")
    write_trajectory_csv(out / "trajectory.csv", *result.trajectories)
    for label, vt in zip(("before", "after"), result.velocities):
        write_velocity_csv(out / f"velocities_{label}.csv", vt)
    if result.posteriors is not None:
        for label, p in zip(("before", "after"), result.posteriors):
            dump_json(p.to_dict(), out / f"posterior_{label}.json")
            write_draws_csv(out / f"draws_{label}.csv", p)
    return out / "report.json"

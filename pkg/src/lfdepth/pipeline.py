"""End-to-end pipeline: load -> (align) -> initial EPI depth -> TV refinement -> evaluation."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .alignment import AlignParams, align_array, load_correspondence_dir, match_corners
from .epi import EPIParams, estimate_initial_disparity
from .lightfield import DisparityField, LightField4D, ViewLayout, load_lightfield, to_grayscale
from .metrics import DEFAULT_TAU, evaluate, format_table, read_mask, threshold_curve, write_metrics_csv
from .pfm import read_pfm, write_pfm, write_pfm_array
from .tv.refine import RefineParams, refine_disparity
from .visualize import (badpix_visualization, convergence_plot, difficulty_heatmap, disparity_image,
                        median_error_map, save_png, signed_error_visualization, write_trace_csv)

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


class StageError(RuntimeError):
    """A pipeline stage failed; ``cause`` keeps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    scene_dir: Path
    output_dir: Path
    align: bool = False
    align_params: AlignParams = AlignParams()
    corr_dir: Path | None = None
    epi: EPIParams = EPIParams()
    tv: RefineParams = RefineParams()
    taus: tuple = (DEFAULT_TAU, 0.03)
    gt_path: Path | None = None
    mask_path: Path | None = None
    layout: ViewLayout = ViewLayout()
    config_path: Path | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.taus or any(not t > 0 for t in self.taus):
            raise ValueError("taus must be a non-empty list of positive thresholds")


@dataclass
class RunReport:
    stage_seconds: dict = field(default_factory=dict)
    total_seconds: float = 0.0
    metrics: dict | None = None
    initial_metrics: dict | None = None
    trace_path: str | None = None
    artifacts: dict = field(default_factory=dict)
    iterations_run: int = 0
    final_residual: float | None = None
    alignment_error_trace: list | None = None

    def to_json(self) -> str:
        doc = {"schema_version": REPORT_SCHEMA_VERSION, **asdict(self)}
        return json.dumps(doc, indent=2, sort_keys=True)


class _Timer:
    def __init__(self, report: RunReport):
        self.report = report

    def run(self, stage: str, fn, *args, **kwargs):
        t0 = time.monotonic()
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except Exception as e:  # noqa: BLE001 - re-raised with the stage attached
            raise StageError(stage, e) from e
        finally:
            self.report.stage_seconds[stage] = round(time.monotonic() - t0, 3)


def reference_guide(lf: LightField4D, center: tuple[int, int]) -> np.ndarray:
    """Grayscale reference view used as the refinement guide."""
    return to_grayscale(lf).samples[center[0], center[1], :, :, 0]


def as_stored(field_: DisparityField) -> DisparityField:
    """The field as it reads back from PFM files (``float32`` values)."""
    d = field_.disparity.astype(np.float32)
    c = field_.confidence.astype(np.float32)
    return DisparityField(d, confidence=c.astype(float), valid_mask=field_.valid_mask)


def write_initial(out_dir: Path, initial: DisparityField) -> dict:
    paths = {"initial_pfm": out_dir / "initial.pfm", "confidence_pfm": out_dir / "confidence.pfm"}
    write_pfm(initial, paths["initial_pfm"])
    write_pfm_array(paths["confidence_pfm"], initial.confidence)
    return {k: str(v) for k, v in paths.items()}


def read_initial(initial_pfm, confidence_pfm=None, coherence_min: float = EPIParams().coherence_min):
    d = read_pfm(initial_pfm).disparity
    if confidence_pfm is None:
        conf = np.ones(d.shape)
    else:
        conf = np.clip(read_pfm(confidence_pfm).disparity.astype(float), 0.0, 1.0)
        if conf.shape != d.shape:
            raise ValueError("confidence map shape does not match the disparity map")
    valid = np.isfinite(d) & (conf >= coherence_min)
    return DisparityField(d, confidence=conf, valid_mask=valid)


def write_refined(out_dir: Path, refined: DisparityField, trace) -> dict:
    paths = {"refined_pfm": out_dir / "refined.pfm", "trace_csv": out_dir / "trace.csv"}
    write_pfm(refined, paths["refined_pfm"])
    write_trace_csv(paths["trace_csv"], trace.as_rows())
    return {k: str(v) for k, v in paths.items()}


def evaluate_to_dir(out_dir: Path, estimate, gt, mask, taus, prefix: str = "") -> tuple[dict, dict]:
    report = evaluate(estimate, gt, mask, tau=taus[0], extra_taus=taus[1:])
    paths = {f"{prefix}metrics_csv": out_dir / f"{prefix}metrics.csv",
             f"{prefix}badpix_png": out_dir / f"{prefix}badpix.png",
             f"{prefix}signed_error_png": out_dir / f"{prefix}signed_error.png"}
    write_metrics_csv(paths[f"{prefix}metrics_csv"], report)
    save_png(paths[f"{prefix}badpix_png"], badpix_visualization(estimate, gt, mask, taus[0]))
    save_png(paths[f"{prefix}signed_error_png"], signed_error_visualization(estimate, gt))
    return report.as_dict(), {k: str(v) for k, v in paths.items()}


def correspondences_for(lf: LightField4D, center, corr_dir: Path | None) -> dict:
    if corr_dir is not None:
        return load_correspondence_dir(corr_dir, lf.views_u, lf.views_v)
    gray = to_grayscale(lf).samples
    ref = gray[center[0], center[1], :, :, 0]
    return {(v, u): match_corners(ref, gray[v, u, :, :, 0])
            for v in range(lf.views_v) for u in range(lf.views_u) if (v, u) != tuple(center)}


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Run every stage and write its artifacts into ``config.output_dir``."""
    report = RunReport()
    timer = _Timer(report)
    t_start = time.monotonic()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    lf, cam = timer.run("load", load_lightfield, config.scene_dir, config.layout, config.config_path)
    center = cam.resolved_center(lf)

    if config.align:
        def _align():
            corrs = correspondences_for(lf, center, config.corr_dir)
            return align_array(lf, corrs, config.align_params, reference=center)
        aligned = timer.run("align", _align)
        lf = aligned.lightfield
        report.alignment_error_trace = [float(e) for e in aligned.error_trace]

    def _depth():
        initial = as_stored(estimate_initial_disparity(to_grayscale(lf), config.epi, cam))
        return initial, write_initial(out, initial)
    initial, paths = timer.run("depth", _depth)
    report.artifacts.update(paths)
    guide = reference_guide(lf, center)

    def _refine():
        refined, trace = refine_disparity(initial, guide, config.tv)
        return refined, trace, write_refined(out, refined, trace)
    refined, trace, paths = timer.run("refine", _refine)
    report.artifacts.update(paths)
    report.trace_path = paths["trace_csv"]
    report.iterations_run = trace.iterations_run
    report.final_residual = trace.residual_norms[-1] if trace.residual_norms else None

    def _visualize():
        arts = {}
        if trace.residual_norms:
            arts["convergence_png"] = out / "convergence.png"
            convergence_plot(report.trace_path, arts["convergence_png"], max_iter=config.tv.max_iter)
        lo = np.nanmin(initial.disparity)
        hi = np.nanmax(initial.disparity)
        arts["initial_png"] = out / "initial.png"
        arts["refined_png"] = out / "refined.png"
        save_png(arts["initial_png"], disparity_image(initial, lo, hi))
        save_png(arts["refined_png"], disparity_image(refined, lo, hi))
        return {k: str(v) for k, v in arts.items()}
    report.artifacts.update(timer.run("visualize", _visualize))

    if config.gt_path is not None:
        def _eval():
            gt = read_pfm(config.gt_path).disparity
            mask = None if config.mask_path is None else read_mask(config.mask_path)
            m_ref, p_ref = evaluate_to_dir(out, refined, gt, mask, config.taus)
            m_init, p_init = evaluate_to_dir(out, initial, gt, mask, config.taus, prefix="initial_")
            return m_ref, m_init, {**p_ref, **p_init}
        report.metrics, report.initial_metrics, paths = timer.run("eval", _eval)
        report.artifacts.update(paths)

    report.total_seconds = round(time.monotonic() - t_start, 3)
    return report


# ---------------------------------------------------------------- comparison harness

@dataclass
class ComparisonReport:
    table: str
    metrics: dict                   # label -> metric dict
    artifacts: dict


def compare_runs(pfm_paths, labels, gt_path, out_dir, mask_path=None,
                 tau: float = DEFAULT_TAU) -> ComparisonReport:
    """Metric table for several disparity maps plus difficulty and median-error images."""
    if len(pfm_paths) != len(labels) or not labels:
        raise ValueError("need one label per input map and at least one input")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gt = read_pfm(gt_path).disparity
    mask = None if mask_path is None else read_mask(mask_path)
    reports, errors, bad = {}, [], []
    for path, label in zip(pfm_paths, labels):
        est = read_pfm(path).disparity
        rep = evaluate(est, gt, mask, tau=tau)
        reports[label] = rep
        errors.append(np.nan_to_num(rep.pixel_abs_error, nan=0.0, posinf=1e6))
        m = np.ones(gt.shape, dtype=bool) if mask is None else mask
        bad.append(m & (rep.pixel_abs_error > tau))
    table = format_table(reports)
    arts = {"table_txt": out / "comparison.txt", "difficulty_png": out / "difficulty.png"}
    arts["table_txt"].write_text(table + "\n")
    save_png(arts["difficulty_png"], difficulty_heatmap(bad))
    if len(errors) >= 2:
        for i, label in enumerate(labels):
            _, rgb = median_error_map(errors, i)
            key = f"median_error_{i}_png"
            arts[key] = out / f"median_error_{i}.png"
            save_png(arts[key], rgb)
    return ComparisonReport(table, {k: r.as_dict() for k, r in reports.items()},
                            {k: str(v) for k, v in arts.items()})


def accuracy_curves(estimates: dict, gt, mask=None, taus=(0.01, 0.03, 0.05, 0.07, 0.1, 0.2, 0.5)):
    """Per-label threshold curves for plotting."""
    return {label: threshold_curve(est, gt, mask, taus) for label, est in estimates.items()}

"""
Experiment commands: each renders the configured scene, runs one analysis and
writes its artifacts under the output directory. Every command returns a
``success_response`` dictionary; errors propagate as ServiceError subclasses.
"""

import logging
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .camera_service import disparity_to_depth, reproject_coords, stereo_coords
from .config_service import camera_pose, init_seed, texture_seed
from .csv_service import (loss_history_frame, profile_frame, report_frame, summarize_frame,
                          write_frame)
from .exceptions import ContractViolationError
from .file_service import overlay, read_pfm, write_pfm, write_pgm, write_ppm
from .metrics_service import MetricSet, compute_metrics, metrics_table
from .optimizer_service import FatteningReport, run
from .scene_service import StereoPair, band_width, landscape_summary, photometric_profile, profile_argmin, render_scene
from .schemas import ExperimentConfig, LossMode, NegativeMode, success_response
from .validators import resolve_output_path

logger = logging.getLogger(__name__)

SWEEP_KINDS = ("margin", "ablation", "triplet-weight")
MATCH_TOLERANCE = 0.5


# ============================================================================
# HELPERS
# ============================================================================

def _output_dir(config: ExperimentConfig, out_dir: Optional[str]) -> Path:
    path = Path(out_dir if out_dir is not None else config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _render(config: ExperimentConfig) -> StereoPair:
    return render_scene(config.scene, texture_seed=texture_seed(config))


def _label_scale(labels: np.ndarray) -> int:
    return max(255 // max(int(labels.max()), 1), 1)


def _scene_metrics(config: ExperimentConfig, pair: StereoPair, disparity: np.ndarray) -> MetricSet:
    gt_depth = disparity_to_depth(pair.gt_disparity, config.rig)
    pred_depth = disparity_to_depth(disparity, config.rig)
    return compute_metrics(pred_depth, gt_depth, cap=config.metrics.cap,
                           median_scale=config.metrics.median_scale, min_depth=config.metrics.min_depth)


def _pose_gap(config: ExperimentConfig, pair: StereoPair) -> float:
    """Largest gap between pose reprojection of the ground truth and the rectified ``x - d`` shortcut."""
    gt_depth = disparity_to_depth(pair.gt_disparity, config.rig)
    coords, invalid = reproject_coords(gt_depth, camera_pose(config), config.rig.intrinsics)
    shortcut = stereo_coords(pair.gt_disparity)
    valid = ~invalid
    if not valid.any():
        return float("inf")
    gap = np.maximum(np.abs(coords.x - shortcut.x), np.abs(coords.y - shortcut.y))
    return float(gap[valid].max())


def _run_row(name: str, report: FatteningReport, metrics: MetricSet, final_total: float, **params) -> dict:
    return {"run": name, **params, **report.as_row(), "final_total": final_total, **metrics.as_row()}


# ============================================================================
# SYNTH
# ============================================================================

def cmd_synth(config: ExperimentConfig, out_dir: Optional[str] = None):
    """Render the scene and write both views, ground truth, labels, masks and an overlay."""
    out = _output_dir(config, out_dir)
    pair = _render(config)

    files = {
        "left.pgm": lambda p: write_pgm(p, pair.left),
        "right.pgm": lambda p: write_pgm(p, pair.right),
        "gt_disparity.pfm": lambda p: write_pfm(p, pair.gt_disparity),
        "labels.pgm": lambda p: write_pgm(p, pair.labels, scale=_label_scale(pair.labels)),
        "occlusion.pgm": lambda p: write_pgm(p, pair.occlusion_mask, scale=255),
        "outside.pgm": lambda p: write_pgm(p, pair.outside_mask, scale=255),
        "overlay.ppm": lambda p: write_ppm(p, overlay(pair.left, pair.occlusion_mask, pair.labels)),
    }
    for name, writer in files.items():
        writer(resolve_output_path(out, name))

    width = band_width(pair)
    pose_gap = _pose_gap(config, pair)
    if pose_gap > 1e-6:
        logger.warning("pose reprojection differs from the rectified shift by up to %.3g px", pose_gap)
    logger.info("synth: band width %d px, files in %s", width, out)
    return success_response({
        "output_dir": str(out),
        "files": list(files),
        "band_width": width,
        "occluded_pixels": int(pair.occlusion_mask.sum()),
        "d_bg": pair.d_bg,
        "d_fg": pair.d_fg,
        "pose_gap_px": pose_gap,
    })


# ============================================================================
# PROFILE
# ============================================================================

def cmd_profile(config: ExperimentConfig, pixel_xy: Tuple[int, int], out_dir: Optional[str] = None,
                landscape: bool = False):
    """Write the photometric error curve of one left pixel and flag whether its argmin is the truth."""
    out = _output_dir(config, out_dir)
    pair = _render(config)
    x, y = pixel_xy
    cfg = config.profile
    d_range = (cfg.d_lo, cfg.d_hi)

    profile = photometric_profile(pair, (y, x), d_range, cfg.step, config.photometric)
    name = f"profile_x{x}_y{y}.csv"
    write_frame(profile_frame(profile), resolve_output_path(out, name))

    argmin = profile_argmin(profile)
    gt = float(pair.gt_disparity[y, x])
    match = abs(argmin - gt) <= MATCH_TOLERANCE
    data = {
        "output_dir": str(out),
        "files": [name],
        "pixel": [x, y],
        "occluded": bool(pair.occlusion_mask[y, x]),
        "argmin": argmin,
        "gt": gt,
        "flag": "MATCH" if match else "MISMATCH",
    }

    if landscape:
        summary = landscape_summary(pair, d_range, cfg.step, config.photometric)
        write_frame(report_frame([asdict(summary)]), resolve_output_path(out, "landscape.csv"))
        data["files"].append("landscape.csv")
        data["landscape"] = asdict(summary)

    logger.info("profile (%d, %d): argmin %g, gt %g, %s", x, y, argmin, gt, data["flag"])
    return success_response(data)


# ============================================================================
# OPTIMIZE
# ============================================================================

def cmd_optimize(config: ExperimentConfig, out_dir: Optional[str] = None,
                 snapshot_every: Optional[int] = None):
    """Run the direct optimizer and write the loss history, snapshots, fattening report and metrics."""
    out = _output_dir(config, out_dir)
    if snapshot_every is not None:
        config = config.with_losses(snapshot_every=snapshot_every)
    pair = _render(config)
    files: List[str] = []

    def snapshot(step: int, disparity: np.ndarray):
        name = f"disparity_{step}.pfm"
        write_pfm(resolve_output_path(out, name), disparity)
        files.append(name)

    state, report = run(pair, config.opt, seed=init_seed(config), on_snapshot=snapshot)
    write_pfm(resolve_output_path(out, "disparity_final.pfm"), state.disparity)
    files.append("disparity_final.pfm")

    metrics = _scene_metrics(config, pair, state.disparity)
    outputs = {
        "loss_history.csv": loss_history_frame(state.loss_history),
        "fattening.csv": report_frame([report.as_row()]),
        "metrics.csv": metrics_table([metrics]),
    }
    for name, frame in outputs.items():
        write_frame(frame, resolve_output_path(out, name))
        files.append(name)

    logger.info("optimize: fattened fraction %.4f, files in %s", report.fattened_fraction, out)
    return success_response({
        "output_dir": str(out),
        "files": files,
        "steps": state.step_index,
        "final_loss": state.loss_history[-1].total,
        "fattening": report.as_row(),
        "metrics": metrics.as_row(),
    })


# ============================================================================
# METRICS
# ============================================================================

def cmd_metrics(config: ExperimentConfig, predictions: Sequence[str], out_dir: Optional[str] = None):
    """Score disparity PFMs against the scene's ground truth, in depth."""
    if not predictions:
        raise ContractViolationError("Give at least one disparity PFM to evaluate")
    out = _output_dir(config, out_dir)
    pair = _render(config)

    metric_sets = []
    for path in predictions:
        disparity = read_pfm(path)
        if disparity.shape != pair.shape:
            raise ContractViolationError(f"{path}: {disparity.shape} does not match the scene {pair.shape}")
        metric_sets.append(_scene_metrics(config, pair, disparity))

    table = metrics_table(metric_sets)
    write_frame(table, resolve_output_path(out, "metrics.csv"))
    return success_response({
        "output_dir": str(out),
        "files": ["metrics.csv"],
        "images": [str(p) for p in predictions],
        "table": summarize_frame(table),
    })


# ============================================================================
# SWEEPS
# ============================================================================

def _margin_runs(config: ExperimentConfig):
    for margin in config.sweep.margins:
        triplet = config.triplet.model_copy(update={"margin_m_prime": margin})
        yield f"m'={margin:g}", config.with_losses(triplet=triplet), {"margin_m_prime": margin}


def _ablation_runs(config: ExperimentConfig):
    base = config.triplet
    grid = [
        ("baseline", LossMode.BASELINE, NegativeMode.MEAN, base.margin_m),
        ("+min", LossMode.BASELINE, NegativeMode.MIN, base.margin_m_prime),
        ("+isolated", LossMode.ISOLATED, NegativeMode.MEAN, base.margin_m),
        ("+both", LossMode.ISOLATED, NegativeMode.MIN, base.margin_m),
    ]
    for name, loss_mode, negative_mode, margin in grid:
        triplet = base.model_copy(update={"loss_mode": loss_mode, "negative_mode": negative_mode,
                                          "margin_m": margin})
        yield name, config.with_losses(triplet=triplet), {
            "loss_mode": loss_mode.value, "negative_mode": negative_mode.value, "margin_m": margin}


def _weight_runs(config: ExperimentConfig):
    for weight in (0.0, config.opt.lambda_triplet):
        yield f"lambda_t={weight:g}", config.with_losses(lambda_triplet=weight), {"lambda_triplet": weight}


def cmd_sweep(config: ExperimentConfig, kind: str, out_dir: Optional[str] = None):
    """One optimization per variant; one CSV row per run with its fattening report and metrics."""
    runs = {"margin": _margin_runs, "ablation": _ablation_runs, "triplet-weight": _weight_runs}.get(kind)
    if runs is None:
        raise ContractViolationError(f"Unknown sweep kind '{kind}', expected one of {', '.join(SWEEP_KINDS)}")
    out = _output_dir(config, out_dir)
    pair = _render(config)

    rows = []
    for name, variant, params in runs(config):
        state, report = run(pair, variant.opt, seed=init_seed(variant))
        metrics = _scene_metrics(variant, pair, state.disparity)
        rows.append(_run_row(name, report, metrics, state.loss_history[-1].total, **params))
        logger.info("sweep %s %s: fattened fraction %.4f", kind, name, report.fattened_fraction)

    name = f"sweep_{kind.replace('-', '_')}.csv"
    table = report_frame(rows)
    write_frame(table, resolve_output_path(out, name))
    return success_response({
        "output_dir": str(out),
        "files": [name],
        "kind": kind,
        "runs": [r["run"] for r in rows],
        "fattened_fraction": {r["run"]: r["fattened_fraction"] for r in rows},
        "table": summarize_frame(table),
    })

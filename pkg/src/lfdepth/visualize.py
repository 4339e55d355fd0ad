"""Diagnostic images (uint8 RGB arrays) and plots."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from PIL import Image

from .metrics import DEFAULT_TAU, abs_errors

GOOD_RGB = (0, 160, 0)
BAD_RGB = (200, 0, 0)
OUTSIDE_RGB = (128, 128, 128)


def _arr(d):
    return np.asarray(getattr(d, "disparity", d), dtype=float)


def badpix_visualization(d, gt, mask=None, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Green where ``|err| <= tau``, red where ``> tau`` (or non-finite), gray outside the mask."""
    a, b = _arr(d), _arr(gt)
    m = np.ones(a.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    out = np.empty(a.shape + (3,), dtype=np.uint8)
    out[:] = OUTSIDE_RGB
    bad = np.zeros(a.shape, dtype=bool)
    bad[m] = abs_errors(a, b, m) > tau
    out[m & ~bad] = GOOD_RGB
    out[bad] = BAD_RGB
    return out


def _diverging(t: np.ndarray) -> np.ndarray:
    """``t`` in ``[-1, 1]``: -1 blue, 0 white, +1 red, linear in between."""
    t = np.clip(t, -1.0, 1.0)
    pos, neg = np.clip(t, 0, 1), np.clip(-t, 0, 1)
    r = 1.0 - neg
    g = 1.0 - np.maximum(pos, neg)
    b = 1.0 - pos
    return np.round(np.stack([r, g, b], axis=-1) * 255).astype(np.uint8)


def signed_error_visualization(d, gt, clip: float = 0.2) -> np.ndarray:
    """Signed error ``d - gt`` mapped blue (too close) / white / red (too far) over ``[-clip, clip]``.

    Non-finite errors are drawn black.
    """
    if not clip > 0:
        raise ValueError("clip must be > 0")
    e = _arr(d) - _arr(gt)
    img = _diverging(np.nan_to_num(e / clip, nan=0.0))
    img[~np.isfinite(e)] = 0
    return img


def median_error_map(errors, index: int):
    """``median_k err_k - err_index`` per pixel and its rendering.

    Positive (better than the median) is green, zero yellow, negative red,
    saturating at 0.1 px.
    """
    errs = np.stack([np.asarray(e, dtype=float) for e in errors])
    if errs.shape[0] < 2:
        raise ValueError("median error map needs at least 2 algorithms")
    if not 0 <= index < errs.shape[0]:
        raise IndexError("algorithm index out of range")
    diff = np.median(errs, axis=0) - errs[index]
    t = np.clip(np.nan_to_num(diff / 0.1), -1.0, 1.0)
    r = np.where(t >= 0, 1.0 - t, 1.0)
    g = np.where(t >= 0, 1.0, 1.0 + t)
    rgb = np.round(np.stack([r, g, np.zeros_like(t)], axis=-1) * 255).astype(np.uint8)
    return diff, rgb


def difficulty_heatmap(bad_masks) -> np.ndarray:
    """Fraction of algorithms that are bad at each pixel (brighter = harder), in ``[0, 1]``."""
    stack = np.stack([np.asarray(b, dtype=bool) for b in bad_masks])
    if stack.shape[0] < 1:
        raise ValueError("need at least one algorithm")
    return stack.mean(axis=0)


def disparity_image(d, vmin=None, vmax=None) -> np.ndarray:
    """Disparity rendered with matplotlib's ``viridis``; non-finite pixels black."""
    from matplotlib import colormaps

    a = _arr(d)
    fin = np.isfinite(a)
    lo = np.min(a[fin]) if vmin is None and fin.any() else (vmin if vmin is not None else 0.0)
    hi = np.max(a[fin]) if vmax is None and fin.any() else (vmax if vmax is not None else 1.0)
    t = np.clip((np.nan_to_num(a) - lo) / max(hi - lo, 1e-12), 0, 1)
    rgb = np.round(colormaps["viridis"](t)[..., :3] * 255).astype(np.uint8)
    rgb[~fin] = 0
    return rgb


def save_png(path, image: np.ndarray) -> None:
    a = np.asarray(image)
    if a.dtype != np.uint8:
        a = np.round(np.clip(a, 0, 1) * 255).astype(np.uint8)
    Image.fromarray(a).save(path)


def read_trace_csv(path):
    """``(iterations, residuals, objectives)`` from a solver trace CSV."""
    it, res, obj = [], [], []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            it.append(int(row["iteration"]))
            res.append(float(row["residual_norm"]))
            obj.append(float(row["primal_objective"]))
    return np.array(it), np.array(res), np.array(obj)


def write_trace_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "residual_norm", "primal_objective"])
        for i, r, o in rows:
            w.writerow([i, repr(float(r)), repr(float(o))])


def convergence_plot(trace_csv, out_png, max_iter: int = 300) -> None:
    """Residual norm against iteration on a log scale."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    it, res, _ = read_trace_csv(trace_csv)
    if it.size == 0:
        raise ValueError(f"{trace_csv}: trace is empty")
    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    ax.semilogy(it, np.maximum(res, np.finfo(float).tiny))
    ax.set_xlim(0, max(max_iter, int(it.max())))
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative residual norm")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(out_png), metadata={"Software": None})
    plt.close(fig)


def threshold_curve_plot(curves: dict, out_png) -> None:
    """Percent of correct pixels against threshold, one line per label."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    for label, curve in curves.items():
        t, p = zip(*curve)
        ax.plot(t, p, marker="o", label=label)
    ax.set_xlabel("error threshold (px)")
    ax.set_ylabel("correct pixels (%)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(out_png), metadata={"Software": None})
    plt.close(fig)

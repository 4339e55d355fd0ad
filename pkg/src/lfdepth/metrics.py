"""Benchmark error metrics: BadPix, MSE x 100, Q25 and accuracy curves.

Non-finite estimates inside the mask count as infinitely wrong: bad at every
threshold, ``inf`` in MSE and ranked last in Q25.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lightfield import DisparityField

DEFAULT_TAU = 0.07


def _values(d) -> np.ndarray:
    return np.asarray(d.disparity if isinstance(d, DisparityField) else d, dtype=float)


def _mask(mask, shape) -> np.ndarray:
    m = np.ones(shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != shape:
        raise ValueError(f"mask shape {m.shape} does not match {shape}")
    if not m.any():
        raise ValueError("evaluation mask is empty")
    return m


def abs_errors(d, gt, mask=None) -> np.ndarray:
    """Absolute errors of the masked pixels (1D); NaN/inf estimates become ``inf``."""
    a, b = _values(d), _values(gt)
    if a.shape != b.shape:
        raise ValueError(f"estimate shape {a.shape} does not match ground truth {b.shape}")
    m = _mask(mask, a.shape)
    e = np.abs(a[m] - b[m])
    return np.where(np.isfinite(e), e, np.inf)


def badpix(d, gt, mask=None, tau: float = DEFAULT_TAU) -> float:
    """Percentage of masked pixels with ``|d - gt| > tau`` (strict)."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    e = abs_errors(d, gt, mask)
    return 100.0 * np.count_nonzero(e > tau) / e.size


def mse100(d, gt, mask=None) -> float:
    """Mean squared error over the mask, times 100.

    Evaluated as ``mean((10 e)^2)``: the same value, but decimal errors such as
    0.1 px scale to exact integers before squaring, so hand examples come out exact.
    """
    e = abs_errors(d, gt, mask) * 10.0
    return float(np.mean(e * e))


def q25(d, gt, mask=None) -> float:
    """Largest absolute error among the best quarter of masked pixels, times 100.

    That is the ``ceil(0.25 |M|)``-th smallest error (1-based rank).
    """
    e = abs_errors(d, gt, mask)
    if e.size < 4:
        raise ValueError("Q25 needs at least 4 masked pixels")
    k = math.ceil(0.25 * e.size)
    return float(np.partition(e, k - 1)[k - 1] * 100.0)


def threshold_curve(d, gt, mask=None, taus=(0.01, 0.03, 0.05, 0.07, 0.1, 0.2, 0.5)):
    """``[(tau, 100 - badpix(tau))]`` for ascending positive thresholds."""
    taus = [float(t) for t in taus]
    if any(t <= 0 for t in taus) or any(b < a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be positive and ascending")
    e = abs_errors(d, gt, mask)
    return [(t, 100.0 - 100.0 * np.count_nonzero(e > t) / e.size) for t in taus]


@dataclass
class MetricsReport:
    badpix: float
    tau: float
    mse100: float
    q25: float
    pixel_abs_error: np.ndarray
    extra_badpix: dict | None = None   # tau -> percent for additional thresholds

    def rows(self):
        rows = [(f"badpix_{self.tau:g}", self.badpix), ("mse100", self.mse100), ("q25", self.q25)]
        for t, v in sorted((self.extra_badpix or {}).items()):
            if t != self.tau:
                rows.append((f"badpix_{t:g}", v))
        return rows

    def as_dict(self):
        return {k: float(v) for k, v in self.rows()}


def evaluate(d, gt, mask=None, tau: float = DEFAULT_TAU, extra_taus=(0.03,)) -> MetricsReport:
    a, b = _values(d), _values(gt)
    m = _mask(mask, a.shape)
    err = np.full(a.shape, np.nan)
    e = np.abs(a - b)
    err[m] = np.where(np.isfinite(e[m]), e[m], np.inf)
    extra = {float(t): badpix(a, b, m, t) for t in extra_taus}
    return MetricsReport(badpix(a, b, m, tau), tau, mse100(a, b, m), q25(a, b, m), err, extra)


def write_metrics_csv(path, report: MetricsReport) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in report.rows():
            w.writerow([k, repr(float(v))])


def format_table(reports: dict) -> str:
    """Plain-text table, one row per metric and one column per labelled report."""
    labels = list(reports)
    if not labels:
        return ""
    metric_names = [k for k, _ in reports[labels[0]].rows()]
    width = max(10, *(len(lbl) for lbl in labels))
    lines = ["metric".ljust(14) + "".join(lbl.rjust(width + 2) for lbl in labels)]
    for name in metric_names:
        vals = [reports[lbl].as_dict().get(name, float("nan")) for lbl in labels]
        lines.append(name.ljust(14) + "".join(f"{v:>{width + 2}.4f}" for v in vals))
    return "\n".join(lines)


def read_mask(path) -> np.ndarray:
    """Boolean mask from an image (nonzero = evaluate) or PFM file."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        from .pfm import read_pfm_array
        return read_pfm_array(path) != 0
    from .lightfield import read_image
    return read_image(path)[..., 0] > 0

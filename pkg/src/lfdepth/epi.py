"""Structure-tensor slope estimation on EPIs and the initial disparity map.

Sign convention: a scene point at disparity ``d`` seen at ``(x, y)`` in the
reference view ``(v_c, u_c)`` appears at ``(x - d (u - u_c), y - d (v - v_c))``
in view ``(v, u)``. On a horizontal EPI its trace therefore has slope
``dx/du = -d``; positive disparity moves features opposite to the view index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .lightfield import (CameraConfig, DisparityField, EPISlice, LightField4D,
                         horizontal_epi_stack, vertical_epi_stack)

log = logging.getLogger(__name__)

TRACE_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class StructureTensorField:
    """Smoothed gradient moments; axis ``-2`` is spatial, axis ``-1`` angular."""

    j_ss: np.ndarray
    j_sa: np.ndarray
    j_aa: np.ndarray


@dataclass(frozen=True, eq=False)
class SlopeEstimate:
    """``slope`` is spatial shift per angular step (NaN where undefined)."""

    slope: np.ndarray
    coherence: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.slope)


@dataclass(frozen=True)
class EPIParams:
    sigma_inner: float = 0.8
    sigma_outer: float = 2.0
    coherence_min: float = 0.05
    orientation: str = "both"
    angular_boundary: str = "masked"

    def __post_init__(self):
        if not (self.sigma_inner > 0 and self.sigma_outer > 0):
            raise ValueError("sigma_inner and sigma_outer must be > 0")
        if not 0 <= self.coherence_min <= 1:
            raise ValueError("coherence_min must lie in [0, 1]")
        if self.orientation not in ("both", "h", "v"):
            raise ValueError("orientation must be 'both', 'h' or 'v'")


def _kernel_radius(sigma: float, truncate: float = 4.0) -> int:
    # scipy.ndimage's Gaussian support radius
    return int(truncate * float(sigma) + 0.5)


def structure_tensor(epi, sigma_inner: float = 0.8, sigma_outer: float = 2.0,
                     angular_boundary: str = "masked") -> StructureTensorField:
    """Structure tensor of one EPI (``EPISlice`` or 2D array) or a stack of EPIs.

    A 3D input is a stack along axis 0; filtering never mixes stack members.
    Gradients are Gaussian derivatives at ``sigma_inner``; the moments are
    smoothed at ``sigma_outer``; borders are reflected.

    ``angular_boundary="masked"`` keeps only gradient products whose
    derivative kernel lies fully inside the angular axis and smooths them by
    normalized convolution along that axis. Angular axes are short (9 views),
    and a reflected border mirrors the line orientation, which pulls slopes
    toward 0 over the whole EPI. When the axis is too short for any
    border-free sample this falls back to ``"reflect"``.
    """
    data = epi.data if isinstance(epi, EPISlice) else epi
    a = np.asarray(data, dtype=float)
    if a.ndim not in (2, 3):
        raise ValueError(f"EPI must be 2D (or a 3D stack), got shape {a.shape}")
    if not (sigma_inner > 0 and sigma_outer > 0):
        raise ValueError("sigmas must be > 0")
    if angular_boundary not in ("masked", "reflect"):
        raise ValueError("angular_boundary must be 'masked' or 'reflect'")
    if min(a.shape[-2:]) < 3:
        raise ValueError(f"EPI of shape {a.shape[-2:]} is too small; minimum size is 3x3")
    lead = (0.0,) * (a.ndim - 2)
    inner = lead + (sigma_inner, sigma_inner)
    order_s = (0,) * (a.ndim - 2) + (1, 0)
    order_a = (0,) * (a.ndim - 2) + (0, 1)
    gs = ndimage.gaussian_filter(a, inner, order=order_s, mode="reflect")
    ga = ndimage.gaussian_filter(a, inner, order=order_a, mode="reflect")

    n_ang = a.shape[-1]
    r = _kernel_radius(sigma_inner)
    if angular_boundary == "masked" and n_ang > 2 * r:
        weight = np.zeros(n_ang)
        weight[r:n_ang - r] = 1.0
        spatial = lead + (sigma_outer, 0.0)
        norm = ndimage.gaussian_filter1d(weight, sigma_outer, mode="constant")

        def smooth(x):
            x = ndimage.gaussian_filter(x * weight, spatial, mode="reflect")
            return ndimage.gaussian_filter1d(x, sigma_outer, axis=-1, mode="constant") / norm
    else:
        outer = lead + (sigma_outer, sigma_outer)

        def smooth(x):
            return ndimage.gaussian_filter(x, outer, mode="reflect")

    j_ss = smooth(gs * gs)
    j_sa = smooth(gs * ga)
    j_aa = smooth(ga * ga)
    # the smoothing kernel is positive, so these only dip below 0 by round-off
    return StructureTensorField(np.maximum(j_ss, 0.0), j_sa, np.maximum(j_aa, 0.0))


def slope_from_tensor(tensor: StructureTensorField) -> SlopeEstimate:
    """Iso-intensity line slope ``ds/da`` and coherence per pixel.

    For ``E(s, a) = f(s - m a)`` the tensor is proportional to
    ``[[1, -m], [-m, m^2]]`` and the returned slope is ``m``. The two
    algebraically equal closed forms are evaluated with the better-conditioned
    denominator. Pixels with trace below ``TRACE_EPS`` get coherence 0 and NaN
    slope; vertical iso-lines (infinite slope) also get NaN.
    """
    j_ss, j_sa, j_aa = tensor.j_ss, tensor.j_sa, tensor.j_aa
    diff = j_ss - j_aa
    root = np.hypot(diff, 2.0 * j_sa)
    trace = j_ss + j_aa
    flat = trace < TRACE_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        coherence = np.where(flat, 0.0, root / np.where(flat, 1.0, trace))
        den_a = diff + root          # slope = -2 j_sa / den_a
        den_b = 2.0 * j_sa           # slope = (diff - root) / den_b
        use_a = np.abs(den_a) >= np.abs(den_b)
        slope = np.where(use_a, -2.0 * j_sa / den_a, (diff - root) / den_b)
    slope = np.where(flat | ~np.isfinite(slope), np.nan, slope)
    return SlopeEstimate(slope, np.clip(coherence, 0.0, 1.0))


def slope_to_depth(slope, plane_separation):
    """Depth ``Z = A / (1 - s)`` for angular-per-spatial slope ``s = du/dx``.

    ``s = 1`` gives ``inf`` (the rays never meet); ``s > 1`` gives a negative,
    nonphysical depth which callers should flag (see :func:`nonphysical_depth`).
    """
    s = np.asarray(slope, dtype=float)
    A = np.asarray(plane_separation, dtype=float)
    with np.errstate(divide="ignore"):
        z = A / (1.0 - s)
    return z if z.ndim else float(z)


def depth_to_slope(depth, plane_separation):
    """Inverse of :func:`slope_to_depth`: ``s = 1 - A / Z``."""
    z = np.asarray(depth, dtype=float)
    s = 1.0 - np.asarray(plane_separation, dtype=float) / z
    return s if s.ndim else float(s)


def nonphysical_depth(depth) -> np.ndarray:
    """Mask of depths that are infinite, negative or NaN."""
    z = np.asarray(depth, dtype=float)
    return ~(np.isfinite(z) & (z > 0))


def disparity_to_depth_map(field: DisparityField, cfg: CameraConfig) -> np.ndarray:
    """Per-pixel depth ``A / (1 + d)``, i.e. :func:`slope_to_depth` of ``s = -d``.

    Zero disparity lies on the plane at distance ``A``; depth decreases as
    disparity grows. Invalid pixels and nonphysical depths (``d <= -1``) are NaN.
    """
    d = np.asarray(field.disparity, dtype=float)
    z = np.asarray(slope_to_depth(-d, cfg.depth_scale), dtype=float)
    bad = ~field.valid_mask | nonphysical_depth(z)
    return np.where(bad, np.nan, z)


def _center_row_slopes(stack: np.ndarray, center: int, params: EPIParams):
    t = structure_tensor(stack, params.sigma_inner, params.sigma_outer, params.angular_boundary)
    c = (slice(None), slice(None), center)
    est = slope_from_tensor(StructureTensorField(t.j_ss[c], t.j_sa[c], t.j_aa[c]))
    return est.slope, est.coherence


def directional_estimates(lf: LightField4D, params: EPIParams = EPIParams(),
                          center: tuple[int, int] | None = None):
    """Candidate ``(disparity, coherence)`` maps per orientation, keyed ``'h'``/``'v'``.

    Only orientations with at least 3 views and selected by ``params`` appear.
    """
    if lf.channels != 1:
        raise ValueError("initial disparity needs a grayscale light field (see to_grayscale)")
    vc, uc = lf.center if center is None else center
    out = {}
    if params.orientation in ("both", "h") and lf.views_u >= 3 and lf.width_x >= 3:
        slope, coh = _center_row_slopes(horizontal_epi_stack(lf, vc), uc, params)
        out["h"] = (-slope, coh)  # (Y, X)
    if params.orientation in ("both", "v") and lf.views_v >= 3 and lf.height_y >= 3:
        slope, coh = _center_row_slopes(vertical_epi_stack(lf, uc), vc, params)
        out["v"] = (-slope.T, coh.T)  # stack is (X, Y)
    if not out:
        raise ValueError(
            f"no usable EPI orientation: need >= 3 views along a selected axis "
            f"(U={lf.views_u}, V={lf.views_v}, orientation={params.orientation!r})")
    return out


def merge_estimates(candidates: dict) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel argmax of coherence; ties go to the horizontal estimate.

    Candidates with undefined slope compete with coherence 0. Returns
    ``(disparity, coherence)``; disparity stays NaN where no candidate is defined.
    """
    keys = [k for k in ("h", "v") if k in candidates]
    disp, coh = candidates[keys[0]]
    disp = disp.copy()
    coh = np.where(np.isfinite(disp), coh, 0.0)
    for k in keys[1:]:
        d2, c2 = candidates[k]
        c2 = np.where(np.isfinite(d2), c2, 0.0)
        take = (c2 > coh) | (~np.isfinite(disp) & np.isfinite(d2))
        disp = np.where(take, d2, disp)
        coh = np.where(take, c2, coh)
    return disp, coh


def estimate_initial_disparity(lf: LightField4D, params: EPIParams = EPIParams(),
                               cfg: CameraConfig | None = None) -> DisparityField:
    """Initial disparity of the reference view from horizontal and vertical EPIs.

    Pixels with no defined slope get disparity 0 (clamped into the configured
    range) and confidence 0 so they can still enter refinement.
    """
    cfg = cfg or CameraConfig()
    center = cfg.resolved_center(lf)
    disp, coh = merge_estimates(directional_estimates(lf, params, center))
    defined = np.isfinite(disp)
    disp = np.where(defined, disp, 0.0)
    disp = np.clip(disp, cfg.disp_min, cfg.disp_max)
    coh = np.where(defined, coh, 0.0)
    valid = defined & (coh >= params.coherence_min)
    return DisparityField(disp, confidence=coh, valid_mask=valid)

"""Synthetic scenes with known ground truth, for tests, demos and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .lightfield import CameraConfig, LightField4D


def smooth_texture(shape, rng: np.random.Generator, sigma: float = 1.5,
                   lo: float = 0.1, hi: float = 0.9) -> np.ndarray:
    """Band-limited random texture rescaled to ``[lo, hi]``."""
    t = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    return lo + (hi - lo) * t


def shifted_pattern_epi(slope: float, spatial: int = 96, angular: int = 9,
                        rng: np.random.Generator | None = None, sigma: float = 2.0) -> np.ndarray:
    """EPI ``E(s, a) = f(s - slope * (a - a_c))`` for a smooth random 1D ``f``.

    Returned with shape ``spatial x angular``; ``f`` is sampled by cubic
    interpolation on a wide padded support so no border effects enter.
    """
    rng = rng or np.random.default_rng(0)
    pad = int(np.ceil(abs(slope) * angular)) + 16
    f = smooth_texture(spatial + 2 * pad, rng, sigma=sigma)
    a = np.arange(angular) - angular // 2
    s = np.arange(spatial)
    coords = pad + s[:, None] - slope * a[None, :]
    return ndimage.map_coordinates(f, [coords.ravel()], order=3, mode="nearest").reshape(spatial, angular)


@dataclass(frozen=True)
class SyntheticScene:
    lightfield: LightField4D
    disparity: np.ndarray  # ground truth for the reference (center) view
    config: CameraConfig   # disparity range padded by 1 px around the true range


def layered_lightfield(disparity_layers, masks, size: int = 128, views: int = 9,
                       rng: np.random.Generator | None = None, noise: float = 0.0,
                       texture_sigma: float = 1.2) -> SyntheticScene:
    """Light field of fronto-parallel textured layers, back to front.

    ``masks[k]`` marks where layer ``k`` lies in the reference view; later
    layers occlude earlier ones. View ``(v, u)`` shows the layer point at
    reference position ``p`` at ``p - d * ((u, v) - center)``. Each layer has its
    own texture. ``noise`` adds i.i.d. Gaussian noise (clipped to ``[0, 1]``).
    """
    rng = rng or np.random.default_rng(0)
    c = views // 2
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    textures = [smooth_texture((size + 64, size + 64), rng, sigma=texture_sigma)
                for _ in disparity_layers]
    samples = np.zeros((views, views, size, size, 1))
    gt = np.zeros((size, size))
    for d, m in zip(disparity_layers, masks):
        gt[np.asarray(m, dtype=bool)] = d
    for v in range(views):
        for u in range(views):
            img = np.zeros((size, size))
            for d, m, tex in zip(disparity_layers, masks, textures):
                # reference coordinates of the layer point imaged at (yy, xx)
                ry = yy + d * (v - c)
                rx = xx + d * (u - c)
                inside = ndimage.map_coordinates(np.asarray(m, dtype=float), [ry, rx], order=0,
                                                 mode="constant", cval=0.0) > 0.5
                vals = ndimage.map_coordinates(tex, [ry + 32, rx + 32], order=3, mode="reflect")
                img = np.where(inside, vals, img)
            samples[v, u, :, :, 0] = img
    if noise > 0:
        samples = samples + noise * rng.standard_normal(samples.shape)
    cfg = CameraConfig(disp_min=float(min(disparity_layers)) - 1.0,
                       disp_max=float(max(disparity_layers)) + 1.0)
    return SyntheticScene(LightField4D(np.clip(samples, 0.0, 1.0)), gt, cfg)


def two_plane_scene(size: int = 128, views: int = 9, near: float = 1.2, far: float = -0.6,
                    rng: np.random.Generator | None = None, noise: float = 0.0,
                    shape: str = "rect") -> SyntheticScene:
    """Textured background plane at disparity ``far`` behind a nearer plane at ``near``.

    ``shape`` selects the front plane's outline: ``"rect"`` (random rectangle),
    ``"disc"`` (random disc) or ``"half"`` (vertical boundary through the middle).
    """
    rng = rng or np.random.default_rng(0)
    yy, xx = np.mgrid[0:size, 0:size]
    if shape == "half":
        front = xx >= size // 2
    elif shape == "disc":
        cy, cx = rng.uniform(0.35, 0.65, 2) * size
        r = rng.uniform(0.2, 0.3) * size
        front = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    elif shape == "rect":
        y0, x0 = rng.integers(size // 6, size // 3, 2)
        y1, x1 = rng.integers(2 * size // 3, 5 * size // 6, 2)
        front = (yy >= y0) & (yy < y1) & (xx >= x0) & (xx < x1)
    else:
        raise ValueError(f"unknown shape {shape!r}")
    background = np.ones((size, size), dtype=bool)
    return layered_lightfield([far, near], [background, front], size=size, views=views,
                              rng=rng, noise=noise)


def piecewise_constant_map(size: int = 128, n_regions: int = 6,
                           rng: np.random.Generator | None = None,
                           value_range=(-2.0, 2.0)) -> np.ndarray:
    """Disparity-like map made of random axis-aligned rectangles and discs."""
    rng = rng or np.random.default_rng(0)
    out = np.full((size, size), rng.uniform(*value_range))
    yy, xx = np.mgrid[0:size, 0:size]
    for k in range(n_regions):
        val = rng.uniform(*value_range)
        if k % 2:
            cy, cx = rng.uniform(0, size, 2)
            r = rng.uniform(0.1, 0.3) * size
            m = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        else:
            y0, x0 = rng.integers(0, size * 3 // 4, 2)
            h, w = rng.integers(size // 8, size // 2, 2)
            m = (yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)
        out[m] = val
    return out


# ---------------------------------------------------------------- alignment

@dataclass(frozen=True)
class PlaneMotion:
    h1: np.ndarray                 # basis homography, h1[2, 2] = 1
    k: np.ndarray                  # 3-vector
    delta_normals: list            # one 3-vector per patch; the basis patch has zeros


def random_plane_motion(n_patches: int, rng: np.random.Generator, size: float = 512.0) -> PlaneMotion:
    """Moderate random view-to-view motion of ``n_patches`` planes in a ``size`` px image."""
    a = np.eye(2) + 0.05 * rng.standard_normal((2, 2))
    t = rng.uniform(-20, 20, 2)
    h1 = np.eye(3)
    h1[:2, :2] = a
    h1[:2, 2] = t
    h1[2, :2] = 1e-5 * rng.standard_normal(2)
    k = rng.standard_normal(3)
    k[2] *= 1e-3
    k /= np.linalg.norm(k)
    k *= 10.0
    dns = [np.zeros(3)]
    for _ in range(n_patches - 1):
        dn = np.array([2e-3 * rng.standard_normal(), 2e-3 * rng.standard_normal(),
                       0.5 * rng.standard_normal()])
        dns.append(dn)
    return PlaneMotion(h1, k, dns)


def plane_correspondences(motion: PlaneMotion, points_per_patch: int, rng: np.random.Generator,
                          size: float = 512.0, noise: float = 0.0):
    """Correspondences ``(patch_id, p, p')`` for each plane patch (patch ids from 1).

    Patch ``t`` samples points in its own vertical strip of the image; the
    first patch is the basis plane and receives the most points.
    """
    from .alignment import Correspondence, project

    n = len(motion.delta_normals)
    corrs = []
    for t, dn in enumerate(motion.delta_normals):
        count = points_per_patch * (2 if t == 0 else 1)
        x0, x1 = size * t / n, size * (t + 1) / n
        p = np.column_stack([rng.uniform(x0, x1, count), rng.uniform(0, size, count)])
        h = motion.h1 + np.outer(motion.k, dn)
        q = project(h, p)
        if noise > 0:
            q = q + noise * rng.standard_normal(q.shape)
        corrs.extend(Correspondence(tuple(a), tuple(b), t + 1) for a, b in zip(p, q))
    return corrs

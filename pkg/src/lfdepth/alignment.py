"""Plane-induced homographies between array views, estimated by alternating least squares.

Every plane patch ``t`` seen from the reference view maps to a target view by
``H_t ~ H_1 + K dN_t^T``: a shared basis homography ``H_1`` (patch 1, the basis
plane, has ``dN_1 = 0``), a shared 3-vector ``K`` and one 3-vector ``dN_t`` per
extra plane. With ``H_1`` and ``K`` fixed the ``dN_t`` are linear least-squares
problems per patch; with all ``dN_t`` fixed, ``(h_1..h_8, k_1..k_3)`` is one
linear least-squares problem. The two steps alternate until the mean
reprojection error drops below a threshold.

All solves run in Hartley-normalized coordinates (centroid at the origin,
mean distance sqrt(2)). Under ``p~ = T p`` and ``p~' = T' p'`` the model keeps
its form with ``H~_1 = T' H_1 T^-1 / c``, ``K~ = T' K / c``, ``dN~ = T^-T dN``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DataFormatError, NumericalError
from .lightfield import LightField4D

log = logging.getLogger(__name__)

DET_EPS = 1e-12
K_EPS = 1e-12
W_EPS = 1e-12


@dataclass(frozen=True)
class Correspondence:
    p: tuple            # (p1, p2) in the reference view, pixels
    p_prime: tuple      # (p1', p2') in the target view, pixels
    patch_id: int = 1

    def __post_init__(self):
        if len(self.p) != 2 or len(self.p_prime) != 2:
            raise ValueError("points must be 2D")
        if not np.all(np.isfinite(list(self.p) + list(self.p_prime))):
            raise ValueError("correspondence coordinates must be finite")
        if self.patch_id < 1:
            raise ValueError("patch ids start at 1")


@dataclass(frozen=True, eq=False)
class MotionState:
    """Reference-to-target motion: ``H_t ~ h1 + k dN_t^T`` for patch ids ``t``.

    ``delta_normals`` maps patch id to ``dN_t``; the basis patch maps to zeros.
    ``scale_d`` holds the per-patch factor ``d_t`` of ``d_t H_t = h1 + k dN_t^T``
    when ``H_t`` is normalized to ``H_t[2, 2] = 1``.
    """

    h1: np.ndarray
    k: np.ndarray
    delta_normals: dict
    basis_patch: int = 1
    degenerate: bool = False

    @property
    def scale_d(self) -> dict:
        return {t: float(self.h1[2, 2] + self.k[2] * dn[2]) for t, dn in self.delta_normals.items()}

    @property
    def parameter_count(self) -> int:
        """Degrees of freedom: 8 for ``H_1`` plus ``K`` up to scale, 3 per plane."""
        return 5 + 3 * len(self.delta_normals)


def identity_state() -> MotionState:
    return MotionState(np.eye(3), np.zeros(3), {1: np.zeros(3)})


def normalize_homography(h: np.ndarray) -> np.ndarray:
    """Scale so ``h[2, 2] = 1``; raises for singular or unnormalizable matrices."""
    h = np.asarray(h, dtype=float)
    if abs(h[2, 2]) < DET_EPS:
        raise NumericalError("homography has h[2,2] = 0 and cannot be normalized")
    h = h / h[2, 2]
    if abs(np.linalg.det(h)) <= DET_EPS:
        raise NumericalError("homography is singular")
    return h


def compose_patch_homography(state: MotionState, t: int) -> np.ndarray:
    """``H_t = normalize(H_1 + K dN_t^T)``."""
    dn = state.delta_normals.get(t)
    if dn is None:
        raise KeyError(f"no plane patch {t} in the motion state")
    if not np.any(dn):
        return normalize_homography(state.h1)
    return normalize_homography(state.h1 + np.outer(state.k, dn))


def project(h: np.ndarray, p) -> np.ndarray:
    """Apply a homography to ``(N, 2)`` points (division by the third coordinate)."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    q = p @ h[:, :2].T + h[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        return q[:, :2] / q[:, 2:3]


def _arrays(corrs):
    p = np.array([c.p for c in corrs], dtype=float).reshape(-1, 2)
    q = np.array([c.p_prime for c in corrs], dtype=float).reshape(-1, 2)
    t = np.array([c.patch_id for c in corrs], dtype=int)
    return p, q, t


def reprojection_error(h: np.ndarray, corrs, return_excluded: bool = False):
    """Mean ``||project(h, p) - p'||`` over correspondences.

    Points mapped to (near) infinity are excluded; ``return_excluded`` also
    returns how many were dropped.
    """
    if len(corrs) == 0:
        raise ValueError("reprojection error needs at least one correspondence")
    p, q, _ = _arrays(corrs)
    return _reprojection(h, p, q, return_excluded)


def _reprojection(h, p, q, return_excluded=False):
    w = p @ h[2, :2] + h[2, 2]
    ok = np.abs(w) > W_EPS
    excluded = int(np.count_nonzero(~ok))
    err = np.linalg.norm(project(h, p[ok]) - q[ok], axis=1).mean() if ok.any() else np.inf
    return (float(err), excluded) if return_excluded else float(err)


def state_reprojection_error(state: MotionState, corrs) -> float:
    """Mean reprojection error of every correspondence under its own patch homography."""
    p, q, t = _arrays(corrs)
    total, count = 0.0, 0
    for tid in np.unique(t):
        sel = t == tid
        h = compose_patch_homography(state, int(tid))
        w = p[sel] @ h[2, :2] + h[2, 2]
        ok = np.abs(w) > W_EPS
        if ok.any():
            total += np.linalg.norm(project(h, p[sel][ok]) - q[sel][ok], axis=1).sum()
            count += int(ok.sum())
    return total / count if count else float("inf")


# ---------------------------------------------------------------- normalization

def hartley_transform(p: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to 0 and the mean distance to sqrt(2)."""
    c = p.mean(axis=0)
    dist = np.linalg.norm(p - c, axis=1).mean()
    s = np.sqrt(2.0) / dist if dist > 0 else 1.0
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _apply(T, p):
    return p * T[0, 0] + T[:2, 2]


def _to_normalized(state: MotionState, T, Tp) -> MotionState:
    h = Tp @ state.h1 @ np.linalg.inv(T)
    c = h[2, 2]
    if abs(c) < DET_EPS:
        raise NumericalError("basis homography degenerates under normalization")
    return MotionState(h / c, Tp @ state.k / c,
                       {t: np.linalg.inv(T).T @ dn for t, dn in state.delta_normals.items()},
                       state.basis_patch, state.degenerate)


def _from_normalized(state: MotionState, T, Tp) -> MotionState:
    Tpi = np.linalg.inv(Tp)
    h = Tpi @ state.h1 @ T
    c = h[2, 2]
    if abs(c) < DET_EPS:
        raise NumericalError("basis homography has h[2,2] = 0 in pixel coordinates")
    return MotionState(h / c, Tpi @ state.k / c,
                       {t: T.T @ dn for t, dn in state.delta_normals.items()},
                       state.basis_patch, state.degenerate)


# ---------------------------------------------------------------- least squares steps

@dataclass
class DeltaNormalResult:
    delta_normals: dict
    residuals: dict
    degenerate: bool
    rank_deficient: list = field(default_factory=list)


def _delta_normal_rows(h1, k, p, q):
    """Rows of ``U_1 dN = b_1`` and ``U_2 dN = b_2`` per correspondence."""
    P = np.column_stack([p, np.ones(len(p))])
    u1 = k[0] * P - k[2] * P * q[:, :1]
    u2 = k[1] * P - k[2] * P * q[:, 1:2]
    w = P @ h1[2]
    b1 = q[:, 0] * w - P @ h1[0]
    b2 = q[:, 1] * w - P @ h1[1]
    return np.vstack([u1, u2]), np.concatenate([b1, b2])


def solve_delta_normals(state: MotionState, corrs, normalize: bool = True) -> DeltaNormalResult:
    """Least-squares ``dN_t`` of every non-basis patch with ``H_1``, ``K`` fixed."""
    p, q, t = _arrays(corrs)
    if normalize:
        T, Tp = hartley_transform(p), hartley_transform(q)
        st = _to_normalized(state, T, Tp)
        p, q = _apply(T, p), _apply(Tp, q)
    else:
        st = state
    dns = {tid: np.zeros(3) for tid in state.delta_normals}
    residuals = {}
    rank_def = []
    if np.linalg.norm(st.k) < K_EPS:
        for tid in np.unique(t):
            dns[int(tid)] = np.zeros(3)
        return DeltaNormalResult(dns, residuals, True)
    for tid in np.unique(t):
        tid = int(tid)
        if tid == st.basis_patch:
            dns[tid] = np.zeros(3)
            continue
        sel = t == tid
        if sel.sum() < 3:
            raise ValueError(f"patch {tid} has {sel.sum()} correspondences; at least 3 are needed")
        A, b = _delta_normal_rows(st.h1, st.k, p[sel], q[sel])
        sol, res, rank, _ = np.linalg.lstsq(A, b, rcond=None)
        if rank < 3:
            rank_def.append(tid)
        dns[tid] = sol
        residuals[tid] = float(np.linalg.norm(A @ sol - b))
    out = MotionState(st.h1, st.k, dns, st.basis_patch)
    if normalize:
        out = _from_normalized(out, T, Tp)
    return DeltaNormalResult(out.delta_normals, residuals, False, rank_def)


@dataclass
class GlobalMotionResult:
    h1: np.ndarray
    k: np.ndarray
    residual: float
    condition: float


def _global_rows(p, q, dnp):
    n = len(p)
    O = np.zeros((n, 11))
    U = np.zeros((n, 11))
    O[:, 0], O[:, 1], O[:, 2] = p[:, 0], p[:, 1], 1.0
    O[:, 6], O[:, 7] = -p[:, 0] * q[:, 0], -p[:, 1] * q[:, 0]
    O[:, 8], O[:, 10] = dnp, -q[:, 0] * dnp
    U[:, 3], U[:, 4], U[:, 5] = p[:, 0], p[:, 1], 1.0
    U[:, 6], U[:, 7] = -p[:, 0] * q[:, 1], -p[:, 1] * q[:, 1]
    U[:, 9], U[:, 10] = dnp, -q[:, 1] * dnp
    return np.vstack([O, U]), np.concatenate([q[:, 0], q[:, 1]])


def solve_global_motion(delta_normals: dict, corrs, normalize: bool = True,
                        state: MotionState | None = None) -> GlobalMotionResult:
    """Least-squares ``(h_1..h_8, k_1..k_3)`` with every ``dN_t`` fixed (``p_3 = 1``).

    With normalization on, ``delta_normals`` are given in pixel coordinates
    and are mapped into the normalized frame with ``T^-T``. When every
    ``dN_t . P`` vanishes, ``K`` is unobservable and is returned as the
    previous ``state.k`` (or zero).
    """
    p, q, t = _arrays(corrs)
    if len(p) < 6:
        raise ValueError(f"{len(p)} correspondences; at least 6 are needed for 11 unknowns")
    if normalize:
        T, Tp = hartley_transform(p), hartley_transform(q)
        pn, qn = _apply(T, p), _apply(Tp, q)
        Tit = np.linalg.inv(T).T
        dns = {tid: Tit @ dn for tid, dn in delta_normals.items()}
    else:
        pn, qn, dns = p, q, delta_normals
    P = np.column_stack([pn, np.ones(len(pn))])
    D = np.stack([dns.get(int(tid), np.zeros(3)) for tid in t])
    dnp = np.einsum("ij,ij->i", D, P)
    A, b = _global_rows(pn, qn, dnp)
    k_observable = np.abs(dnp).max() > 1e-14
    cols = slice(None) if k_observable else slice(0, 8)
    Ause = A[:, cols]
    sol, _, rank, sv = np.linalg.lstsq(Ause, b, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if rank < Ause.shape[1]:
        log.warning("global motion system is rank deficient (rank %d of %d)", rank, Ause.shape[1])
    residual = float(np.linalg.norm(Ause @ sol - b))
    h = np.append(sol[:8], 1.0).reshape(3, 3)
    if k_observable:
        k = sol[8:11]
    else:
        k = None
    if normalize:
        Tpi = np.linalg.inv(Tp)
        hp = Tpi @ h @ T
        c = hp[2, 2]
        if abs(c) < DET_EPS:
            raise NumericalError("basis homography has h[2,2] = 0 in pixel coordinates")
        h = hp / c
        if k is not None:
            k = Tpi @ k / c
    if k is None:
        k = np.zeros(3) if state is None else state.k.copy()
    return GlobalMotionResult(h, k, residual, cond)


# ---------------------------------------------------------------- initialization

def dlt_homography(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Normalized DLT fit of ``q ~ H p`` (at least 4 points), ``H[2, 2] = 1``."""
    if len(p) < 4:
        raise ValueError("DLT needs at least 4 correspondences")
    T, Tp = hartley_transform(p), hartley_transform(q)
    pn, qn = _apply(T, p), _apply(Tp, q)
    n = len(p)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2], A[0::2, 2] = pn, 1
    A[0::2, 6:8], A[0::2, 8] = -qn[:, :1] * pn, -qn[:, 0]
    A[1::2, 3:5], A[1::2, 5] = pn, 1
    A[1::2, 6:8], A[1::2, 8] = -qn[:, 1:2] * pn, -qn[:, 1]
    _, _, vt = np.linalg.svd(A)
    h = np.linalg.inv(Tp) @ vt[-1].reshape(3, 3) @ T
    return normalize_homography(h)


def initialize_state(corrs) -> MotionState:
    """Starting point: per-patch DLT fits combined into ``(H_1, K, dN_t)``.

    ``H_1`` is the DLT fit of the largest patch. For another patch,
    ``H_1^-1 H_t`` is ``(I + H_1^-1 K dN_t^T) / d_t``, whose repeated eigenvalue
    gives ``d_t``; ``R_t = d_t H_t - H_1 = K dN_t^T`` is then rank one. ``K`` is
    the leading left singular vector of ``[R_2 ... R_j]`` and ``dN_t = R_t^T K``.
    """
    p, q, t = _arrays(corrs)
    ids, counts = np.unique(t, return_counts=True)
    basis = int(ids[np.argmax(counts)])
    h1 = dlt_homography(p[t == basis], q[t == basis])
    h1_inv = np.linalg.inv(h1)
    dns = {int(tid): np.zeros(3) for tid in ids}
    blocks, others = [], []
    for tid in ids:
        tid = int(tid)
        if tid == basis or np.count_nonzero(t == tid) < 4:
            continue
        ht = dlt_homography(p[t == tid], q[t == tid])
        ev = np.linalg.eigvals(h1_inv @ ht)
        pairs = [(abs(ev[i] - ev[j]), i, j) for i in range(3) for j in range(i + 1, 3)]
        _, i, j = min(pairs)
        lam = 0.5 * (ev[i] + ev[j]).real
        if abs(lam) < DET_EPS:
            continue
        blocks.append(ht / lam - h1)
        others.append(tid)
    if not blocks:
        return MotionState(h1, np.zeros(3), dns, basis)
    U, S, _ = np.linalg.svd(np.hstack(blocks))
    k = U[:, 0] * S[0] / np.sqrt(len(blocks))
    for tid, r in zip(others, blocks):
        dns[tid] = r.T @ k / (k @ k)
    return MotionState(h1, k, dns, basis)


# ---------------------------------------------------------------- alternating solver

@dataclass(frozen=True)
class AlignParams:
    threshold: float = 0.5
    max_iter: int = 50
    normalize: bool = True

    def __post_init__(self):
        if not self.threshold >= 0:
            raise ValueError("threshold must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class AlignmentResult:
    state: MotionState
    errors: list          # mean reprojection error after each outer iteration
    converged: bool
    initial_error: float


def estimate_motion(corrs, params: AlignParams = AlignParams(),
                    init: MotionState | None = None) -> AlignmentResult:
    """Alternate the ``dN_t`` and ``(H_1, K)`` solves until the error drops below threshold.

    Returns the lowest-error state seen; ``converged`` is false when the
    threshold was never reached.
    """
    corrs = list(corrs)
    if len(corrs) < 4:
        raise ValueError("alignment needs at least 4 correspondences")
    state = init or initialize_state(corrs)
    err0 = state_reprojection_error(state, corrs)
    best, best_err = state, err0
    errors = []
    if err0 < params.threshold:
        return AlignmentResult(state, errors, True, err0)
    multi = len(state.delta_normals) > 1
    for _ in range(params.max_iter):
        if multi:
            dn = solve_delta_normals(state, corrs, params.normalize)
            state = replace(state, delta_normals=dn.delta_normals, degenerate=dn.degenerate)
        if len(corrs) >= 6:
            gm = solve_global_motion(state.delta_normals, corrs, params.normalize, state)
            state = replace(state, h1=gm.h1, k=gm.k)
        err = state_reprojection_error(state, corrs)
        errors.append(err)
        if err < best_err:
            best, best_err = state, err
        if err < params.threshold:
            return AlignmentResult(state, errors, True, err0)
    log.warning("alignment did not reach %.3g px in %d iterations (best %.3g px)",
                params.threshold, params.max_iter, best_err)
    return AlignmentResult(best, errors, False, err0)


# ---------------------------------------------------------------- warping and arrays

def warp_image(image: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Resample ``image`` onto the reference grid: ``out(p) = image(H p)``, bilinear.

    The identity homography returns an exact copy.
    """
    image = np.asarray(image, dtype=float)
    if np.array_equal(h, np.eye(3)):
        return image.copy()
    hgt, wid = image.shape[:2]
    yy, xx = np.mgrid[0:hgt, 0:wid]
    pts = np.column_stack([xx.ravel(), yy.ravel()]).astype(float)
    src = project(h, pts)
    coords = [src[:, 1].reshape(hgt, wid), src[:, 0].reshape(hgt, wid)]
    if image.ndim == 2:
        return ndimage.map_coordinates(image, coords, order=1, mode="nearest")
    return np.stack([ndimage.map_coordinates(image[..., c], coords, order=1, mode="nearest")
                     for c in range(image.shape[2])], axis=-1)


@dataclass
class ArrayAlignment:
    lightfield: LightField4D
    states: dict           # (v, u) -> MotionState
    error_trace: list      # mean error across views per outer iteration
    converged: bool


def align_array(lf: LightField4D, corrs_per_view: dict, params: AlignParams = AlignParams(),
                reference: tuple[int, int] | None = None) -> ArrayAlignment:
    """Estimate per-view motion against the reference view and warp every view by ``H_1``.

    ``corrs_per_view`` maps ``(v, u)`` to correspondences from the reference
    view to that view. Views without correspondences (and the reference view)
    keep the identity.
    """
    ref = lf.center if reference is None else reference
    states = {}
    traces = {}
    converged = True
    for key, corrs in sorted(corrs_per_view.items()):
        if tuple(key) == tuple(ref) or not corrs:
            continue
        res = estimate_motion(corrs, params)
        states[tuple(key)] = res.state
        traces[tuple(key)] = [res.initial_error] + res.errors
        converged &= res.converged
    length = max((len(t) for t in traces.values()), default=0)
    trace = [float(np.mean([t[min(i, len(t) - 1)] for t in traces.values()])) for i in range(length)]
    out = np.array(lf.samples)
    for (v, u), st in states.items():
        out[v, u] = np.clip(warp_image(lf.samples[v, u], st.h1), 0.0, 1.0)
    for v in range(lf.views_v):
        for u in range(lf.views_u):
            states.setdefault((v, u), identity_state())
    return ArrayAlignment(LightField4D(out), states, trace, converged)


# ---------------------------------------------------------------- correspondences I/O

def read_correspondences(path) -> list[Correspondence]:
    """Parse ``t p1 p2 p1' p2'`` lines; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise DataFormatError(f"line {lineno}: expected 5 fields, got {len(parts)}", path)
        try:
            t = int(parts[0])
            vals = [float(x) for x in parts[1:]]
            out.append(Correspondence((vals[0], vals[1]), (vals[2], vals[3]), t))
        except ValueError as e:
            raise DataFormatError(f"line {lineno}: {e}", path) from e
    return out


def write_correspondences(path, corrs) -> None:
    lines = [" ".join([str(int(c.patch_id))] + [repr(float(v)) for v in (*c.p, *c.p_prime)])
             for c in corrs]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_correspondence_dir(directory, views_u: int, views_v: int,
                            pattern: str = "corr_{index:03d}.txt") -> dict:
    """Read one correspondence file per view (row-major index); missing files are skipped."""
    directory = Path(directory)
    out = {}
    for v in range(views_v):
        for u in range(views_u):
            path = directory / pattern.format(index=v * views_u + u, u=u, v=v)
            if path.exists():
                out[(v, u)] = read_correspondences(path)
    return out


# ---------------------------------------------------------------- corner matching helper

def match_corners(reference: np.ndarray, target: np.ndarray, max_corners: int = 400,
                  patch: int = 7, search: int = 8, min_ncc: float = 0.9,
                  patch_labels: np.ndarray | None = None) -> list[Correspondence]:
    """Harris corners in ``reference`` matched into ``target`` by normalized cross-correlation.

    Each corner's ``patch x patch`` window is compared against every integer
    offset within ``search`` pixels; the best offset is refined to subpixel
    precision with a parabola fit per axis. ``patch_labels`` (ids >= 1) assigns
    corners to plane patches; by default everything is patch 1.
    """
    from skimage.feature import corner_harris, corner_peaks

    ref = _gray(reference)
    tgt = _gray(target)
    r = patch // 2
    margin = r + search + 1
    peaks = corner_peaks(corner_harris(ref), min_distance=3, num_peaks=max_corners,
                         exclude_border=margin)
    out = []
    for y, x in peaks:
        a = ref[y - r:y + r + 1, x - r:x + r + 1]
        a = a - a.mean()
        na = np.linalg.norm(a)
        if na < 1e-9:
            continue
        win = tgt[y - r - search:y + r + search + 1, x - r - search:x + r + search + 1]
        views = np.lib.stride_tricks.sliding_window_view(win, (patch, patch))
        b = views - views.mean(axis=(2, 3), keepdims=True)
        nb = np.linalg.norm(b, axis=(2, 3))
        with np.errstate(invalid="ignore", divide="ignore"):
            ncc = np.einsum("ijkl,kl->ij", b, a) / (na * nb)
        ncc = np.nan_to_num(ncc, nan=-1.0)
        iy, ix = np.unravel_index(np.argmax(ncc), ncc.shape)
        if ncc[iy, ix] < min_ncc:
            continue
        dy = _parabola_peak(ncc[:, ix], iy)
        dx = _parabola_peak(ncc[iy, :], ix)
        tid = 1 if patch_labels is None else int(patch_labels[y, x])
        if tid < 1:
            continue
        out.append(Correspondence((float(x), float(y)),
                                  (float(x + ix - search + dx), float(y + iy - search + dy)), tid))
    return out


def _parabola_peak(values, i):
    if i == 0 or i == len(values) - 1:
        return 0.0
    a, b, c = values[i - 1], values[i], values[i + 1]
    den = a - 2 * b + c
    return 0.0 if den >= 0 else float(0.5 * (a - c) / den)


def _gray(img):
    a = np.asarray(img, dtype=float)
    if a.ndim == 3:
        a = a[..., 0] if a.shape[2] == 1 else a @ np.array([0.299, 0.587, 0.114])
    return a

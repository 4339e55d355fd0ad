import numpy as np
import pytest

from lfdepth.alignment import (AlignParams, Correspondence, MotionState, align_array,
                               compose_patch_homography, dlt_homography, estimate_motion,
                               hartley_transform, initialize_state, load_correspondence_dir,
                               match_corners, normalize_homography, project, read_correspondences,
                               reprojection_error, solve_delta_normals, solve_global_motion,
                               state_reprojection_error, warp_image, write_correspondences)
from lfdepth.errors import DataFormatError, NumericalError
from lfdepth.lightfield import LightField4D
from lfdepth.synthetic import plane_correspondences, random_plane_motion, smooth_texture


def _truth_state(motion):
    return MotionState(motion.h1, motion.k, {i + 1: dn for i, dn in enumerate(motion.delta_normals)})


def _pts(corrs):
    return (np.array([c.p for c in corrs]), np.array([c.p_prime for c in corrs]))


def test_hartley_transform_centers_and_scales(rng):
    p = rng.uniform(0, 500, (40, 2))
    T = hartley_transform(p)
    q = p @ T[:2, :2].T + T[:2, 2]
    assert np.allclose(q.mean(axis=0), 0.0, atol=1e-12)
    assert np.linalg.norm(q, axis=1).mean() == pytest.approx(np.sqrt(2))


def test_dlt_is_exact_without_noise(rng):
    h = np.array([[1.02, 0.03, 5.0], [-0.01, 0.98, -3.0], [1e-5, -2e-5, 1.0]])
    p = rng.uniform(0, 400, (12, 2))
    assert np.allclose(dlt_homography(p, project(h, p)), h, atol=1e-9)


def test_normalize_homography_rejects_degenerate():
    with pytest.raises(NumericalError):
        normalize_homography(np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(NumericalError):
        normalize_homography(np.array([[1.0, 1, 0], [1, 1, 0], [0, 0, 1]]))


def test_model_homographies_reproduce_correspondences(rng):
    motion = random_plane_motion(3, rng)
    corrs = plane_correspondences(motion, 20, rng)
    assert state_reprojection_error(_truth_state(motion), corrs) < 1e-9


@pytest.mark.parametrize("normalize", [True, False])
def test_delta_normals_from_true_global_motion(rng, normalize):
    motion = random_plane_motion(3, rng)
    corrs = plane_correspondences(motion, 30, rng)
    truth = _truth_state(motion)
    start = MotionState(truth.h1, truth.k, {t: np.zeros(3) for t in truth.delta_normals})
    res = solve_delta_normals(start, corrs, normalize=normalize)
    for t, dn in truth.delta_normals.items():
        assert np.allclose(res.delta_normals[t], dn, rtol=1e-6, atol=1e-10)
    assert not res.degenerate and res.rank_deficient == []


@pytest.mark.parametrize("normalize", [True, False])
def test_global_motion_from_true_delta_normals(rng, normalize):
    motion = random_plane_motion(3, rng)
    corrs = plane_correspondences(motion, 30, rng)
    truth = _truth_state(motion)
    gm = solve_global_motion(truth.delta_normals, corrs, normalize=normalize)
    assert np.allclose(gm.h1, motion.h1, rtol=1e-6, atol=1e-9)
    assert np.allclose(gm.k, motion.k, rtol=1e-6, atol=1e-9)


def test_zero_k_is_flagged_degenerate(rng):
    motion = random_plane_motion(2, rng)
    corrs = plane_correspondences(motion, 10, rng)
    st = MotionState(motion.h1, np.zeros(3), {1: np.zeros(3), 2: np.ones(3)})
    res = solve_delta_normals(st, corrs)
    assert res.degenerate and np.all(res.delta_normals[2] == 0)


def test_unobservable_k_keeps_previous(rng):
    motion = random_plane_motion(1, rng)
    corrs = plane_correspondences(motion, 20, rng)
    prev = MotionState(np.eye(3), np.array([1.0, 2.0, 3.0]), {1: np.zeros(3)})
    gm = solve_global_motion({1: np.zeros(3)}, corrs, state=prev)
    assert np.array_equal(gm.k, prev.k)
    assert np.allclose(gm.h1, motion.h1, atol=1e-8)


def test_initialization_is_exact_without_noise(rng):
    motion = random_plane_motion(4, rng)
    corrs = plane_correspondences(motion, 25, rng)
    st = initialize_state(corrs)
    assert st.basis_patch == 1
    assert state_reprojection_error(st, corrs) < 1e-6


def test_alternation_converges_from_a_perturbed_start(rng):
    motion = random_plane_motion(3, rng)
    corrs = plane_correspondences(motion, 30, rng)
    truth = _truth_state(motion)
    h1 = truth.h1.copy()
    h1[:2, 2] += 2.0
    start = MotionState(h1, truth.k * 1.05, {t: dn * 0.9 for t, dn in truth.delta_normals.items()})
    # alternating least squares converges linearly, so ask for 1e-3 px only
    res = estimate_motion(corrs, AlignParams(threshold=1e-3, max_iter=200), init=start)
    assert res.converged
    assert res.errors[-1] < 1e-3 < res.initial_error
    assert state_reprojection_error(res.state, corrs) < 1e-3


def test_unreachable_threshold_warns_and_keeps_best(rng, caplog):
    motion = random_plane_motion(2, rng)
    corrs = plane_correspondences(motion, 20, rng, noise=1.0)
    res = estimate_motion(corrs, AlignParams(threshold=1e-9, max_iter=3))
    assert not res.converged
    assert "did not reach" in caplog.text
    best = min([res.initial_error] + res.errors)
    assert state_reprojection_error(res.state, corrs) == pytest.approx(best)


def test_input_validation():
    with pytest.raises(ValueError):
        Correspondence((0, 0), (1, 1), patch_id=0)
    with pytest.raises(ValueError):
        Correspondence((0, np.nan), (1, 1))
    with pytest.raises(ValueError):
        estimate_motion([Correspondence((0, 0), (0, 0))] * 3)
    with pytest.raises(ValueError):
        AlignParams(max_iter=0)
    with pytest.raises(ValueError):
        reprojection_error(np.eye(3), [])


def test_compose_unknown_patch():
    with pytest.raises(KeyError):
        compose_patch_homography(MotionState(np.eye(3), np.zeros(3), {1: np.zeros(3)}), 2)


# ---------------------------------------------------------------- warping / arrays

def test_warp_identity_is_exact_copy(rng):
    img = rng.random((6, 7))
    out = warp_image(img, np.eye(3))
    assert np.array_equal(out, img) and out is not img


def test_warp_integer_translation(rng):
    img = rng.random((10, 12, 3))
    h = np.array([[1.0, 0, 2], [0, 1, 1], [0, 0, 1]])
    out = warp_image(img, h)
    assert np.allclose(out[:-1, :-2], img[1:, 2:])


def test_align_array_undoes_view_translations():
    rng = np.random.default_rng(11)
    base = smooth_texture((60, 60), rng, sigma=2.0)
    samples = np.empty((1, 3, 40, 40, 1))
    shifts = {0: -3.0, 1: 0.0, 2: 4.0}
    grid = np.stack(np.mgrid[0:40, 0:40], -1).reshape(-1, 2)[:, ::-1].astype(float)
    corrs = {}
    for u, s in shifts.items():
        samples[0, u, :, :, 0] = base[10:50, 10 + int(s):50 + int(s)]
        if u != 1:
            pts = grid[rng.choice(len(grid), 30, replace=False)]
            # reference feature at x appears at x - s in view u
            corrs[(0, u)] = [Correspondence(tuple(p), (p[0] - s, p[1])) for p in pts]
    res = align_array(LightField4D(samples), corrs, AlignParams(threshold=1e-6), reference=(0, 1))
    assert res.converged
    ref = samples[0, 1, 8:-8, 8:-8, 0]
    for u in (0, 2):
        assert np.allclose(res.lightfield.samples[0, u, 8:-8, 8:-8, 0], ref, atol=1e-9)
    assert np.array_equal(res.states[(0, 1)].h1, np.eye(3))


# ---------------------------------------------------------------- files and matching

def test_correspondence_file_round_trip(tmp_path, rng):
    corrs = [Correspondence(tuple(rng.random(2)), tuple(rng.random(2)), int(t)) for t in (1, 2, 2)]
    write_correspondences(tmp_path / "corr_004.txt", corrs)
    back = read_correspondences(tmp_path / "corr_004.txt")
    assert back == corrs
    loaded = load_correspondence_dir(tmp_path, 3, 3)
    assert list(loaded) == [(1, 1)]


def test_bad_correspondence_line(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# header\n1 0 0 1 1\n1 2 3\n")
    with pytest.raises(DataFormatError, match="line 3"):
        read_correspondences(p)


def test_corner_matching_finds_subpixel_shift():
    rng = np.random.default_rng(12)
    tex = smooth_texture((120, 120), rng, sigma=1.5)
    from scipy import ndimage
    shifted = ndimage.shift(tex, (1.3, -2.4), order=3, mode="reflect")
    corrs = match_corners(tex[10:-10, 10:-10], shifted[10:-10, 10:-10])
    assert len(corrs) > 20
    p, q = _pts(corrs)
    d = np.median(q - p, axis=0)
    assert np.allclose(d, [-2.4, 1.3], atol=0.15)

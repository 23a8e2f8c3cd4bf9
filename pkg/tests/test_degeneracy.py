import numpy as np
import pytest

from consensus.core import EstimationModel, sampson_errors
from consensus.degeneracy import (DegeneracyReason, DegeneracyReport, degensac_check_and_recover,
                                  h_sample_defect, oriented_epipolar_check, validate_h_sample)
from consensus.solvers import solve_f_7pt
from conftest import K_DEFAULT, random_pose, two_view

SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)


def test_h_sample_checks():
    assert validate_h_sample(SQUARE, SQUARE * 3 + 5)
    mirrored = SQUARE[[1, 0, 3, 2]]
    assert h_sample_defect(SQUARE, mirrored) is DegeneracyReason.H_ORIENTATION_FLIP
    collinear = np.array([[0, 0], [1, 1], [2, 2], [0, 1]], float)
    assert h_sample_defect(collinear, SQUARE) is DegeneracyReason.H_COLLINEAR_SAMPLE


def _forward_scene(rng, n=7):
    R = np.eye(3)
    t = np.array([0.05, 0.02, 1.0])
    return two_view(rng, n, K=K_DEFAULT, R=R, t=t)


def test_oriented_check_true_model_passes(rng):
    p1, p2, F, _ = _forward_scene(rng)
    assert oriented_epipolar_check(EstimationModel("f", F), p1, p2)


def test_oriented_check_reflection_through_epipole_fails(rng):
    p1, p2, F, _ = _forward_scene(rng)
    U, _, _ = np.linalg.svd(F)
    e2 = U[:, 2] / U[2, 2]
    q = p2.copy()
    q[3] = 2 * e2[:2] - p2[3]  # same epipolar line, other side of the epipole
    assert sampson_errors(F, p1[3:4], q[3:4])[0] < 1e-6
    assert not oriented_epipolar_check(EstimationModel("f", F), p1, q)


def test_oriented_check_rank_one_fails(rng):
    p1, p2, _, _ = _forward_scene(rng)
    F = np.outer([1.0, 2.0, 3.0], [0.5, -1.0, 2.0])
    assert not oriented_epipolar_check(F, p1, p2)


def _plane_scene(rng, n_plane=60, n_off=40, noise=0.3):
    R, t = random_pose(rng, max_angle=0.15)
    xy = rng.uniform(-2, 2, size=(n_plane, 2))
    Xp = np.column_stack([xy, 6.0 + 0.2 * xy[:, 0] - 0.1 * xy[:, 1]])
    Xo = np.column_stack([rng.uniform(-2, 2, (n_off, 2)), rng.uniform(3, 12, n_off)])
    X = np.vstack([Xp, Xo])
    X2 = X @ R.T + t
    K = K_DEFAULT
    p1 = (X / X[:, 2:]) @ K.T
    p2 = (X2 / X2[:, 2:]) @ K.T
    return (p1[:, :2] + rng.normal(scale=noise, size=(len(X), 2)),
            p2[:, :2] + rng.normal(scale=noise, size=(len(X), 2)))


def test_plane_sample_detected_as_degenerate(rng):
    p1, p2 = _plane_scene(rng)
    sample = np.arange(7)
    models = solve_f_7pt(p1[sample], p2[sample])
    assert models
    for m in models:
        rep = degensac_check_and_recover(m, sample, p1, p2, 1.0, rng=np.random.default_rng(0))
        assert rep.degenerate and rep.reason is DegeneracyReason.F_DOMINANT_PLANE
        assert rep.plane_homography is not None


def test_plane_recovery_fits_off_plane_points(rng):
    p1, p2 = _plane_scene(rng)
    sample = np.arange(7)
    m = solve_f_7pt(p1[sample], p2[sample])[0]
    rep = degensac_check_and_recover(m, sample, p1, p2, 1.0, rng=np.random.default_rng(0))
    assert rep.recovered_model is not None
    assert np.median(sampson_errors(m, p1[60:], p2[60:])) > 2.0
    assert np.median(sampson_errors(rep.recovered_model, p1[60:], p2[60:])) < 1.0


def test_general_scene_rarely_degenerate():
    rng = np.random.default_rng(7)
    flagged = 0
    for _ in range(200):
        p1, p2, F, _ = two_view(rng, 7, K=K_DEFAULT)
        models = solve_f_7pt(p1, p2)
        m = min(models, key=lambda x: np.linalg.norm(x.m - F / np.linalg.norm(F) * np.sign(x.m.ravel() @ F.ravel())))
        flagged += degensac_check_and_recover(m, np.arange(7), p1, p2, 1.0).degenerate
    assert flagged <= 10


def test_report_invariant():
    with pytest.raises(ValueError):
        DegeneracyReport(False, recovered_model=EstimationModel("f", np.eye(3)))

import numpy as np
import pytest

from consensus.core import ModelKind, sampson_errors, transfer_errors
from consensus.solvers import (enforce_rank2, project_to_essential, refit_lsq, solve_e_5pt,
                               solve_f_7pt, solve_f_8pt, solve_h_4pt)
from conftest import K_DEFAULT, apply_h, random_pose, two_view, up_to_scale

H_KNOWN = np.array([[1, 0.2, 3], [0, 1.1, -2], [1e-4, 0, 1]])


def test_h_identity():
    p = np.array([[0, 0], [10, 0], [0, 10], [10, 10]], float)
    (m,) = solve_h_4pt(p, p)
    assert up_to_scale(m.m, np.eye(3)) < 1e-10
    assert np.max(transfer_errors(m, p, p)) < 1e-10


def test_h_known_matrix(rng):
    p1 = rng.uniform(0, 300, size=(4, 2))
    (m,) = solve_h_4pt(p1, apply_h(H_KNOWN, p1))
    assert np.max(transfer_errors(m, p1, apply_h(H_KNOWN, p1))) < 1e-8
    assert up_to_scale(m.m, H_KNOWN) < 1e-9


def test_h_collinear_sample_is_empty():
    p1 = np.array([[0, 0], [1, 1], [2, 2], [0, 5]], float)
    assert solve_h_4pt(p1, apply_h(H_KNOWN, p1)) == []


def test_f7_recovers_ground_truth(rng):
    for _ in range(20):
        p1, p2, F, _ = two_view(rng, 7, K=K_DEFAULT)
        models = solve_f_7pt(p1, p2)
        assert 1 <= len(models) <= 3
        best = min(models, key=lambda m: up_to_scale(m.m, F))
        assert up_to_scale(best.m, F) < 1e-6
        assert np.max(sampson_errors(best, p1, p2)) < 1e-8


def test_f7_three_root_instance_has_rank_two_models(rng):
    for _ in range(200):
        p1, p2, _, _ = two_view(rng, 7, K=K_DEFAULT)
        models = solve_f_7pt(p1, p2)
        if len(models) == 3:
            for m in models:
                assert abs(np.linalg.det(m.m)) < 1e-8
            return
    pytest.fail("no three-solution sample found")


def test_f7_duplicated_correspondence_does_not_crash(rng):
    p1, p2, _, _ = two_view(rng, 7, K=K_DEFAULT)
    p1[6], p2[6] = p1[5], p2[5]
    models = solve_f_7pt(p1, p2)
    assert len(models) <= 3


def test_f8_exact_and_noisy(rng):
    p1, p2, F, _ = two_view(rng, 8, K=K_DEFAULT)
    (m,) = solve_f_8pt(p1, p2)
    assert up_to_scale(m.m, F) < 1e-6
    assert abs(np.linalg.det(m.m)) < 1e-12
    p1, p2, F, _ = two_view(rng, 200, K=K_DEFAULT, noise=0.5)
    (m,) = solve_f_8pt(p1, p2)
    assert np.median(sampson_errors(m, p1, p2)) < 0.5


def test_f8_planar_scene_still_returns_a_model(rng):
    R, t = random_pose(rng)
    pts = rng.uniform(-2, 2, size=(20, 2))
    X = np.column_stack([pts, 6.0 + 0.1 * pts[:, 0]])
    X2 = X @ R.T + t
    p1 = X[:, :2] / X[:, 2:]
    p2 = X2[:, :2] / X2[:, 2:]
    assert len(solve_f_8pt(p1, p2)) == 1


def test_e5_recovers_ground_truth(rng):
    for _ in range(20):
        x1, x2, _, E = two_view(rng, 5)
        models = solve_e_5pt(x1, x2)
        assert 1 <= len(models) <= 10
        assert min(up_to_scale(m.m, E) for m in models) < 1e-6


def test_e5_pure_rotation_bounded(rng):
    R, _ = random_pose(rng)
    x1, x2, _, _ = two_view(rng, 5, R=R, t=np.zeros(3))
    models = solve_e_5pt(x1, x2)
    assert len(models) <= 10


def test_e5_models_satisfy_essential_constraints(rng):
    x1, x2, _, _ = two_view(rng, 5)
    for m in solve_e_5pt(x1, x2):
        E = m.m
        trace = 2 * E @ E.T @ E - np.trace(E @ E.T) * E
        assert np.max(np.abs(trace)) < 1e-6
        assert abs(np.linalg.det(E)) < 1e-8


def test_projection_to_essential():
    s = np.linalg.svd(project_to_essential(np.diag([3.0, 1.0, 0.1])), compute_uv=False)
    np.testing.assert_allclose(s, [2, 2, 0], atol=1e-12)


def test_rank2_enforcement(rng):
    F = enforce_rank2(rng.normal(size=(3, 3)))
    assert np.linalg.matrix_rank(F, tol=1e-10) == 2


@pytest.mark.parametrize("kind", ["h", "f", "e"])
def test_refit_exact_and_unit_weights(rng, kind):
    if kind == "h":
        p1 = rng.uniform(0, 300, size=(30, 2))
        p2 = apply_h(H_KNOWN, p1)
        gt = H_KNOWN
    else:
        p1, p2, F, E = two_view(rng, 30, K=K_DEFAULT if kind == "f" else None)
        gt = F if kind == "f" else E
    (m,) = refit_lsq(kind, p1, p2)
    assert up_to_scale(m.m, gt) < 1e-8
    (w,) = refit_lsq(kind, p1, p2, np.ones(30))
    np.testing.assert_allclose(w.m, m.m, atol=1e-12)
    assert m.kind is ModelKind.parse(kind)


@pytest.mark.parametrize("kind", ["h", "f", "e"])
def test_refit_too_few_points(rng, kind):
    assert refit_lsq(kind, rng.random((3, 2)), rng.random((3, 2))) == []

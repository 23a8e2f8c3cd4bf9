import math

import numpy as np
import pytest

from consensus.core import (Correspondence, CorrespondenceSet, DegenerateNormalizationError,
                            EstimationModel, Intrinsics, ModelKind, ModelKindError,
                            NonInvertibleHomographyError, ResidualFunction, h_transfer_error,
                            normalize_points, sampson_distance, sampson_errors, sgd_distance,
                            sgd_errors, transfer_errors)
from conftest import two_view

F_LINE = [[0, 0, 0], [0, 0, -1], [0, 1, 0]]


def _set(pts):
    return CorrespondenceSet(pts, pts, (10, 10))


def test_model_kind_sizes_and_aliases():
    assert ModelKind.parse("h") is ModelKind.HOMOGRAPHY
    assert ModelKind.parse("F") is ModelKind.FUNDAMENTAL
    assert ModelKind.parse("essential") is ModelKind.ESSENTIAL
    assert [k.minimal_sample_size for k in ModelKind] == [4, 7, 5]
    with pytest.raises(ValueError):
        ModelKind.parse("affine")


def test_correspondence_set_shapes_and_immutability():
    s = CorrespondenceSet([[1, 2], [3, 4]], [[5, 6], [7, 8]], (640, 480))
    assert len(s) == 2
    assert s[1] == Correspondence(3, 4, 7, 8)
    assert s.diagonal == pytest.approx(800.0)
    with pytest.raises(ValueError):
        s.pts1[0, 0] = 1.0
    with pytest.raises(ValueError):
        CorrespondenceSet([[1, 2]], [[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        CorrespondenceSet([[np.nan, 2]], [[1, 2]])


def test_estimation_model_unit_norm():
    m = EstimationModel("h", np.diag([2.0, 2.0, 1.0]))
    assert np.linalg.norm(m.m) == pytest.approx(1.0)


def test_normalization_already_canonical():
    _, T1, _ = normalize_points(_set([[1, 1], [-1, -1]]))
    np.testing.assert_allclose(T1, np.eye(3), atol=1e-15)


def test_normalization_square():
    data, T1, _ = normalize_points(_set([[0, 0], [2, 0], [0, 2], [2, 2]]))
    np.testing.assert_allclose(T1, [[1, 0, -1], [0, 1, -1], [0, 0, 1]], atol=1e-15)
    np.testing.assert_allclose(data.pts1.mean(axis=0), 0, atol=1e-15)
    assert np.mean(np.linalg.norm(data.pts1, axis=1)) == pytest.approx(math.sqrt(2))


def test_normalization_degenerate():
    with pytest.raises(DegenerateNormalizationError, match="degenerate normalization"):
        normalize_points(_set([[5, 5]] * 4))


def test_sampson_on_line_and_off_line():
    F = EstimationModel("f", F_LINE)
    assert sampson_distance(F, Correspondence(3, 2, 9, 2)) == 0.0
    # numerator -1, squared gradient norm 2
    assert sampson_distance(F, Correspondence(3, 2, 9, 3)) == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_sampson_zero_matrix_flags_inf():
    r = sampson_errors(np.zeros((3, 3)), [[1.0, 2.0]], [[3.0, 4.0]])
    assert r[0] == 0.0 or math.isinf(r[0])
    r = sampson_errors(np.array([[0, 0, 0], [0, 0, 0], [0, 0, 1e-30]]), [[1.0, 2.0]], [[3.0, 4.0]])
    assert math.isinf(r[0])


def test_sgd_hand_values():
    E = EstimationModel("e", F_LINE)
    assert sgd_distance(E, Correspondence(0.1, 0.2, 0.4, 0.2)) == pytest.approx(0.0, abs=1e-15)
    assert sgd_distance(E, Correspondence(0.1, 0.2, 0.4, 0.21)) == pytest.approx(
        math.hypot(0.01, 0.01), rel=1e-9)


def test_sgd_zero_on_synthetic_pose(rng):
    x1, x2, _, E = two_view(rng, 50)
    assert np.max(sgd_errors(E, x1, x2)) < 1e-10


def test_sgd_requires_epipolar_model():
    with pytest.raises(ModelKindError):
        sgd_distance(EstimationModel("h", np.eye(3)), Correspondence(0, 0, 0, 0))


def test_transfer_error_hand_values():
    assert h_transfer_error(EstimationModel("h", np.eye(3)), Correspondence(5, 7, 5, 7)) == pytest.approx(0.0, abs=1e-12)
    H = EstimationModel("h", np.diag([2.0, 2.0, 1.0]))
    assert h_transfer_error(H, Correspondence(1, 1, 2, 2)) == pytest.approx(0.0, abs=1e-15)
    # forward error 1 px, backward 0.5 px, RMS of the two
    assert h_transfer_error(H, Correspondence(1, 1, 2, 3)) == pytest.approx(math.sqrt(0.625), rel=1e-12)


def test_transfer_error_singular():
    H = np.array([[1.0, 0, 0], [0, 1, 0], [0, 0, 0]])
    with pytest.raises(NonInvertibleHomographyError):
        transfer_errors(H, [[1.0, 1.0]], [[1.0, 1.0]])
    with pytest.raises(NonInvertibleHomographyError):
        ResidualFunction(EstimationModel("h", H), np.zeros((1, 2)), np.zeros((1, 2)))


def test_residual_function_subsets_match_full(rng):
    p1, p2, F, _ = two_view(rng, 40, K=np.diag([500.0, 500.0, 1.0]), noise=1.0)
    fn = ResidualFunction(EstimationModel("f", F), p1, p2)
    idx = np.array([3, 1, 30])
    np.testing.assert_allclose(fn(idx), fn()[idx])


def test_intrinsics_normalize_inverts_k():
    K = np.array([[800.0, 0, 320], [0, 700, 240], [0, 0, 1]])
    intr = Intrinsics(K, K)
    s = CorrespondenceSet([[320.0, 240.0], [1120.0, 940.0]], [[320.0, 240.0], [320.0, 240.0]])
    n = intr.normalize(s)
    np.testing.assert_allclose(n.pts1, [[0, 0], [1, 1]], atol=1e-15)
    assert intr.mean_focal == pytest.approx(750.0)
    with pytest.raises(ValueError):
        Intrinsics(np.zeros((3, 3)), K)

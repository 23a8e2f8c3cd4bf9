import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.spatial.transform import Rotation

from consensus.core import skew

settings.register_profile("suite", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

K_DEFAULT = np.array([[800.0, 0.0, 320.0], [0.0, 800.0, 240.0], [0.0, 0.0, 1.0]])


def random_pose(rng, max_angle=0.3, baseline=1.0):
    R = Rotation.from_rotvec(rng.uniform(-max_angle, max_angle, size=3)).as_matrix()
    t = rng.normal(size=3)
    t *= baseline / np.linalg.norm(t)
    return R, t


def two_view(rng, n, K=None, noise=0.0, R=None, t=None):
    """Points in front of both cameras; returns pixel (or calibrated) coordinates and GT F, E."""
    if R is None:
        R, t = random_pose(rng)
    X = np.column_stack([rng.uniform(-2, 2, n), rng.uniform(-2, 2, n), rng.uniform(4, 10, n)])
    X2 = X @ R.T + t
    x1 = X[:, :2] / X[:, 2:]
    x2 = X2[:, :2] / X2[:, 2:]
    E = skew(t) @ R
    if K is None:
        return x1 + rng.normal(scale=noise, size=x1.shape), x2 + rng.normal(scale=noise, size=x2.shape), E, E
    p1 = x1 @ K[:2, :2].T + K[:2, 2]
    p2 = x2 @ K[:2, :2].T + K[:2, 2]
    Kinv = np.linalg.inv(K)
    F = Kinv.T @ E @ Kinv
    p1 = p1 + rng.normal(scale=noise, size=p1.shape)
    p2 = p2 + rng.normal(scale=noise, size=p2.shape)
    return p1, p2, F, E


def random_homography(rng):
    H = np.eye(3) + rng.normal(scale=0.1, size=(3, 3))
    H[2, :2] *= 1e-3
    H[:2, 2] = rng.uniform(-20, 20, size=2)
    return H


def apply_h(H, pts):
    h = np.column_stack([pts, np.ones(len(pts))]) @ H.T
    return h[:, :2] / h[:, 2:]


def up_to_scale(A, B):
    """Frobenius distance between unit-norm matrices, sign-aligned."""
    a = A / np.linalg.norm(A)
    b = B / np.linalg.norm(B)
    return min(np.linalg.norm(a - b), np.linalg.norm(a + b))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ---------------------------------------------------------------

ACCEPTANCE_LINES: list = []
SUITE_BUDGET_S = 300.0
_SESSION = {}


def verdict(name: str, ok: bool, detail: str) -> None:
    """Record and print one acceptance line, then fail the calling test if needed."""
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_sessionstart(session):
    _SESSION["start"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    elapsed = time.perf_counter() - _SESSION.get("start", time.perf_counter())
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    ok = elapsed < SUITE_BUDGET_S
    terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  suite runtime: {elapsed:.1f} s "
                                f"(limit {SUITE_BUDGET_S:.0f} s)")

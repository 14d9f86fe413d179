import numpy as np
import pytest

from mcdnn.dataset import Dataset

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def make_blobs(seed, n_per=200, sigma=0.05, dim=2, centers=None):
    rng = np.random.default_rng(seed)
    if centers is None:
        centers = np.zeros((4, dim))
        centers[:, :2] = [[0, 0], [1, 0], [0, 1], [1, 1]]
    centers = np.asarray(centers, dtype=float)
    y = np.repeat(np.arange(len(centers)), n_per)
    X = centers[y] + rng.normal(0.0, sigma, (len(y), centers.shape[1]))
    return X, y, centers


def tiny_dataset(n=60, seed=0, labels=None):
    rng = np.random.default_rng(seed)
    if labels is None:
        labels = np.arange(n) % 4
    dep = rng.uniform(0, 23, n)
    return Dataset(
        vehicle_id=[f"V{i % 5}" for i in range(n)],
        departure_time=dep,
        arrival_time=(dep + 0.5) % 24,
        start_soc=rng.uniform(10, 100, n),
        trip_distance=rng.uniform(0.5, 60, n),
        dest_category=rng.integers(0, 4, n),
        cum_distance_since_charge=rng.uniform(0, 200, n),
        label=labels,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

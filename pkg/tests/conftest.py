import csv

import numpy as np
import pytest

from congrec.data import SocialGraph, SparseRatings, UserPairMatrix


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def random_instance(rng, n, m, d, density=0.5, pair_density=0.4, signed=True):
    """Random ratings, factors and a symmetric pair matrix for kernel checks."""
    mask = rng.random((n, m)) < density
    mask[0, 0] = True
    u, i = np.nonzero(mask)
    R = SparseRatings(n, m, u, i, rng.integers(1, 6, size=len(u)))
    a, b = np.triu_indices(n, 1)
    keep = rng.random(len(a)) < pair_density
    w = rng.uniform(-1, 1, keep.sum()) if signed else rng.uniform(0, 1, keep.sum())
    L = UserPairMatrix.symmetric(n, a[keep], b[keep], w)
    U = rng.normal(size=(n, d))
    V = rng.normal(size=(m, d))
    return R, L, U, V


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle_graph():
    return SocialGraph(3, [(0, 1), (1, 2), (2, 0)])


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(name, ok, detail):
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[0].split("-")[1])):
            terminalreporter.write_line(line)

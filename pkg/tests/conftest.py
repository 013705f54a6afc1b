import numpy as np
import pytest

from viewsynth.core import PatchGridConfig, ShapeCollection, ViewSet


def make_collection(N=4, V=3, G=4, d=3, seed=0, data=None):
    """Small random collection on a grid of G = rows^2 patches (G must be a square)."""
    rows = int(round(G ** 0.5))
    assert rows * rows == G
    grid = PatchGridConfig(image_side=rows + 1, patch_side=2, stride=1)
    if data is None:
        data = np.random.default_rng(seed).random((N, V, G, d)).astype(np.float32)
    return ShapeCollection(data, tuple(f"s{i}" for i in range(len(data))),
                           ViewSet.uniform(data.shape[1]), grid)


@pytest.fixture
def small_collection():
    return make_collection()


@pytest.fixture(scope="session")
def chair_set():
    """24 chairlike shapes over 16 views, rendered once per test session."""
    from viewsynth.synthgen import build_synthetic_collection

    return build_synthetic_collection(24, "chairlike", seed=11)


ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

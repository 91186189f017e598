import numpy as np
import pytest

from eccstream.grid import Image, ValueKind


def random_image(rng, dims, kind=ValueKind.F32, n_values=None):
    """Random image; ``n_values`` distinct levels force ties."""
    dims = tuple(dims)
    if kind is ValueKind.U8:
        hi = 256 if n_values is None else n_values
        return Image(rng.integers(0, hi, dims).astype(np.uint8), kind)
    if n_values is None:
        data = rng.standard_normal(dims).astype(np.float32)
    else:
        levels = rng.standard_normal(n_values).astype(np.float32)
        data = levels[rng.integers(0, n_values, dims)]
    return Image(data, kind)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

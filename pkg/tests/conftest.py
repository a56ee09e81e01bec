import numpy as np
import pytest

from rlaug.dataset import ellipse_mask


def ellipse_pair(size=64, cx=20.0, cy=32.0, a=8.0, b=5.0, angle=0.3, seed=0):
    mask = ellipse_mask(size, cx, cy, a, b, angle)
    rng = np.random.default_rng(seed)
    image = np.clip(0.3 + 0.4 * mask + rng.normal(0, 0.05, mask.shape), 0, 1)
    return image, mask


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pair():
    return ellipse_pair()


# -- acceptance reporting ---------------------------------------------------

_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    Usage: ``criterion(number, name)`` then ``.check(ok, detail)``; the
    summary is printed at the end of the session.
    """
    class Recorder:
        def __call__(self, number, name):
            self.key = (number, name)
            _CRITERIA[self.key] = ("FAIL", "did not finish")
            return self

        def check(self, ok, detail):
            _CRITERIA[self.key] = ("PASS" if ok else "FAIL", detail)
            assert ok, f"criterion {self.key[0]} ({self.key[1]}): {detail}"

    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, name), (status, detail) in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"{status} [{number}] {name}: {detail}")

import numpy as np
import pytest


def checkerboard(h, w, period=4, lo=60.0, hi=180.0):
    """Periodic two-tone texture, shape (1, h, w)."""
    yy, xx = np.mgrid[0:h, 0:w]
    plane = np.where(((yy // period) + (xx // period)) % 2 == 0, lo, hi)
    return plane[None].astype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

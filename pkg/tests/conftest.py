import numpy as np
import pytest

from dexa_inspect.physics import PhantomSpec, bundled_curve, bundled_spectrum


@pytest.fixture(scope="session")
def spectra():
    return bundled_spectrum(40), bundled_spectrum(90)


@pytest.fixture(scope="session")
def muscle():
    return bundled_curve("muscle")


@pytest.fixture(scope="session")
def bone():
    return bundled_curve("bone")


def dome(shape=(64, 64), peak=4.0, seed=0, photons=1.0e5):
    """A single homogeneous cap centred in the frame."""
    h, w = shape
    return PhantomSpec(shape, [(h / 2, w / 2, 0.42 * h, 0.42 * w, peak)], photons=photons, seed=seed)


def square_image(size=32, side=8, value=10.0):
    img = np.zeros((size, size))
    lo = (size - side) // 2
    img[lo:lo + side, lo:lo + side] = value
    return img


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

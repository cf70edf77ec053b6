import numpy as np
import pytest

from resonlab.spectral import TorusGeometry, Potential, build_frame


@pytest.fixture(scope="session")
def frame_1d_5():
    return build_frame(TorusGeometry((2 * np.pi,), 32), Potential.zero(), 5)


@pytest.fixture(scope="session")
def frame_1d_9():
    return build_frame(TorusGeometry((2 * np.pi,), 32), Potential.zero(), 9)


@pytest.fixture(scope="session")
def frame_1d_9_cos():
    pot = Potential.from_cosines({1: 0.1}, dimension=1)
    return build_frame(TorusGeometry((2 * np.pi,), 32), pot, 9)


@pytest.fixture(scope="session")
def frame_2d_9():
    return build_frame(TorusGeometry((2 * np.pi, 2 * np.pi), 16), Potential.zero(), 9)


@pytest.fixture(scope="session")
def frame_2d_25():
    return build_frame(TorusGeometry((2 * np.pi, 2 * np.pi), 16), Potential.zero(), 25)

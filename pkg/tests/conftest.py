import numpy as np
import pytest

from mrendo import integrate_forward, load_config
from mrendo.config import control_frame


@pytest.fixture(scope="session")
def table1():
    return load_config()


@pytest.fixture(scope="session")
def base():
    return control_frame()


@pytest.fixture(scope="session", autouse=True)
def warm_kernel(table1, base):
    # First call pays the JIT compile; keep it out of timed assertions.
    integrate_forward(base, np.zeros(3), np.zeros(3), table1.rod)


def random_rotation(rng) -> np.ndarray:
    # QR of a Gaussian matrix, sign-fixed to det +1.
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q

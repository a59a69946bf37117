import numpy as np
import pytest

from subsvr.kernels import KernelSpec
from subsvr.svr import SvrConfig, svr_fit


@pytest.fixture(scope="session", autouse=True)
def warm_numba():
    """Compile the jitted solver paths once so timed tests measure the math."""
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(12, 2))
    r = rng.normal(size=12)
    for eps in (0.0, 0.1):
        svr_fit(Z, r, SvrConfig(epsilon=eps, cost=2.0, kernel=KernelSpec(family="linear"), tolerance=1e-8))
    svr_fit(Z, r, SvrConfig(epsilon=0.01, cost=5.0, kernel=KernelSpec(gamma=0.5, offset=1.0, degree=2)))

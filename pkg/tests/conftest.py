import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", max_examples=60, deadline=None, derandomize=True)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def point_clouds(min_n=4, max_n=12, min_k=1, max_k=3):
    """Well-spread float clouds; coordinates bounded to keep covariances sane."""

    @st.composite
    def build(draw):
        k = draw(st.integers(min_k, max_k))
        n = draw(st.integers(max(min_n, k + 2), max_n))
        seed = draw(st.integers(0, 2**32 - 1))
        return np.random.default_rng(seed).standard_normal((n, k))

    return build()


@st.composite
def pds_matrices(draw, k=None, cond_max=1e3):
    k = k or draw(st.integers(1, 4))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    lam = np.exp(rng.uniform(0, np.log(cond_max), k))
    return (Q * lam) @ Q.T


small_floats = arrays(np.float64, st.integers(1, 6), elements=st.floats(-100, 100))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

seeds = st.integers(min_value=0, max_value=2**32 - 1)
probs = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
dims = st.integers(min_value=2, max_value=5)


def rng_from(seed):
    return np.random.default_rng(seed)


@st.composite
def amplitudes(draw):
    """Normalized (alpha, beta) pair."""
    theta = draw(st.floats(min_value=0.0, max_value=np.pi / 2))
    phi_a = draw(st.floats(min_value=0.0, max_value=2 * np.pi))
    phi_b = draw(st.floats(min_value=0.0, max_value=2 * np.pi))
    a = complex(np.cos(theta) * np.exp(1j * phi_a))
    b = complex(np.sin(theta) * np.exp(1j * phi_b))
    norm = np.sqrt(abs(a) ** 2 + abs(b) ** 2)
    return a / norm, b / norm


@pytest.fixture
def rng():
    return np.random.default_rng(20260101)

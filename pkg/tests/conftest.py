import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def make_sine():
    """Factory for a mono sine waveform (float64, peak 0.5)."""

    def _make(freq_hz=440.0, seconds=1.0, rate=32000, amp=0.5):
        t = np.arange(int(round(seconds * rate))) / rate
        return amp * np.sin(2 * np.pi * freq_hz * t)

    return _make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

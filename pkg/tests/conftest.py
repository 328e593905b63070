import numpy as np
import pytest

from freqmix_kd.audio_io import Waveform


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sine(freq_hz, n=16000, amp=0.5, fs=16000, utt_id="sine"):
    t = np.arange(n) / fs
    return Waveform(amp * np.sin(2 * np.pi * freq_hz * t), fs, utt_id)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[n])

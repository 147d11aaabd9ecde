import numpy as np
import pytest

from dirfocus.dataset.synth import SynthConfig, speech_like_source, synth_generate


def broadband_source(rng, n, fs=8000.0):
    """White noise band-limited to the scanner's band, unit power."""
    x = rng.standard_normal(n)
    return x / x.std()


def harmonic_source(rng, f0, n, fs=8000.0):
    return speech_like_source(rng, f0, n, fs)


@pytest.fixture(scope="session")
def small_trials():
    """5 subjects x 14 trials (one per direction), 3 s, with spectra."""
    cfg = SynthConfig(n_subjects=5, trials_per_subject=14, trial_seconds=3.0, eeg_pattern="side")
    return synth_generate(cfg, rng_seed=3)


@pytest.fixture(scope="session")
def roster_trials():
    """21 x 32 roster without audio rendering, for split tests."""
    cfg = SynthConfig(n_subjects=21, trials_per_subject=32, trial_seconds=1.0, render_audio=False)
    return synth_generate(cfg, rng_seed=0)


def pytest_terminal_summary(terminalreporter):
    import sys

    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance") and getattr(mod, "RESULTS", None):
            terminalreporter.section("acceptance criteria")
            for k in sorted(mod.RESULTS):
                terminalreporter.write_line(mod.RESULTS[k])

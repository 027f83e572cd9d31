import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from jrcsim import waveform  # noqa: E402

# criterion number -> PASS/FAIL line, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@functools.lru_cache(maxsize=None)
def paper_pulse(seed: int = 42, pmi: float = 0.7):
    cfg = waveform.preset("paper").with_pmi(pmi)
    return (cfg,) + waveform.transmit_pulse(cfg, seed)


@functools.lru_cache(maxsize=None)
def desk_pulse(seed: int = 42, pmi: float = 0.7):
    cfg = waveform.preset("desk").with_pmi(pmi)
    return (cfg,) + waveform.transmit_pulse(cfg, seed)


@pytest.fixture(scope="session")
def paper_cfg():
    return waveform.preset("paper")


@pytest.fixture(scope="session")
def desk_cfg():
    return waveform.preset("desk")

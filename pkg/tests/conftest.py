import os
from pathlib import Path

import numpy as np
import pytest

from pola.datasets import Segment, gen_synthetic
from pola.driver import PretrainConfig, prepare

ROOT = Path(__file__).resolve().parents[1]
SUNSPOT_FILE = Path(os.environ.get("POLA_SUNSPOT_FILE", ROOT / "data" / "SN_m_tot_V2.0.txt"))
POWER_FILE = Path(os.environ.get("POLA_POWER_FILE", ROOT / "data" / "household_power_consumption.txt"))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def drift_series():
    segs = [Segment(260, (0.9,), 0.2, 0.0), Segment(160, (0.6,), 0.2, 1.5), Segment(160, (0.95,), 0.2, -0.5)]
    return gen_synthetic(segs, seed=3)


@pytest.fixture(scope="session")
def small_prep(drift_series):
    """Short pre-training on a drifting AR series; shared by driver tests."""
    cfg = PretrainConfig(num_samples=150, epochs=20, lr=0.1, batch_size=32)
    return prepare(drift_series, 8, 2, "RNN", seed=1, cfg=cfg, hidden_units=4)

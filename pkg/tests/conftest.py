from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from itimap.classifier import Dataset, stratified_split, train_tree
from itimap.scene import BurstLedger, Technology
from itimap.simulation import default_dataset

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# Lines emitted by tests/test_acceptance.py, echoed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_ledger(events, horizon=1_000_000) -> BurstLedger:
    """Ledger from (emitter_id, tech, t_start, duration, center, bandwidth, tx) tuples."""
    events = sorted(events, key=lambda e: (e[2], e[0]))
    if not events:
        return BurstLedger.empty(horizon)
    cols = list(zip(*events))
    return BurstLedger(
        horizon,
        np.array(cols[0], dtype=np.int64),
        np.array([int(Technology.parse(t)) for t in cols[1]], dtype=np.int64),
        np.array(cols[2], dtype=np.int64),
        np.array(cols[3], dtype=np.int64),
        np.array(cols[4], dtype=float),
        np.array(cols[5], dtype=float),
        np.array(cols[6], dtype=float),
    )


@pytest.fixture(scope="session")
def default_rows():
    rows, summary = default_dataset(42)
    return rows, summary


@pytest.fixture(scope="session")
def default_data(default_rows) -> Dataset:
    return Dataset.from_rows(default_rows[0])


@pytest.fixture(scope="session")
def default_split(default_data):
    return stratified_split(default_data, 0.7, 42)


@pytest.fixture(scope="session")
def map_model(default_data):
    """The CLI's map classifier: CT(s = 20) on the full default dataset."""
    return train_tree(default_data, 20, 42)

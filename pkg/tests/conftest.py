from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spectra.model import ObservationSet, OutputAlphabet, ReferenceData

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


def make_obs(refs: dict, labels=("a", "b", "c", "d"), names=None) -> ObservationSet:
    """ObservationSet from {name: (features, outputs)}."""
    references = tuple(
        ReferenceData(name, np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)) for name, (x, y) in refs.items()
    )
    d = references[0].features.shape[1]
    return ObservationSet(references, OutputAlphabet(labels), tuple(names or (f"x{i}" for i in range(d))))


ACCEPTANCE: list[str] = []


def record(number: int, title: str, ok: bool, detail: str = "") -> None:
    """Log one acceptance line and fail the calling test when ``ok`` is false."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

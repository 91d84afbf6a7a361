import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from relnb.harness import SynthConfig, fit_pipeline, generate_synthetic  # noqa: E402


@pytest.fixture(scope="session")
def synthetic_fit():
    """A pipeline fitted on a small planted-signal dataset, with its flat table."""
    ds = generate_synthetic(SynthConfig(n=600, p=6, d=6, shift=1.5, missing=0.05), seed=11)
    fitted = fit_pipeline(ds, q=150, seed=3)
    return ds, fitted, fitted.flatten(ds)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

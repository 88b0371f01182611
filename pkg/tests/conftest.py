import warnings

import pytest

from kposim import gate
from kposim.fock import TruncationWarning


@pytest.fixture(autouse=True)
def _quiet_truncation():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        yield


@pytest.fixture(scope="session")
def setup():
    """Two-KPO circuit at 10 and 11 GHz with P = 4K, g/2pi = 10 MHz."""
    return gate.standard_setup()


@pytest.fixture(scope="session")
def small_setup():
    """Same circuit at a reduced Fock dimension for fast gate checks."""
    return gate.standard_setup(dims=(16, 16))


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL verdict per acceptance criterion."""
    verdicts = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number: int, passed: bool, detail: str) -> None:
        verdicts[number] = (passed, detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash.get(_ACCEPTANCE, {})
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        passed, detail = verdicts[number]
        terminalreporter.write_line(f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}")

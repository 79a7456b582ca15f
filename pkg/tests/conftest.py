import numpy as np
import pytest

from farmtfp.synthetic import DgpConfig, generate

_CRITERIA: dict[str, tuple[bool, str]] = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    """Store one acceptance verdict; reprinted in the terminal summary."""
    prev = _CRITERIA.get(criterion)
    if prev is not None:
        ok = ok and prev[0]
        detail = f"{prev[1]}; {detail}"
    _CRITERIA[criterion] = (ok, detail)
    print(f"{criterion}: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda s: int(s.split()[-1])):
        ok, detail = _CRITERIA[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def small_panel():
    return generate(DgpConfig(N=300, T=8, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)

import pytest
from _reference import CRYSTAL_LENGTH, PUMP_WAISTS, WAVELENGTH

from biphoton.states import spdc_from_experiment


@pytest.fixture(scope="session")
def experiment_states():
    return [spdc_from_experiment(c, CRYSTAL_LENGTH, WAVELENGTH) for c in PUMP_WAISTS]


@pytest.fixture(scope="session")
def spdc_base():
    return spdc_from_experiment(1e-4, CRYSTAL_LENGTH, WAVELENGTH)


def pytest_terminal_summary(terminalreporter):
    from _acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        ok, detail = RESULTS[number]
        terminalreporter.write_line(f"CRITERION {number:2d} {'PASS' if ok else 'FAIL'}: {detail}")

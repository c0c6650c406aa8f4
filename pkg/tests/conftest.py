import warnings

import pytest

from lanegraph.scene import build_layout, load_library

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS[criterion] = (bool(passed), detail)


@pytest.fixture(scope="session")
def acceptance_record():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture(scope="session")
def library():
    return load_library()


@pytest.fixture(scope="session")
def four_way():
    return build_layout({"id": "fw", "generator": "n_way", "params": {"arms": 4}})


@pytest.fixture(scope="session")
def straight():
    return build_layout({"id": "st", "generator": "straight"})


@pytest.fixture(scope="session")
def straight_oneway():
    return build_layout({"id": "st1", "generator": "straight", "params": {"one_way": True}})


@pytest.fixture(scope="session")
def fork():
    return build_layout({"id": "fk", "generator": "fork", "params": {"branch_angles": [-30, 30]}})


@pytest.fixture(autouse=True)
def _quiet_runtime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        yield

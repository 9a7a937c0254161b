import pytest

from plap.eigen import first_eigenpair
from plap.mesh import build_mesh


@pytest.fixture(scope="session")
def unit_interval_512():
    return build_mesh("interval(0,1)", 512)


@pytest.fixture(scope="session")
def eig_512(unit_interval_512):
    return first_eigenpair(unit_interval_512, 2.0)


# acceptance lines are collected here and printed after the run, so they
# appear in the output even when stdout is captured
_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_line():
    def record(number: int, title: str, clauses: dict[str, tuple[bool, str]]) -> bool:
        ok = all(passed for passed, _ in clauses.values())
        detail = "; ".join(
            f"{name}={'ok' if passed else 'FAIL'} ({info})"
            for name, (passed, info) in clauses.items()
        )
        line = f"criterion {number} [{title}]: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)

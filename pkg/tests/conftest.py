import pytest

from wnoc_sim import SimConfig

# acceptance criterion id -> (passed, detail), filled by test_acceptance
CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    CRITERIA[number] = (passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def small_cfg():
    return SimConfig(num_nodes=16, measure_cycles=4000, seed=7).replace(injection_rate=0.02)


def trace_file(tmp_path, rows, name="arrivals.csv"):
    path = tmp_path / name
    path.write_text("cycle,src,dst\n" + "".join(f"{c},{s},{d}\n" for c, s, d in rows))
    return str(path)

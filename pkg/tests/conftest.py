import pytest

from neurosteer.pcwp import GainSchedule
from neurosteer.pretrain import pretrain


@pytest.fixture(scope="session")
def pretrained():
    """Default pre-training result, computed once per session."""
    return pretrain(GainSchedule.default())


@pytest.fixture(scope="session")
def weights_file(pretrained, tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "weights.json"
    pretrained.save(path)
    return path


AC_LINES: list[str] = []


@pytest.fixture
def ac_report():
    """Record one acceptance line; all lines are repeated in the terminal summary."""

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        AC_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if AC_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(AC_LINES, key=lambda s: int(s.split()[0].split("-")[1])):
            terminalreporter.write_line(line)

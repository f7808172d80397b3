import contextlib
import time

import pytest

_RESULTS: dict[int, tuple[str, str, str]] = {}


class CriterionRecorder:
    """Record one PASS/FAIL line per acceptance criterion."""

    def __init__(self):
        self.notes: dict[int, list[str]] = {}

    def note(self, number: int, text: str) -> None:
        self.notes.setdefault(number, []).append(text)

    @contextlib.contextmanager
    def check(self, number: int, title: str):
        start = time.perf_counter()
        self.notes.setdefault(number, [])
        try:
            yield self
        except BaseException as exc:
            detail = "; ".join(self.notes[number] + [f"{type(exc).__name__}: {exc}".splitlines()[0]])
            _RESULTS[number] = ("FAIL", title, f"{detail} ({time.perf_counter() - start:.1f}s)")
            raise
        detail = "; ".join(self.notes[number])
        _RESULTS[number] = ("PASS", title, f"{detail} ({time.perf_counter() - start:.1f}s)")


@pytest.fixture(scope="session")
def criterion():
    return CriterionRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title, detail = _RESULTS[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}: {detail}")

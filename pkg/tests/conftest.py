from __future__ import annotations

import pytest

ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_log(request) -> dict:
    return request.config.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE, None)
    if not results:
        return
    from test_acceptance import CRITERIA

    terminalreporter.section("acceptance criteria")
    for number, (title, _) in sorted(CRITERIA.items()):
        outcome = results.get(number)
        if outcome is None:
            terminalreporter.write_line(f"NOT RUN  {number:2d}. {title}")
        else:
            passed, detail = outcome
            terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}     {number:2d}. {title}: {detail}")

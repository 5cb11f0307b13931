"""Acceptance criteria AC-1..AC-8; each test prints its pass/fail line."""

import pytest

from blockrl.acceptance import CRITERIA, run_criteria

RESULT_LINES: list[str] = []


@pytest.mark.slow
@pytest.mark.parametrize("name", list(CRITERIA))
def test_criterion(name):
    (result,) = run_criteria([name])
    line = result.line()
    RESULT_LINES.append(line)
    print(line)
    assert result.passed, line

"""Acceptance suite: one test per criterion.

Each test prints its verdict line; the lines are also repeated in the
terminal summary so they appear even when output capture is on.
"""

import pytest

from bdsym import validation

VERDICTS: list[str] = []


@pytest.mark.parametrize("number", sorted(validation.CRITERIA))
def test_criterion(number):
    verdict = validation.run_criterion(number)
    print(verdict.line())
    VERDICTS.append(verdict.line())
    assert verdict.passed, verdict.detail

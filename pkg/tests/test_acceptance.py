"""The ten acceptance criteria, one test each.

Each test prints a single PASS/FAIL line; the lines are also collected
into an "acceptance criteria" section of the pytest terminal summary.
"""

import pytest

from regmc.validation import CHECKS, run_check


@pytest.mark.parametrize("number", sorted(CHECKS), ids=[f"criterion{n}" for n in sorted(CHECKS)])
def test_criterion(number, request):
    result = run_check(number)
    print(result.line())
    request.config.acceptance_lines.append(result.line())
    assert result.passed, result.line()

"""Every acceptance criterion at its stated size and tolerance.

One pass/fail line per criterion is printed in the terminal summary.
"""

import pytest

from wigner_limit.acceptance import CRITERIA

from .conftest import VERDICTS

SEED = 0


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    v = CRITERIA[number](seed=SEED)
    VERDICTS[number] = v.line()
    print(VERDICTS[number])
    assert v.passed, v.line()

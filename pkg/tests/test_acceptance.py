"""Reproduction criteria at their stated tolerances and time budgets.

Each criterion prints one PASS/FAIL line (also when pytest captures output).
"""
import pytest

from finsler.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"{c.number:02d}-{c.title.replace(' ', '-')}" for c in CRITERIA])
def test_criterion(criterion, capsys):
    outcome = run_criterion(criterion)
    with capsys.disabled():
        print("\n" + outcome.line())
    assert outcome.passed, outcome.detail
    assert outcome.within_budget, f"took {outcome.seconds:.1f} s, budget {outcome.budget:g} s"

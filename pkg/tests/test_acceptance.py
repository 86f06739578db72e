"""One test per acceptance criterion; each reports a PASS/FAIL line in the run summary."""
import pytest

from collapse_kaon.validation import CRITERIA, run_criterion

REPORT: list[str] = []


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    result = run_criterion(number)
    status = "PASS" if result.passed else "FAIL"
    REPORT.append(f"[{status}] criterion {number}: {result.name} ({result.elapsed:.1f} s) "
                  f"-- {result.detail}")
    assert result.passed, result.detail

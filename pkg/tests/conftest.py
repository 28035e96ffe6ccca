import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import helpers  # noqa: E402


def pytest_runtest_logreport(report):
    """One visible PASS/FAIL line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    detail = helpers.ACCEPTANCE_DETAILS.get(name, "")
    outcome = "PASS" if report.passed else "FAIL"
    suffix = f"  ({detail})" if detail and report.passed else ""
    sys.stderr.write(f"\nACCEPTANCE {outcome}: {name}{suffix}\n")
    sys.stderr.flush()

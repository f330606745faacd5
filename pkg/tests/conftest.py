import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, folding multi-part checks."""
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    parts = {}
    for criterion, part, ok, detail in mod.RESULTS:
        parts.setdefault(criterion, []).append((part, ok, detail))
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(parts):
        ok = all(p[1] for p in parts[criterion])
        detail = "; ".join(f"{p[0]}: {'ok' if p[1] else 'FAILED'}, {p[2]}" for p in parts[criterion])
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}")

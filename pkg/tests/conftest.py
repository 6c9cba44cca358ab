import numpy as np
import pytest

from helpers import ACCEPTANCE


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name}: {'ok' if good else 'failed'} ({d})" if d else
                           f"{name}: {'ok' if good else 'failed'}" for name, good, d in parts)
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")

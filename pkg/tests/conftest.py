import pytest

ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """``criterion(k, ok, detail)`` records one check of acceptance item ``k``."""

    def record(k: int, ok: bool, detail: str) -> None:
        ACCEPTANCE.setdefault(k, []).append((bool(ok), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[k]
        ok = all(c[0] for c in checks)
        detail = "; ".join(f"{'ok' if c[0] else 'FAIL'}: {c[1]}" for c in checks)
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'} | {detail}")

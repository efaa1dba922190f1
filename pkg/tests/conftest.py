"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from semiwtc.data import Column, RawTable, Schema


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_schema() -> Schema:
    return Schema(
        columns=[
            Column("dur", "numeric", log_transform=True),
            Column("rate", "numeric"),
            Column("proto", "categorical"),
            Column("label", "label"),
        ],
        keep_labels=["normal", "scan"],
        merged_label_name="other",
    )


def tiny_table() -> RawTable:
    schema = tiny_schema()
    rows = [
        ["1.0", "0.5", "tcp", "normal"],
        ["2.0", "1.5", "udp", "scan"],
        ["0.0", "-1.0", "tcp", "normal"],
        ["9.0", "2.0", "icmp", "weird"],
    ]
    return RawTable(schema, rows, list(range(len(rows))))


def finite_difference(f, x, eps=1e-3):
    """Central finite-difference gradient of scalar f at array x (float64)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[i] += eps
        xm[i] -= eps
        grad[i] = (f(xp) - f(xm)) / (2 * eps)
        it.iternext()
    return grad


def max_rel_error(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


# --- acceptance-criteria verdict collection -------------------------------

ACCEPTANCE_VERDICTS: list[tuple[int, str]] = []


def record_verdict(criterion: int, ok: bool, detail: str) -> None:
    """Register one PASS/FAIL line for an acceptance criterion and assert it."""
    line = f"CRITERION {criterion:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_VERDICTS.append((criterion, line))
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_VERDICTS):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from stampseg.core import FeatureSequence, TimestampAnnotation

ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        doc = report.user_properties and dict(report.user_properties).get("criterion")
        if doc:
            ACCEPTANCE_RESULTS[doc] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split(".")[0])):
        terminalreporter.write_line(f"[{ACCEPTANCE_RESULTS[name]}] {name}")


@pytest.fixture
def criterion(record_property):
    """Tag an acceptance test so its pass/fail line is printed in the summary."""
    def tag(name: str):
        record_property("criterion", name)
    return tag


def random_instance(rng: np.random.Generator, T: int, D: int, N: int, C: int | None = None):
    tau = np.sort(rng.choice(T, N, replace=False))
    C = C or max(N, 2)
    classes = [int(rng.integers(C))]
    for _ in range(N - 1):
        c = int(rng.integers(C - 1))
        classes.append(c if c < classes[-1] else c + 1)
    x = rng.standard_normal((T, D))
    return FeatureSequence(x), TimestampAnnotation(tau, classes, C)


def two_block(T1=5, T2=5, D=3, seed=0):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(D), rng.standard_normal(D) + 3
    x = np.vstack([np.tile(a, (T1, 1)), np.tile(b, (T2, 1))])
    return FeatureSequence(x), TimestampAnnotation([T1 // 2, T1 + T2 // 2], [0, 1], 2)

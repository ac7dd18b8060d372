import re

CRITERIA = {
    1: "oracle equivalence",
    2: "attention pipeline",
    3: "convolution example",
    4: "translation equivariance",
    5: "law suite",
    6: "autoalignment",
    7: "hypergraph",
    8: "serialization",
    9: "diagrams",
}

_outcomes: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(n, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        results = _outcomes.get(n)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(r == "passed" for r in results) else "FAIL"
        terminalreporter.write_line(f"criterion {n} ({title}): {status}")

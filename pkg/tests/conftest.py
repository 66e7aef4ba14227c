import re

CRITERIA = {
    1: "GLM oracle equivalence",
    2: "graph recovery",
    3: "false-edge control",
    4: "AIC ordering",
    5: "interaction-GLM recovery and scenario delta",
    6: "AUC correctness",
    7: "predictive ordering and org holdout",
    8: "scheduler invariants",
    9: "skew analytics",
    10: "filters and outcomes",
    11: "end-to-end reproducibility",
}

_NAME = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_results: dict = {}


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _results.setdefault(int(m.group(1)), {})[m.group(2)] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        parts = _results.get(n)
        if not parts:
            tr.write_line(f"criterion {n:2d} NOT RUN  {title}")
            continue
        ok = all(v == "passed" for v in parts.values())
        failed = [k for k, v in parts.items() if v != "passed"]
        detail = "" if ok else f"  (failed: {', '.join(failed)})"
        tr.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}     {title}{detail}")

import re


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        m = re.match(r"test_criterion_(\d+)", name)
        if not m:
            return
        detail = "; ".join(f"{k}={v}" for k, v in report.user_properties)
        _ACCEPTANCE[name] = (int(m.group(1)), report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, (num, outcome, detail) in sorted(_ACCEPTANCE.items(), key=lambda kv: (kv[1][0], kv[0])):
        status = "PASS" if outcome == "passed" else "FAIL"
        tr.write_line(f"{status} criterion {num:2d} {name}" + (f" [{detail}]" if detail else ""))

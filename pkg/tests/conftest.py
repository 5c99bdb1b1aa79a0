_verdicts = {}


def pytest_runtest_logreport(report):
    for key, value in report.user_properties:
        if key == "acceptance":
            # the call phase may record before teardown; keep the latest
            _verdicts[value[0]] = value


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for title in sorted(_verdicts, key=lambda t: int(t.split()[0])):
        _, ok, detail, dt = _verdicts[title]
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {title} [{dt:.1f} s]: {detail}")

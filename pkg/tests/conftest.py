"""Collects acceptance-criterion outcomes and prints one line per criterion."""

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    _results[props["criterion"]] = (props.get("title", ""), report.outcome, props.get("measured", ""))


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            number, title = m.args
            item.user_properties.append(("criterion", number))
            item.user_properties.append(("title", title))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        title, outcome, measured = _results[n]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        line = f"[{verdict}] {n:>2}. {title}"
        if measured:
            line += f"  ({measured})"
        tr.write_line(line)

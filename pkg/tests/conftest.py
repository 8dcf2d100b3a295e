from acceptance_runs import VERDICTS


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(VERDICTS):
        items = VERDICTS[n]
        failed = [f"{label}: {detail}" for label, ok, detail in items if not ok]
        verdict = "FAIL" if failed else "PASS"
        summary = f"criterion {n}: {verdict} ({len(items) - len(failed)}/{len(items)} checks passed)"
        if len(items) == 1:
            summary += f": {items[0][2]}"
        tr.write_line(summary)
        for line in failed:
            tr.write_line(f"    failed: {line}")

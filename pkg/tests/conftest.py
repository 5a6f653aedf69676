import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).parent))

import acceptance_log  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid, parts in acceptance_log.RESULTS.items():
        ok = all(p[1] for p in parts)
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {cid}  {acceptance_log.TITLES[cid]}")
        for part, pok, detail in parts:
            tr.write_line(f"        {'ok  ' if pok else 'FAIL'} {part}: {detail}")

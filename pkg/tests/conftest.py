"""Collects the acceptance-gate outcomes and prints one line per criterion.

Tests named test_criterion_<N> (see test_acceptance.py) are tracked through
every phase, so a fixture blow-up shows as a FAIL rather than vanishing.
Tests may attach a short note to their line via acceptance_note().
"""

import re

_MATCH = re.compile(r"test_criterion_(\d+)")

DESCRIPTIONS = {
    1: "architecture space totals match their closed-form values",
    2: "analytic gradients match central finite differences on random models",
    3: "proxy scores reproduce hand-computed toy values; HVP within 1e-3",
    4: "synflow ignores data, survives sign flips, equals its _bn alias",
    5: "ranking metrics agree with brute-force enumeration on random tables",
    6: "same config twice: byte-identical score tables, reports; no re-appends",
    7: "zero-variance noise evaluation equals the noiseless correlations",
    8: "desk-scale run scores in time, trains, and passes its quality gates",
    9: "the full-size search protocol is expressible and samples at defaults",
}

_outcomes: dict[int, str] = {}
_notes: dict[int, list[str]] = {}


def acceptance_note(criterion: int, text: str) -> None:
    _notes.setdefault(criterion, []).append(text)


def pytest_runtest_logreport(report):
    m = _MATCH.search(report.nodeid)
    if not m:
        return
    num = int(m.group(1))
    if report.when == "call":
        _outcomes[num] = "PASS" if report.passed else "FAIL"
    elif report.failed:  # setup or teardown error
        _outcomes[num] = "FAIL"
    elif report.when == "setup" and report.skipped:
        _outcomes[num] = "SKIP"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_outcomes):
        terminalreporter.write_line(
            f"acceptance criterion {num}: {_outcomes[num]} - "
            f"{DESCRIPTIONS.get(num, '')}")
        for note in _notes.get(num, ()):
            terminalreporter.write_line(f"    {note}")

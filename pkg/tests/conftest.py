import re

import pytest

from storagemix.scenario import load_scenario


@pytest.fixture(scope="session")
def woest():
    return load_scenario("woest")


@pytest.fixture(scope="session")
def west():
    return load_scenario("west")


@pytest.fixture(scope="session")
def profiles(woest):
    return woest.profiles()


@pytest.fixture(scope="session")
def woest_dataset(woest, profiles):
    from storagemix.dispatch import results_frame, simulate_many
    from storagemix.doe import build_design, decode

    spec = woest.design_spec()
    X = decode(build_design(spec).coded, spec)
    return results_frame(woest, X, simulate_many(woest, X, profiles))


_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, in criterion order."""
    final = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if m and getattr(rep, "when", None) in ("setup", "call"):
                n = int(m.group(1))
                if rep.when == "call" or n not in final:
                    final[n] = rep
    if not final:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(final):
        rep = final[n]
        line = dict(rep.user_properties).get("criterion")
        if line is None:
            line = f"criterion {n} {rep.outcome.upper()}  ({rep.when} of {rep.nodeid.split('::')[-1]})"
        elif rep.failed:
            line = line.replace(" PASS ", " FAIL ", 1)
        terminalreporter.write_line(line)

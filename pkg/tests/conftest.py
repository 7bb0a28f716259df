import pytest

CRITERIA = {
    1: "gradient/Hessian vs finite differences",
    2: "contact and friction properties",
    3: "energy release linear in eps",
    4: "snap symmetry and asymmetry",
    5: "normalised mass cross-check",
    6: "mounting-height curve",
    7: "parameter trends",
    8: "surrogate accuracy (desk scale)",
    9: "inverse design end to end",
    10: "ray cast vs winding number",
}


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture(scope="session")
def acceptance(request):
    """Record ``(passed, detail)`` per criterion number for the end-of-run summary."""
    return request.config._acceptance


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k, name in CRITERIA.items():
        if k in results:
            ok, detail = results[k]
            tr.write_line(f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
        else:
            tr.write_line(f"criterion {k:2d} NOT RUN  {name}")

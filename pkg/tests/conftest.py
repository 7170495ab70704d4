import warnings

import pytest

from ezmfg import (
    HjbOptions,
    ModelParams,
    ProductionParams,
    build_grid,
    closed_form_measure,
    solve_equilibrium,
    solve_hjb,
)

# (gamma, psi, solver mode) of the reference runs
CASES = {
    "test1": (2.0, 0.8, "permissive"),
    "test2": (2.0, 0.4, "strict"),
    "test3": (4.0, 0.4, "permissive"),
    "test4": (1.2, 0.4, "strict"),
    "crra": (2.0, 0.5, "permissive"),
}


def case_params(name):
    gamma, psi, mode = CASES[name]
    return ModelParams(gamma=gamma, psi=psi), HjbOptions(mode=mode)


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def prod():
    return ProductionParams()


@pytest.fixture(scope="session")
def grid2000():
    return build_grid(-0.15, 15.0, 2000, "sqrt-boundary")


@pytest.fixture(scope="session")
def equilibria(grid2000, prod):
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name in CASES:
            p, opts = case_params(name)
            out[name] = solve_equilibrium(p, prod, grid2000, hjb_opts=opts)
    return out


@pytest.fixture(scope="session")
def test2_eq(equilibria):
    return equilibria["test2"]


@pytest.fixture(scope="session")
def test2_sol(test2_eq):
    return test2_eq.solution


@pytest.fixture(scope="session")
def test2_measure(test2_sol):
    return closed_form_measure(test2_sol)


@pytest.fixture(scope="session")
def far_field_sol(params):
    grid = build_grid(-0.15, 200.0, 128000, "none")
    return solve_hjb(params, params.rho, grid)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

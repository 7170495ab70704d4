import warnings

import numpy as np
import pytest
from crra_oracle import solve_crra

from ezmfg.hjb_solver import (
    BACKWARD,
    FORWARD,
    INDETERMINATE,
    S2_NEGATIVE,
    S2_POSITIVE,
    BadGrid,
    HjbOptions,
    NoConvergence,
    assert_qualitative,
    boundary_saving_classifier,
    build_grid,
    hjb_residual,
    solve_hjb,
    stability_in_r,
)
from ezmfg.model_core import DomainError, ModelParams, optimal_consumption


@pytest.fixture(scope="module")
def sol_0246(params, grid2000):
    return solve_hjb(params, 0.0246, grid2000)


def test_build_grid_uniform():
    g = build_grid(-0.15, 15, 1000, "none")
    assert len(g) == 1001
    np.testing.assert_allclose(np.diff(g.nodes), 0.01515, rtol=1e-12)


def test_build_grid_clustered():
    g = build_grid(-0.15, 15, 1000, "sqrt-boundary")
    assert len(g) == 1001
    assert g.nodes[0] == -0.15 and g.nodes[-1] == pytest.approx(15.0)
    assert g.spacing[0] < 15.15 / 1000
    assert np.all(g.spacing > 0)


@pytest.mark.parametrize("args", [(-0.15, 15, 10), (1.0, 0.5, 1000), (-0.15, 15, 1000, "cubic")])
def test_build_grid_rejects(args):
    with pytest.raises(BadGrid):
        build_grid(*args)


def test_reference_solve_passes_invariants(sol_0246):
    assert sol_0246.residual < 1e-8
    rep = assert_qualitative(sol_0246)
    assert rep.passed, str(rep)


def test_residual_contract(sol_0246):
    s = sol_0246
    res = hjb_residual(s.v, s.c, s.s, s.dv, s.r, s.params)
    assert np.max(np.abs(res)) == pytest.approx(s.residual)


def test_consumption_first_order_condition(sol_0246):
    s = sol_0246
    for j in range(2):
        for branch in (FORWARD, BACKWARD):
            k = s.branch[j] == branch
            if k.any():
                c = optimal_consumption(s.v[j, k], s.dv[j, k], s.params)
                np.testing.assert_allclose(s.c[j, k], c, rtol=1e-12)


def test_crra_matches_independent_solver():
    p = ModelParams(gamma=2.0, psi=0.5)
    g = build_grid(-0.15, 15, 1000, "none")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = solve_hjb(p, 0.028, g, HjbOptions(mode="permissive", tol=1e-11))
    v, c, s = solve_crra(g.nodes, 0.028, p.y, p.lam, p.rho, p.gamma)
    assert np.max(np.abs(sol.v - v)) < 1e-6
    assert np.max(np.abs(sol.s - s)) < 1e-6


def test_saving_positive_at_rho(params, grid2000):
    sol = solve_hjb(params, params.rho, grid2000)
    # the last node carries the zero-saving closure of the grid
    assert np.all(sol.s[1, :-1] > 0)
    assert sol.s[1, -1] == pytest.approx(0.0, abs=1e-12)


def test_grid_refinement_first_order(params):
    vs = {}
    for n in (500, 1000, 2000):
        vs[n] = solve_hjb(params, 0.0246, build_grid(-0.15, 15, n, "none")).v
    d1 = np.max(np.abs(vs[500] - vs[1000][:, ::2]))
    d2 = np.max(np.abs(vs[1000] - vs[2000][:, ::2]))
    assert 0.3 < d2 / d1 < 0.7


def test_classifier_at_rho(params):
    assert boundary_saving_classifier(params, params.rho) == S2_POSITIVE


def test_classifier_consistent_with_solve(params, sol_0246):
    cls = boundary_saving_classifier(params, 0.0246)
    if cls == S2_POSITIVE:
        assert sol_0246.s[1, 0] > 0
    elif cls == S2_NEGATIVE:
        assert np.all(sol_0246.s[1, 1:] < 0)
    else:
        assert cls == INDETERMINATE


def test_classifier_negative_region():
    p = ModelParams(y=(0.49, 0.5), lam=(0.4, 0.05))
    assert boundary_saving_classifier(p, 0.005) == S2_NEGATIVE
    sol = solve_hjb(p, 0.005, build_grid(-0.15, 15, 1000, "sqrt-boundary"))
    assert np.all(sol.s[1, 1:] < 0)
    assert sol.s[1, 0] <= 0


def test_qualitative_test4(equilibria):
    rep = assert_qualitative(equilibria["test4"].solution)
    assert rep.passed, str(rep)


def test_qualitative_detects_swapped_values(sol_0246):
    from dataclasses import replace

    bad = replace(sol_0246, v=sol_0246.v[::-1].copy())
    rep = assert_qualitative(bad)
    assert "v2_above_v1" in rep.failures()


def test_curvature_blows_up_at_limit(params):
    g = build_grid(-0.15, 15, 500, "sqrt-boundary")
    sol = solve_hjb(params, 0.0246, g)
    rep = assert_qualitative(sol, refinements=[500, 1000, 2000])
    assert rep.checks["curvature_diverges_at_limit"], rep.details["first_cell_curvature"]


def test_stability_in_r(params):
    g = build_grid(-0.15, 15, 1000, "sqrt-boundary")
    a = stability_in_r(params, [0.02, 0.021], g)[0]
    b = stability_in_r(params, [0.02, 0.0205], g)[0]
    assert 0.3 <= b["dv"] / a["dv"] <= 0.7
    same = stability_in_r(params, [0.02, 0.02], g)[0]
    assert same["dv"] == 0.0 and same["ds"] == 0.0


def test_no_convergence_is_reported(params, grid2000):
    with pytest.raises(NoConvergence) as exc:
        solve_hjb(params, 0.0246, grid2000, HjbOptions(max_iter=2))
    assert exc.value.iterations == 2


def test_rate_domain(params, grid2000):
    with pytest.raises(DomainError):
        solve_hjb(params, 0.06, grid2000)
    with pytest.raises(DomainError):
        solve_hjb(params, 0.0, grid2000)

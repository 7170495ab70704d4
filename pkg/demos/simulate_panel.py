"""Simulate a panel of agents at the equilibrium rate and compare with the stationary measure."""
import time

from ezmfg import ModelParams, ProductionParams, build_grid, closed_form_measure, solve_equilibrium
from ezmfg.mc_simulator import SimConfig, compare, simulate


def main(n_agents=100_000):
    grid = build_grid(-0.15, 15.0, 2000, "sqrt-boundary")
    res = solve_equilibrium(ModelParams(), ProductionParams(), grid)
    m = closed_form_measure(res.solution)
    t0 = time.perf_counter()
    emp = simulate(res.solution, SimConfig(n_agents=n_agents, seed=12345))
    rep = compare(emp, m)
    print(f"r* = {res.r_star:.6f}, {n_agents} agents in {time.perf_counter() - t0:.1f}s")
    print(f"KS per state: {rep['ks'][0]:.4f} {rep['ks'][1]:.4f}")
    print(f"mass at the limit: model {m.mu[0]:.5f}, panel {emp.boundary_fraction[0]:.5f}")


if __name__ == "__main__":
    main()

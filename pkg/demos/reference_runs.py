"""Solve the five bundled equilibria and print a table of r*, K and timings."""
import time
import warnings

from ezmfg import HjbOptions, ModelParams, ProductionParams, build_grid, solve_equilibrium

CASES = {
    "test1": (2.0, 0.8, "permissive"),
    "test2": (2.0, 0.4, "strict"),
    "test3": (4.0, 0.4, "permissive"),
    "test4": (1.2, 0.4, "strict"),
    "crra": (2.0, 0.5, "permissive"),
}


def main():
    grid = build_grid(-0.15, 15.0, 2000, "sqrt-boundary")
    prod = ProductionParams()
    print(f"{'case':<6} {'gamma':>5} {'psi':>5} {'r*':>10} {'K':>8} {'iters':>5} {'secs':>6}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, (gamma, psi, mode) in CASES.items():
            t0 = time.perf_counter()
            res = solve_equilibrium(ModelParams(gamma=gamma, psi=psi), prod, grid, hjb_opts=HjbOptions(mode=mode))
            dt = time.perf_counter() - t0
            print(f"{name:<6} {gamma:5.2f} {psi:5.2f} {res.r_star:10.6f} {res.K:8.4f} {res.iterations:5d} {dt:6.1f}")


if __name__ == "__main__":
    main()

import numpy as np

from ezmfg.hjb_solver import HjbSolution


def fake_solution(grid, params, s):
    """Solution stub carrying only a prescribed saving policy."""
    n = len(grid)
    z = np.zeros((2, n))
    return HjbSolution(grid=grid, params=params, r=0.02, v=z - 1.0, dv=z + 1.0, dv_centered=z + 1.0,
                       c=z + 0.1, s=np.asarray(s, dtype=float), branch=z.astype(int), residual=0.0,
                       iterations=0)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = []


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok

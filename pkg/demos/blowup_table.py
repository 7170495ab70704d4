"""Capital supply as the rate approaches the discount rate.

On a wide grid the supply stays finite but grows quickly; on the default
grid of width 15 the wealth distribution reaches the right edge and the
supply is reported as infinite.
"""
from ezmfg import ModelParams, build_grid
from ezmfg.equilibrium import blowup_diagnostic

RATES = [0.030, 0.035, 0.040, 0.045, 0.048]


def main():
    p = ModelParams()
    wide = blowup_diagnostic(p, RATES, build_grid(-0.15, 400.0, 20000, "sqrt-boundary"))
    small = blowup_diagnostic(p, RATES, build_grid(-0.15, 15.0, 2000, "sqrt-boundary"))
    print(f"{'r':>6} {'K (x_max=400)':>14} {'K (x_max=15)':>13}")
    for (r, k_w), (_, k_s) in zip(wide, small):
        print(f"{r:6.3f} {k_w:14.4f} {k_s:13.4f}")


if __name__ == "__main__":
    main()

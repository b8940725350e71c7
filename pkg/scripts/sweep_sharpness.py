"""Sharpness study: deform a sphere radially and watch the af1 ratio lift off.

For rho = 1 + eps * a * u3 (u3 = unit normal z-component, degree-1 mode) the
inequality is tight at eps = 0 and the gap should grow like eps^2. Prints a
table of ratio, gap, and gap/eps^2, plus the worst convexity-cone margin so
we can tell how far from the cone boundary each shape sits.
"""

import argparse

import numpy as np

from otiso import transport, verify
from otiso.geometry import DomainSpec


def run(eps_values, coeff, order):
    print(f"# af1 sharpness, mode coeff {coeff}, quad order {order}")
    print(f"{'eps':>8} {'ratio':>18} {'gap':>12} {'gap/eps^2':>12} "
          f"{'cone_min':>9}")
    for eps in eps_values:
        if eps == 0.0:
            spec = DomainSpec.ball(3, 1.0)
            p = transport.closed_form_potential(spec)
        else:
            spec = DomainSpec.radial_graph(
                3, 1.0, ((eps * coeff, (0, 0, 1)),), convex=True)
            p = None
        r = verify.check_af1(spec, p, order=order)
        gap = r.ratio - 1.0
        rate = gap / eps**2 if eps > 0 else float("nan")
        print(f"{eps:8.3f} {r.ratio:18.12f} {gap:12.3e} {rate:12.3e} "
              f"{min(r.cone_margins):9.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps-max", type=float, default=0.3)
    ap.add_argument("--steps", type=int, default=13)
    ap.add_argument("--coeff", type=float, default=0.3)
    ap.add_argument("--quad-order", type=int, default=24)
    args = ap.parse_args()
    run(np.linspace(0.0, args.eps_max, args.steps), args.coeff,
        args.quad_order)


if __name__ == "__main__":
    main()

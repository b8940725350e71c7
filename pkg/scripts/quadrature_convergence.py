"""Spectral convergence of the boundary quadrature and the identity residuals.

The product Gauss-Legendre x trapezoid grid converges spectrally on smooth
surfaces. This script tracks, as the order doubles, (a) the ellipsoid surface
measure against a high-order reference, and (b) the integral identities that
the verification chain relies on (recursion residuals, Codazzi, divergence
totals). Residuals should fall off exponentially until they hit roundoff.
"""

import argparse

import numpy as np

from otiso import geometry, transport, verify
from otiso.geometry import DomainSpec


def run(axes, orders, ref_order):
    spec = DomainSpec.ellipsoid(axes)
    p = transport.closed_form_potential(spec)
    ref_grid = geometry.boundary_quadrature(spec, ref_order)
    area_ref = float(np.sum(ref_grid.weights))
    print(f"# ellipsoid {axes}, reference order {ref_order}, "
          f"area {area_ref:.12f}")
    print(f"{'order':>6} {'area_err':>10} {'jk1':>10} {'wsr0':>10} "
          f"{'codazzi':>10} {'div_delta':>10}")
    for order in orders:
        grid = geometry.boundary_quadrature(spec, order)
        fields = verify.boundary_fields(grid, p)
        area_err = abs(float(np.sum(grid.weights)) - area_ref) / area_ref
        jk1 = verify.Jk_recursion_residual(fields, grid, k=1)
        wsr0 = verify.weighted_sigma2_recursion_residual(fields, grid, k=0)
        cod = verify.codazzi_residual(fields, grid)
        div_delta, _ = verify.divergence_totals(fields, grid)
        print(f"{order:6d} {area_err:10.2e} {jk1:10.2e} {wsr0:10.2e} "
              f"{cod:10.2e} {abs(div_delta):10.2e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--axes", default="1,1.5,2")
    ap.add_argument("--orders", default="24,48,96,192")
    ap.add_argument("--ref-order", type=int, default=256)
    args = ap.parse_args()
    axes = tuple(float(a) for a in args.axes.split(","))
    orders = [int(o) for o in args.orders.split(",")]
    run(axes, orders, args.ref_order)


if __name__ == "__main__":
    main()

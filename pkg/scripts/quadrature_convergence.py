"""Consistency sweep of the jump quadrature on I[cos](0) against the symbol.

Prints the error table over spacing and fractional order; errors should fall
under each halving of hx.
"""

import numpy as np

import nlhjb as nl
from nlhjb.oracles import fractional_laplacian_reference
from nlhjb.quadrature import apply_quadrature_pointwise


def main():
    u = lambda x: np.cos(np.asarray(x, float)[..., 0])
    print(f"{'s':>5} {'hx':>10} {'I[cos](0)':>14} {'error':>10}")
    for s in (0.6, 0.75, 0.9):
        kern = nl.fractional_laplacian_constant(1, s) / 2.0
        ref = fractional_laplacian_reference("cos", 0.0, s)
        for k in (5, 6, 7, 8):
            hx = 2.0**-k
            q = nl.build_quadrature((1, hx, 4.0), s, 64.0)
            val = apply_quadrature_pointwise(q, u, np.zeros(1), kern)
            print(f"{s:5.2f} {hx:10.6f} {val:14.8f} {abs(val - ref):10.2e}")
        print()


if __name__ == "__main__":
    main()

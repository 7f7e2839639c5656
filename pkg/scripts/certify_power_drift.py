"""Fit the Foster-Lyapunov envelope for the power-law family.

Evaluates sup over controls of the generator on V across the grid, fits
(k0, k1) with h(x) = k1 |x|^(theta+gamma-1), and shows the flipped-drift twin
failing certification.
"""

import numpy as np

import nlhjb as nl


def main():
    gamma, theta, s = 1.6, 0.1, 0.9
    grid = nl.build_grid(1, 0.25, 32.0)
    q = nl.build_quadrature(grid, s, 64.0)

    for sign, label in ((-1.0, "inward drift"), (+1.0, "outward drift")):
        p = nl.power_drift_problem(gamma, theta, 1, s, drift_sign=sign)
        values = nl.evaluate_lyapunov_drift(p, grid, q)
        cert = nl.fit_envelope(values, p.lyapunov, grid)
        print(f"{label}: ok={cert.ok}  k0={cert.k0:.4f}  k1={cert.k1:.4f}  "
              f"violations={len(cert.violations)}  "
              f"worst margin={cert.worst_margin:.4f}")
        r = grid.radii()
        for xv in (0.0, 1.0, 4.0, 16.0, 32.0):
            i = int(np.argmin(np.abs(r - xv)))
            print(f"    sup L[V]({grid.nodes[i, 0]:+6.2f}) = {values[i]:+9.4f}")


if __name__ == "__main__":
    main()

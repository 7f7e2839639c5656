"""Quadrature of the symmetric jump operator I[u](x) = ∫ δ(u,x,y) k(x,y) |y|^{-d-2s} dy.

Discretisation layout, shared by every operator in the package:

* lattice offsets ``y_j = hx * z``, ``z != 0``, ``|y_j| <= R_far`` carry the
  measure mass of their midpoint cell (exact cell integrals in 1-d, refined
  sub-cell sums near the singularity in 2-d, plain midpoint far out);
* the singular cell around the origin plus a second-moment correction inside
  the regularisation radius ``r0`` are folded into one nearest-neighbour
  second-difference coefficient per axis (``axis_coeff``), which keeps the
  scheme exact on quadratics over the ball ``|y| <= r0``;
* the mass beyond ``R_far`` is lumped: the closed-form tail of the measure is
  applied to exterior data probed at the tail mass-centroid radius
  ``R_far * 2s/(2s-1)`` along each axis.

All weights are nonnegative; ``axis_coeff`` may be negative but the combined
weight on the nearest neighbours stays positive (checked at build time), so
assembled stencils are monotone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad as _quad
from scipy.special import gamma as _gamma

__all__ = [
    "JumpQuadrature",
    "build_quadrature",
    "fractional_laplacian_constant",
    "apply_quadrature_pointwise",
]

_SURFACE = {1: 2.0, 2: 2.0 * np.pi}


def fractional_laplacian_constant(d: int, s: float) -> float:
    """Normalisation C(d,s) with (-Δ)^s e^{i ξ·x} = |ξ|^{2s} e^{i ξ·x}."""
    return float(4.0**s * _gamma(d / 2.0 + s) * s / (np.pi ** (d / 2.0) * _gamma(1.0 - s)))


@dataclass(frozen=True, eq=False)
class JumpQuadrature:
    """Precomputed offsets, weights and corrections for one (d, hx, s, R_far)."""

    d: int
    hx: float
    s: float
    R_far: float
    reg_radius: float
    half_lattice: np.ndarray   # (M, d) int, one representative per {y, -y} pair
    half_offsets: np.ndarray   # (M, d) float = hx * half_lattice
    pair_weights: np.ndarray   # (M,) mass of cell(+y) + cell(-y), >= 0
    axis_coeff: float          # second-difference coefficient per axis
    tail_mass: float           # ∫_{|y| > R_far} |y|^{-d-2s} dy
    tail_probe_radius: float   # mass centroid of the tail

    @property
    def n_offsets(self) -> int:
        return self.half_offsets.shape[0]

    def offset_norms(self) -> np.ndarray:
        return np.linalg.norm(self.half_offsets, axis=1)


def _half_lattice(d: int, kmax: int) -> np.ndarray:
    """Lattice vectors z with z > 0 lexicographically (one per ± pair)."""
    if d == 1:
        return np.arange(1, kmax + 1, dtype=np.int64).reshape(-1, 1)
    rng = np.arange(-kmax, kmax + 1, dtype=np.int64)
    a, b = np.meshgrid(rng, rng, indexing="ij")
    z = np.stack([a.ravel(), b.ravel()], axis=1)
    pos = (z[:, 0] > 0) | ((z[:, 0] == 0) & (z[:, 1] > 0))
    return z[pos]


def _cell_masses_1d(y: np.ndarray, hx: float, s: float, R_far: float):
    lo = y - hx / 2.0
    hi = np.minimum(y + hx / 2.0, R_far)
    hi[np.argmax(y)] = R_far  # outermost cell absorbs the ragged boundary
    mass = (lo ** (-2 * s) - hi ** (-2 * s)) / (2 * s)
    secm = (hi ** (2 - 2 * s) - lo ** (2 - 2 * s)) / (2 - 2 * s)
    return mass, secm


def _origin_cell_second_moment_2d(hx: float, s: float) -> float:
    """∫_{cell0} y_1² |y|^{-2-2s} dy over the square of side hx, in polar form.

    Equals half of ∫_{cell0} |y|^{-2s} dy by the square's symmetry; the radial
    integral is closed-form, leaving one regular angular quadrature.
    """
    ang, _ = _quad(lambda phi: np.cos(phi) ** (2 * s - 2.0), 0.0, np.pi / 4.0,
                   epsabs=1e-13, epsrel=1e-13)
    total = 8.0 * (0.5 * hx) ** (2 - 2 * s) / (2 - 2 * s) * ang
    return 0.5 * total


def _subcell_quads_2d(centers: np.ndarray, hx: float, s: float, q: int):
    """Refined mass and axis second moments of square cells centred at ``centers``."""
    t = (np.arange(q) + 0.5) / q - 0.5
    sx, sy = np.meshgrid(t * hx, t * hx, indexing="ij")
    sub = np.stack([sx.ravel(), sy.ravel()], axis=1)        # (q*q, 2)
    pts = centers[:, None, :] + sub[None, :, :]             # (n, q*q, 2)
    r2 = np.sum(pts**2, axis=2)
    dens = r2 ** (-(2 + 2 * s) / 2.0)
    area = (hx / q) ** 2
    mass = dens.sum(axis=1) * area
    secm = (pts**2 * dens[:, :, None]).sum(axis=1) * area   # (n, 2)
    return mass, secm


def build_quadrature(grid_or_params, s: float, R_far: float,
                     reg_radius: float | None = None) -> JumpQuadrature:
    """Build the jump quadrature for a grid (or a ``(d, hx, R)`` tuple).

    Requires ``s in (1/2, 1)`` and ``R_far >= R + 1`` so that every exterior
    point reachable from the interior is covered by explicit offsets.
    """
    if hasattr(grid_or_params, "hx"):
        d, hx, R = grid_or_params.d, grid_or_params.hx, grid_or_params.R
    else:
        d, hx, R = grid_or_params
    if not (0.5 < s < 1.0):
        raise ValueError(f"fractional order s={s} outside (1/2, 1)")
    if R_far < R + 1.0:
        raise ValueError(f"R_far={R_far} < grid radius + 1 = {R + 1.0}")

    if reg_radius is None:
        reg_radius = max(2 * hx, min(2.0, R_far / 4.0))
    r0 = float(reg_radius)

    kmax = int(np.floor(R_far / hx + 1e-12))
    z = _half_lattice(d, kmax)
    y = z.astype(float) * hx
    norms = np.linalg.norm(y, axis=1)
    keep = norms <= R_far * (1.0 + 1e-12)
    z, y, norms = z[keep], y[keep], norms[keep]
    order = np.lexsort(tuple(z[:, c] for c in range(d - 1, -1, -1)))
    z, y, norms = z[order], y[order], norms[order]

    if d == 1:
        mass, secm1 = _cell_masses_1d(norms, hx, s, R_far)
        pair_weights = 2.0 * mass
        inside = norms <= r0
        # exact second moment over |y| <= r0 (both signs), minus the cell around 0
        core = 2.0 * (hx / 2.0) ** (2 - 2 * s) / (2 - 2 * s)
        covered = 2.0 * np.sum(secm1[inside])
        second_exact = core + covered
        quad_second = np.sum(pair_weights[inside] * norms[inside] ** 2)
        axis_coeff = (second_exact - quad_second) / hx**2
    else:
        chebnorm = np.max(np.abs(z), axis=1)
        refine = max(int(np.ceil(r0 / hx)) + 1, 6)
        mass = hx**2 * norms ** (-(2 + 2 * s))
        secm = (mass[:, None] * y**2)
        near = chebnorm <= refine
        fine = chebnorm <= 1
        if np.any(near & ~fine):
            m16, s16 = _subcell_quads_2d(y[near & ~fine], hx, s, 16)
            mass[near & ~fine] = m16
            secm[near & ~fine] = s16
        if np.any(fine):
            m64, s64 = _subcell_quads_2d(y[fine], hx, s, 64)
            mass[fine] = m64
            secm[fine] = s64
        pair_weights = 2.0 * mass
        inside = norms <= r0
        if np.any(inside & (chebnorm > refine)):
            raise AssertionError("regularisation radius exceeds the refined band")
        second_exact = (_origin_cell_second_moment_2d(hx, s)
                        + 2.0 * np.sum(secm[inside, 0]))
        quad_second = np.sum(pair_weights[inside] * y[inside, 0] ** 2)
        axis_coeff = (second_exact - quad_second) / hx**2

    tail_mass = _SURFACE[d] / (2 * s) * R_far ** (-2 * s)
    probe = R_far * 2 * s / (2 * s - 1.0)

    q = JumpQuadrature(
        d=d, hx=hx, s=s, R_far=R_far, reg_radius=r0,
        half_lattice=z, half_offsets=y, pair_weights=pair_weights,
        axis_coeff=float(axis_coeff), tail_mass=float(tail_mass),
        tail_probe_radius=float(probe),
    )
    _check_monotone_neighbours(q)
    return q


def _check_monotone_neighbours(q: JumpQuadrature) -> None:
    """The axis correction must not overpower the nearest-neighbour weight."""
    for axis in range(q.d):
        e = np.zeros(q.d, dtype=np.int64)
        e[axis] = 1
        j = np.flatnonzero(np.all(q.half_lattice == e, axis=1))
        if j.size != 1:
            raise AssertionError("nearest axis offset missing from quadrature")
        if q.pair_weights[j[0]] + q.axis_coeff < 0:
            raise AssertionError(
                f"axis correction {q.axis_coeff} breaks monotonicity on axis {axis}"
            )


def apply_quadrature_pointwise(q: JumpQuadrature, u, x, kernel,
                               tail_mode: str = "zero_data") -> float:
    """Evaluate the discrete jump operator at one point with exact field values.

    ``u`` is a callable taking (n, d) arrays; ``kernel`` is a constant or a
    callable ``k(x, y)`` broadcasting over the offset axis.  ``tail_mode``:
    ``"zero_data"`` treats data beyond R_far as zero (keeps -2u(x) mass),
    ``"omit"`` truncates the operator at R_far, ``"rule"`` probes ``u`` itself
    at the tail centroid radius.
    """
    x = np.asarray(x, dtype=float).reshape(q.d)
    y = q.half_offsets
    if callable(kernel):
        kv = np.asarray(kernel(x[None, :], y), dtype=float).reshape(-1)
    else:
        kv = np.full(q.n_offsets, float(kernel))
    ux = float(u(x[None, :])[0])
    dlt = u(x[None, :] + y) + u(x[None, :] - y) - 2.0 * ux
    val = float(np.dot(q.pair_weights * kv, dlt))
    for axis in range(q.d):
        e = np.zeros((1, q.d))
        e[0, axis] = q.hx
        if callable(kernel):
            ka = float(np.asarray(kernel(x[None, :], e)).reshape(-1)[0])
        else:
            ka = float(kernel)
        val += q.axis_coeff * ka * float(u(x[None, :] + e)[0] + u(x[None, :] - e)[0] - 2.0 * ux)
    if tail_mode == "omit":
        return val
    per_axis = q.tail_mass / q.d
    for axis in range(q.d):
        e = np.zeros((1, q.d))
        e[0, axis] = q.tail_probe_radius
        if callable(kernel):
            kt = float(np.asarray(kernel(x[None, :], e)).reshape(-1)[0])
        else:
            kt = float(kernel)
        if tail_mode == "rule":
            data = float(u(x[None, :] + e)[0] + u(x[None, :] - e)[0])
        elif tail_mode == "zero_data":
            data = 0.0
        else:
            raise ValueError(f"unknown tail_mode {tail_mode!r}")
        val += per_axis * kt * (data - 2.0 * ux)
    return val

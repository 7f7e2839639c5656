"""Two-limit ergodic driver: domain expansion inside each discount level,
then vanishing discount across levels.

Each level solves the origin-normalised pair (v, m) on a growing sequence of
truncated balls (zero exterior for v); the trace of m plays the role of
lambda_alpha = alpha * w_alpha(origin).  The alpha loop terminates when the
lambda trace and the normalised potentials are Cauchy on the inner window and
alpha * ||v|| has dropped below tolerance, so the returned pair satisfies the
ergodic equation on the window to the same tolerance.  Radius traces that do
not stabilise are recorded, not forced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discounted import (DiscountedSolution, NormalizedSolution,
                         solve_normalized, solve_policy_iteration)
from .grid import ExteriorRule, Grid, build_grid
from .operators import DiscreteOperator, apply_inf, assemble
from .problem import ControlProblem
from .quadrature import build_quadrature

__all__ = [
    "DomainConfig", "AlphaSchedule", "AlphaLevel", "ErgodicSolution",
    "expand_domain", "vanishing_discount", "normalize_at_origin",
    "check_bar_w_bound", "check_lambda_bound", "verify_ergodic_pair",
]


@dataclass(frozen=True)
class DomainConfig:
    d: int
    hx: float
    radii: tuple[float, ...]
    r_far_margin: float = 1.0
    reg_radius: float | None = None
    inner_radius: float | None = None

    def __post_init__(self):
        if len(self.radii) == 0:
            raise ValueError("radius schedule must be non-empty")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("radius schedule must be strictly increasing")
        if self.radii[0] < 4 * self.hx:
            raise ValueError("first radius below 4*hx")

    @property
    def window_radius(self) -> float:
        return self.inner_radius if self.inner_radius is not None else self.radii[0] / 4.0


@dataclass(frozen=True)
class AlphaSchedule:
    start: float = 0.5
    factor: float = 0.5
    max_levels: int = 30
    explicit: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.explicit is not None:
            a = self.explicit
            if len(a) == 0:
                raise ValueError("alpha schedule needs at least one level")
            if any(not (0 < x < 1) for x in a) or any(b >= x for x, b in zip(a, a[1:])):
                raise ValueError("explicit alpha schedule must be decreasing in (0,1)")
        else:
            if not (0 < self.start < 1) or not (0 < self.factor < 1):
                raise ValueError("alpha schedule needs start, factor in (0,1)")
            if self.max_levels < 1:
                raise ValueError("alpha schedule needs at least one level")

    def alphas(self):
        if self.explicit is not None:
            yield from self.explicit
            return
        a = self.start
        for _ in range(self.max_levels):
            yield a
            a *= self.factor

    def scaled(self, factor: float) -> "AlphaSchedule":
        if self.explicit is not None:
            return AlphaSchedule(explicit=tuple(a * factor for a in self.explicit))
        return AlphaSchedule(start=self.start * factor, factor=self.factor,
                             max_levels=self.max_levels)


@dataclass(eq=False)
class AlphaLevel:
    alpha: float
    lam: float
    wbar: np.ndarray
    policy: np.ndarray
    lam_change: float
    wbar_change: float
    alpha_norm: float
    residual: float
    radius_trace: list[tuple[float, float]]


@dataclass(eq=False)
class ErgodicSolution:
    u: np.ndarray
    lambda_star: float
    grid: Grid
    alpha_trace: list[AlphaLevel]
    growth_report: dict
    converged: bool
    tol: float
    domain: DomainConfig


def normalize_at_origin(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Shift a grid function so the origin node carries exactly zero."""
    u = np.asarray(u, dtype=float)
    return u - u[grid.origin_index]


def _window_indices(grid: Grid, radius: float) -> np.ndarray:
    return np.flatnonzero(grid.radii() <= radius * (1 + 1e-12))


class _OperatorCache:
    """Assembled zero-exterior operators per radius, shared across levels."""

    def __init__(self, p: ControlProblem, domain: DomainConfig):
        self.p, self.domain = p, domain
        self._store: dict[float, tuple[Grid, DiscreteOperator]] = {}

    def get(self, R: float) -> tuple[Grid, DiscreteOperator]:
        if R not in self._store:
            d, hx = self.domain.d, self.domain.hx
            grid = build_grid(d, hx, R)
            s = self.p.kernel.s if self.p.kernel is not None else 0.75
            need_offsets = self.p.kernel is not None or (
                self.p.mixed is not None and self.p.mixed.levy_kernel is not None)
            q = build_quadrature(grid, s, R + self.domain.r_far_margin,
                                 self.domain.reg_radius) if need_offsets else None
            op = assemble(self.p, grid, q, ExteriorRule.zero())
            self._store[R] = (grid, op)
        return self._store[R]


def expand_domain(p: ControlProblem, alpha: float | None,
                  schedule: tuple[float, ...], tol: float, *,
                  d: int, hx: float, r_far_margin: float = 1.0,
                  ext: ExteriorRule | None = None,
                  max_iter: int = 60) -> DiscountedSolution:
    """Solve the Dirichlet problem on each radius of ``schedule`` in order.

    Stops once the restriction to the inner window B_{R0} (R0 = first radius
    over four) moves by at most ``tol`` between consecutive radii; exhaustion
    without stabilisation is flagged in the diagnostics, not raised.
    """
    domain = DomainConfig(d=d, hx=hx, radii=tuple(schedule), r_far_margin=r_far_margin)
    ext = ext if ext is not None else ExteriorRule.zero()
    r0 = domain.window_radius
    trace: list[tuple[float, float]] = []
    prev = None   # (grid, solution) from the preceding radius
    sol = None
    stabilized = False
    for R in domain.radii:
        grid = build_grid(d, hx, R)
        s = p.kernel.s if p.kernel is not None else 0.75
        need_offsets = p.kernel is not None or (
            p.mixed is not None and p.mixed.levy_kernel is not None)
        q = build_quadrature(grid, s, R + r_far_margin) if need_offsets else None
        op = assemble(p, grid, q, ext, alpha=alpha)
        w0 = policy0 = None
        if prev is not None:
            pgrid, psol = prev
            idx = grid.node_index_of_lattice(pgrid.lattice)
            w0 = np.zeros(grid.n_nodes)
            w0[idx] = psol.w
            policy0 = np.zeros(grid.n_nodes, dtype=np.int64)
            policy0[idx] = psol.policy
        sol = solve_policy_iteration(op, tol, max_iter=max_iter,
                                     w0=w0, policy0=policy0)
        if prev is not None:
            pgrid, psol = prev
            win_small = _window_indices(pgrid, r0)
            idx = grid.node_index_of_lattice(pgrid.lattice[win_small])
            change = float(np.max(np.abs(sol.w[idx] - psol.w[win_small])))
            trace.append((R, change))
            if change <= tol:
                stabilized = True
                prev = (grid, sol)
                break
        else:
            trace.append((R, np.inf))
        prev = (grid, sol)
    sol.diagnostics["radius_trace"] = trace
    sol.diagnostics["radius_stabilized"] = stabilized
    sol.diagnostics["grid"] = prev[0]
    return sol


def vanishing_discount(p: ControlProblem, domain: DomainConfig,
                       schedule: AlphaSchedule, tol: float, *,
                       solver_tol: float | None = None,
                       max_iter: int = 60) -> ErgodicSolution:
    """Vanishing-discount sweep producing the ergodic pair (u, lambda*).

    Terminates when consecutive levels satisfy |Δlambda| <= tol,
    ||Δ w_bar|| <= tol on the inner window, and alpha * ||w_bar|| <= tol on
    the window (so the pair solves the ergodic equation there at tolerance).
    An exhausted schedule returns the flagged trace for inspection.
    """
    inner_tol = solver_tol if solver_tol is not None else tol
    cache = _OperatorCache(p, domain)
    final_R = domain.radii[-1]
    warm: dict[float, tuple[np.ndarray, np.ndarray]] = {}
    levels: list[AlphaLevel] = []
    prev_level: AlphaLevel | None = None
    converged = False
    final_grid, _ = cache.get(final_R)
    win = _window_indices(final_grid, domain.window_radius)

    for alpha in schedule.alphas():
        rtrace: list[tuple[float, float]] = []
        sol: NormalizedSolution | None = None
        prev_r: tuple[Grid, NormalizedSolution] | None = None
        for R in domain.radii:
            grid, op = cache.get(R)
            if R in warm:
                v0, policy0 = warm[R]
            elif prev_r is not None:
                pg, ps = prev_r
                idx = grid.node_index_of_lattice(pg.lattice)
                v0 = np.zeros(grid.n_nodes)
                v0[idx] = ps.v
                policy0 = np.zeros(grid.n_nodes, dtype=np.int64)
                policy0[idx] = ps.policy
            else:
                v0 = policy0 = None
            sol = solve_normalized(op, alpha, inner_tol, max_iter=max_iter,
                                   v0=v0, policy0=policy0)
            warm[R] = (sol.v.copy(), sol.policy.copy())
            if prev_r is not None:
                pg, ps = prev_r
                win_small = _window_indices(pg, domain.window_radius)
                idx = grid.node_index_of_lattice(pg.lattice[win_small])
                rtrace.append((R, float(np.max(np.abs(sol.v[idx] - ps.v[win_small])))))
            else:
                rtrace.append((R, np.inf))
            prev_r = (grid, sol)

        alpha_norm = alpha * float(np.max(np.abs(sol.v[win])))
        if prev_level is not None:
            lam_change = abs(sol.m - prev_level.lam)
            wbar_change = float(np.max(np.abs(sol.v[win] - prev_level.wbar[win])))
        else:
            lam_change = wbar_change = np.inf
        level = AlphaLevel(alpha=alpha, lam=sol.m, wbar=sol.v.copy(),
                           policy=sol.policy.copy(), lam_change=lam_change,
                           wbar_change=wbar_change, alpha_norm=alpha_norm,
                           residual=sol.residual_inf_norm, radius_trace=rtrace)
        levels.append(level)
        prev_level = level
        if lam_change <= tol and wbar_change <= tol and alpha_norm <= tol:
            converged = True
            break

    u = normalize_at_origin(levels[-1].wbar, final_grid)
    return ErgodicSolution(
        u=u, lambda_star=levels[-1].lam, grid=final_grid, alpha_trace=levels,
        growth_report=_growth_report(u, final_grid, p),
        converged=converged, tol=tol, domain=domain)


def _growth_report(u: np.ndarray, grid: Grid, p: ControlProblem) -> dict:
    """Sampled |u|/(1+V) ratios along axis rays; proxy for u in o(V)."""
    if p.lyapunov is not None:
        V = np.asarray(p.lyapunov.V(grid.nodes), dtype=float)
    else:
        V = np.zeros(grid.n_nodes)
    ratios = np.abs(u) / (1.0 + V)
    rays = []
    tail_ok = True
    fracs = (0.4, 0.6, 0.8, 1.0)
    for axis in range(grid.d):
        for sgn in (1, -1):
            samples = []
            for f in fracs:
                k = max(1, int(round(f * grid._halfwidth)))
                z = np.zeros((1, grid.d), dtype=np.int64)
                z[0, axis] = sgn * k
                idx = grid.node_index_of_lattice(z)[0]
                if idx >= 0:
                    samples.append((k * grid.hx, float(ratios[idx])))
            rays.append({"axis": axis, "sign": sgn, "samples": samples})
            vals = [v for _, v in samples[-3:]]
            if any(b > a + 1e-12 for a, b in zip(vals, vals[1:])):
                tail_ok = False
    return {"rays": rays, "nonincreasing_tail": tail_ok}


# ---------------------------------------------------------------------------
# trace diagnostics


@dataclass(frozen=True)
class BarWReport:
    ok: bool
    pointwise_ok: bool
    bounded_across_alpha: bool
    max_violation: float
    max_window_values: tuple[float, ...]


def check_bar_w_bound(levels: list[AlphaLevel], p: ControlProblem, grid: Grid,
                      window_radius: float) -> BarWReport:
    """Check |w_bar(x)| <= max_B |w_bar| + V(x) per level and boundedness in alpha."""
    if p.lyapunov is None:
        raise ValueError("bar-w bound needs Lyapunov data")
    if len(levels) < 2:
        raise ValueError("need at least two alpha levels")
    V = np.asarray(p.lyapunov.V(grid.nodes), dtype=float)
    win = _window_indices(grid, window_radius)
    worst = 0.0
    maxes = []
    for lv in levels:
        mb = float(np.max(np.abs(lv.wbar[win])))
        maxes.append(mb)
        gap = (mb + V) - np.abs(lv.wbar)
        worst = max(worst, float(max(0.0, -gap.min())))
    pointwise_ok = worst <= 1e-10
    med = float(np.median(maxes))
    bounded = maxes[-1] <= 2.0 * med + 1e-12
    return BarWReport(ok=pointwise_ok and bounded, pointwise_ok=pointwise_ok,
                      bounded_across_alpha=bounded, max_violation=worst,
                      max_window_values=tuple(maxes))


@dataclass(frozen=True)
class LambdaBoundReport:
    ok: bool
    margins: tuple[float, ...]


def check_lambda_bound(levels: list[AlphaLevel], p: ControlProblem, grid: Grid,
                       k0: float) -> LambdaBoundReport:
    """alpha |w_alpha(0)| = |lambda_alpha| <= k0 + alpha V(0) across the trace."""
    if p.lyapunov is None:
        raise ValueError("lambda bound needs Lyapunov data")
    v0 = float(np.asarray(p.lyapunov.V(grid.nodes[grid.origin_index][None, :]))[0])
    margins = tuple(k0 + lv.alpha * v0 - abs(lv.lam) for lv in levels)
    return LambdaBoundReport(ok=all(m >= -1e-12 for m in margins), margins=margins)


@dataclass(frozen=True)
class PairVerification:
    residual: float
    residual_ok: bool
    probe_lambda_diff: float | None
    probe_u_diff: float | None
    probe_ok: bool | None

    @property
    def ok(self) -> bool:
        return self.residual_ok and (self.probe_ok is not False)


def verify_ergodic_pair(sol: ErgodicSolution, p: ControlProblem,
                        domain: DomainConfig, schedule: AlphaSchedule,
                        tol: float, *, uniqueness_probe: bool = True,
                        probe_factor: float = 0.8) -> PairVerification:
    """Recompute ||apply_inf(u) - lambda*|| on the inner window and probe
    uniqueness by re-running from a perturbed alpha schedule."""
    grid = sol.grid
    s = p.kernel.s if p.kernel is not None else 0.75
    need_offsets = p.kernel is not None or (
        p.mixed is not None and p.mixed.levy_kernel is not None)
    q = build_quadrature(grid, s, grid.R + domain.r_far_margin,
                         domain.reg_radius) if need_offsets else None
    op = assemble(p, grid, q, ExteriorRule.zero())
    vals, _ = apply_inf(op, sol.u)
    win = _window_indices(grid, domain.window_radius)
    residual = float(np.max(np.abs(vals[win] - sol.lambda_star)))
    residual_ok = residual <= 1.05 * tol

    dlam = du = None
    probe_ok = None
    if uniqueness_probe:
        other = vanishing_discount(p, domain, schedule.scaled(probe_factor), tol)
        dlam = abs(other.lambda_star - sol.lambda_star)
        du = float(np.max(np.abs(other.u[win] - sol.u[win])))
        probe_ok = (dlam <= 5 * tol) and (du <= 5 * tol)
    return PairVerification(residual=residual, residual_ok=residual_ok,
                            probe_lambda_diff=dlam, probe_u_diff=du,
                            probe_ok=probe_ok)

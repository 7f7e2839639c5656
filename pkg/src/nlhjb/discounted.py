"""Discounted bounded-domain solves: inf_tau(L_tau w + c_tau w + g_tau) = 0.

Howard policy iteration is the primary loop (frozen-policy linear solve, then
pointwise policy improvement); a damped value iteration remains as fallback
for near-degenerate diagonal dominance.  ``solve_normalized`` treats the
origin-normalised unknown pair (v, m) with v = 0 exterior data, which is the
formulation the ergodic driver relies on: constant cost shifts move m exactly
and never touch v.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid
from .operators import DiscreteOperator, apply_control, apply_inf
from .problem import ControlProblem

__all__ = [
    "DiscountedSolution", "NormalizedSolution", "BarrierReport",
    "solve_policy_iteration", "solve_value_iteration", "solve_normalized",
    "check_barrier",
]


@dataclass(eq=False)
class DiscountedSolution:
    w: np.ndarray
    policy: np.ndarray
    residual_inf_norm: float
    iterations: int
    alpha: float | None
    converged: bool
    trace: list[tuple[int, float, int]] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


@dataclass(eq=False)
class NormalizedSolution:
    """Pair (v, m): v solves inf(L v + g) + c v - m = 0, v(origin) = 0."""

    v: np.ndarray
    m: float
    policy: np.ndarray
    residual_inf_norm: float
    iterations: int
    alpha: float
    converged: bool
    trace: list[tuple[int, float, int]] = field(default_factory=list)


def _stacked_values(op: DiscreteOperator, u: np.ndarray):
    """Per-control values, their pointwise min and the argmin policy."""
    vals = np.stack([apply_control(op, t, u) for t in range(len(op.controls))])
    policy = np.argmin(vals, axis=0)
    return vals, vals[policy, np.arange(u.shape[0])], policy


def _policy_improvement(vals: np.ndarray, old_policy: np.ndarray,
                        vmin: np.ndarray) -> float:
    """How much the greedy policy improves on the frozen one (>= 0)."""
    cur = vals[old_policy, np.arange(old_policy.shape[0])]
    return float(np.max(cur - vmin))


def _policy_system(op: DiscreteOperator, policy: np.ndarray):
    n = op.n_nodes
    A = None
    const = np.zeros(n)
    for t in range(len(op.controls)):
        ind = (policy == t).astype(float)
        if not ind.any():
            continue
        part = sp.diags(ind) @ op.matrix(t)
        A = part if A is None else A + part
        const += ind * (op.gvals[t] + op.ext_const[t])
    return A.tocsr(), const


def _solve_linear(A: sp.csr_matrix, rhs: np.ndarray, rtol: float,
                  x0: np.ndarray | None = None) -> tuple[np.ndarray, str]:
    """Iterative solve (Jacobi-preconditioned BiCGStab) with sparse-LU fallback."""
    d = A.diagonal()
    if np.any(d == 0):
        return spla.spsolve(A.tocsc(), rhs), "splu"
    M = sp.diags(1.0 / d)
    scale = float(np.max(np.abs(rhs))) if rhs.size else 1.0
    x, info = spla.bicgstab(A, rhs, x0=x0, M=M, rtol=rtol,
                            atol=rtol * max(scale, 1e-30), maxiter=500)
    if info == 0:
        res = float(np.max(np.abs(A @ x - rhs)))
        if res <= 10 * rtol * max(scale, 1e-30):
            return x, "bicgstab"
    return spla.spsolve(A.tocsc(), rhs), "splu"


def solve_policy_iteration(op: DiscreteOperator, tol: float,
                           max_iter: int = 60,
                           w0: np.ndarray | None = None,
                           policy0: np.ndarray | None = None) -> DiscountedSolution:
    """Howard iteration for the discounted problem.

    Requires strict diagonal dominance (sup_tau c_tau <= -c_floor < 0); the
    frozen-policy systems are solved iteratively to relative residual tol/10.
    Non-convergence is a flagged result, never an exception.
    """
    c_floor = op.c_floor()
    if not (c_floor > 0):
        raise ValueError(
            f"policy iteration needs sup_tau c_tau < 0 (got c_floor={-c_floor:.3g})")
    n = op.n_nodes
    policy = np.zeros(n, dtype=np.int64) if policy0 is None else policy0.copy()
    w = np.zeros(n) if w0 is None else np.asarray(w0, dtype=float).copy()
    lin_rtol = max(tol / 10.0, 1e-14)
    trace: list[tuple[int, float, int]] = []
    mono_violation = 0.0
    prev_w = None
    converged = False
    alpha = None
    if all(np.allclose(cv, cv[0]) for cv in op.cvals):
        common = {float(-cv[0]) for cv in op.cvals}
        if len(common) == 1:
            alpha = common.pop()

    it = 0
    for it in range(1, max_iter + 1):
        A, const = _policy_system(op, policy)
        w, _ = _solve_linear(A, -const, lin_rtol, x0=w)
        if not np.all(np.isfinite(w)):
            raise AssertionError(
                "singular frozen-policy system; diagonal dominance violated")
        vals_all, vmin, new_policy = _stacked_values(op, w)
        residual = float(np.max(np.abs(vmin)))
        changes = int(np.count_nonzero(new_policy != policy))
        improvement = _policy_improvement(vals_all, policy, vmin)
        trace.append((it, residual, changes))
        if prev_w is not None:
            mono_violation = max(mono_violation, float(np.max(w - prev_w)))
        prev_w = w.copy()
        if residual <= tol and (changes == 0 or improvement <= 0.1 * tol):
            converged = True
            break
        policy = new_policy

    vals, _ = apply_inf(op, w)
    return DiscountedSolution(
        w=w, policy=policy, residual_inf_norm=float(np.max(np.abs(vals))),
        iterations=it, alpha=alpha, converged=converged, trace=trace,
        diagnostics={"monotone_violation": mono_violation, "c_floor": c_floor},
    )


def solve_value_iteration(op: DiscreteOperator, tol: float,
                          max_iter: int = 200_000,
                          u0: np.ndarray | None = None) -> DiscountedSolution:
    """Damped pointwise fixed point u <- u + eta * apply_inf(u); fallback path."""
    n = op.n_nodes
    u = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float).copy()
    dmax = max(float(np.max(np.abs(m.diagonal() + c)))
               for m, c in zip(op.base, op.cvals))
    eta = 1.0 / dmax
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        vals, policy = apply_inf(op, u)
        residual = float(np.max(np.abs(vals)))
        if residual <= tol:
            break
        u = u + eta * vals
    vals, policy = apply_inf(op, u)
    return DiscountedSolution(
        w=u, policy=policy, residual_inf_norm=float(np.max(np.abs(vals))),
        iterations=it, alpha=None, converged=residual <= tol,
        diagnostics={"eta": eta},
    )


def solve_normalized(op: DiscreteOperator, alpha: float, tol: float,
                     max_iter: int = 60,
                     v0: np.ndarray | None = None,
                     policy0: np.ndarray | None = None) -> NormalizedSolution:
    """Howard iteration on the origin-normalised pair (v, m).

    Solves inf_tau(L_tau v + g_tau) - alpha v - m = 0 with v = 0 exterior and
    v(origin) = 0; m plays the role of alpha * w_alpha(origin) of the
    unnormalised problem (w_alpha = v + m/alpha).
    """
    opa = op.with_alpha(alpha)
    n = op.n_nodes
    i0 = op.grid.origin_index
    policy = np.zeros(n, dtype=np.int64) if policy0 is None else policy0.copy()
    v = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float).copy()
    m = 0.0
    trace: list[tuple[int, float, int]] = []
    converged = False

    e0 = sp.csr_matrix((np.ones(1), (np.zeros(1, dtype=int), np.array([i0]))),
                       shape=(1, n))
    ones_col = sp.csr_matrix((-np.ones(n), (np.arange(n), np.zeros(n, dtype=int))),
                             shape=(n, 1))

    it = 0
    for it in range(1, max_iter + 1):
        A, const = _policy_system(opa, policy)
        aug = sp.bmat([[A, ones_col], [e0, None]], format="csc")
        rhs = np.concatenate([-const, [0.0]])
        sol = spla.spsolve(aug, rhs)
        v, m = sol[:n], float(sol[n])
        vals_all, vmin, new_policy = _stacked_values(opa, v)
        residual = float(np.max(np.abs(vmin - m)))
        changes = int(np.count_nonzero(new_policy != policy))
        improvement = _policy_improvement(vals_all, policy, vmin)
        trace.append((it, residual, changes))
        if residual <= tol and (changes == 0 or improvement <= 0.1 * tol):
            converged = True
            break
        policy = new_policy

    v = v - v[i0]  # exact origin normalisation
    vals, _ = apply_inf(opa, v)
    return NormalizedSolution(
        v=v, m=m, policy=policy,
        residual_inf_norm=float(np.max(np.abs(vals - m))),
        iterations=it, alpha=alpha, converged=converged, trace=trace,
    )


# ---------------------------------------------------------------------------
# barrier diagnostics


@dataclass(frozen=True)
class BarrierReport:
    ok: bool
    n_violations: int
    max_violation: float
    min_margin: float
    detail: str


def check_barrier(sol: DiscountedSolution, p: ControlProblem, grid: Grid,
                  k0: float | None = None,
                  c_floor: float | None = None) -> BarrierReport:
    """Pointwise check of |w(x)| <= k0/c_floor + V(x) on the grid."""
    if p.lyapunov is None:
        raise ValueError("barrier check needs Lyapunov data on the problem")
    if k0 is None:
        k0 = p.lyapunov.k0
    if k0 is None:
        raise ValueError("no k0 available; fit a Lyapunov certificate first")
    if c_floor is None:
        c_floor = sol.alpha if sol.alpha is not None else sol.diagnostics.get("c_floor")
    if c_floor is None or c_floor <= 0:
        raise ValueError("barrier check needs a positive c_floor")
    bound = k0 / c_floor + np.asarray(p.lyapunov.V(grid.nodes), dtype=float)
    gap = bound - np.abs(sol.w)
    viol = gap < -1e-12
    return BarrierReport(
        ok=not bool(viol.any()),
        n_violations=int(np.count_nonzero(viol)),
        max_violation=float(max(0.0, -gap.min())),
        min_margin=float(gap.min()),
        detail=f"k0={k0:.6g}, c_floor={c_floor:.6g}",
    )

"""Run configuration: strict parsing of the JSON config tree.

Unknown keys are rejected with the offending key named; every section is a
plain dataclass so defaults live in one place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ergodic import AlphaSchedule, DomainConfig
from .expressions import compile_kernel_field, compile_scalar_field
from .problem import (ControlProblem, KernelSpec, constant_cost_problem,
                      constant_kernel, power_drift_problem)

__all__ = ["RunConfig", "ConfigError", "parse_config", "build_problem",
           "build_domain", "build_alpha_schedule"]

MODES = ("discounted", "ergodic", "certify", "convergence-study")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ControlFieldConfig:
    drift: tuple[str, ...]
    cost: str
    zeroth: str | None = None
    kernel: str | None = None


@dataclass(frozen=True)
class ProblemConfig:
    family: str
    s: float | None = None
    gamma: float | None = None
    theta: float | None = None
    kappa: float | None = None
    drift_sign: float = -1.0
    local_identity: bool = False
    lambda_ell: float = 1.0
    Lambda_ell: float = 1.0
    controls: tuple[ControlFieldConfig, ...] = ()
    cost_shift: float = 0.0


@dataclass(frozen=True)
class GridConfig:
    d: int
    hx: float
    radii: tuple[float, ...]
    r_far_margin: float = 1.0
    reg_radius: float | None = None
    inner_radius: float | None = None


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_policy_iters: int = 60


@dataclass(frozen=True)
class AlphaConfig:
    start: float = 0.5
    factor: float = 0.5
    max_levels: int = 30
    values: tuple[float, ...] | None = None
    tol: float = 1e-6


@dataclass(frozen=True)
class RunConfig:
    mode: str
    problem: ProblemConfig
    grid: GridConfig
    solver: SolverConfig = field(default_factory=SolverConfig)
    alpha: AlphaConfig = field(default_factory=AlphaConfig)
    output_dir: str = "out"


_SECTION_TYPES = {
    "problem": ProblemConfig,
    "grid": GridConfig,
    "solver": SolverConfig,
    "alpha": AlphaConfig,
}


def _coerce(cls, raw: dict, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{path}' must be a mapping")
    names = {f.name for f in cls.__dataclass_fields__.values()}
    for key in raw:
        if key not in names:
            raise ConfigError(f"unknown key '{key}' in section '{path}'")
    kwargs = {}
    for key, val in raw.items():
        if key == "controls":
            val = tuple(_coerce(ControlFieldConfig, c, f"{path}.controls[{i}]")
                        for i, c in enumerate(val))
        elif key == "drift" and isinstance(val, list):
            val = tuple(val)
        elif isinstance(val, list):
            val = tuple(val)
        kwargs[key] = val
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"section '{path}': {exc}") from None


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    known = {"mode", "output_dir"} | set(_SECTION_TYPES)
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key '{key}' at config root")
    mode = raw.get("mode")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    for required in ("problem", "grid"):
        if required not in raw:
            raise ConfigError(f"missing required section '{required}'")
    sections = {name: _coerce(cls, raw.get(name, {}), name)
                for name, cls in _SECTION_TYPES.items()}
    cfg = RunConfig(mode=mode, output_dir=raw.get("output_dir", "out"), **sections)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    g = cfg.grid
    if g.d not in (1, 2):
        raise ConfigError(f"grid.d must be 1 or 2, got {g.d}")
    if g.hx <= 0:
        raise ConfigError("grid.hx must be positive")
    if not g.radii or any(b <= a for a, b in zip(g.radii, g.radii[1:])):
        raise ConfigError("grid.radii must be a strictly increasing list")
    if g.radii[0] < 4 * g.hx:
        raise ConfigError("grid.radii[0] must be at least 4*hx")
    if cfg.solver.tol <= 0:
        raise ConfigError("solver.tol must be positive")
    p = cfg.problem
    if p.family not in ("power_drift", "constant_cost", "custom"):
        raise ConfigError(f"unknown problem family '{p.family}'")
    if p.family == "power_drift" and (p.gamma is None or p.theta is None or p.s is None):
        raise ConfigError("power_drift needs gamma, theta and s")
    if p.family == "constant_cost" and p.kappa is None:
        raise ConfigError("constant_cost needs kappa")
    if p.family == "custom" and not p.controls:
        raise ConfigError("custom family needs a controls list")
    if p.family == "custom" and p.s is None and not p.local_identity:
        raise ConfigError("custom family needs s (or local_identity)")


def build_problem(cfg: RunConfig) -> ControlProblem:
    p, d = cfg.problem, cfg.grid.d
    if p.family == "power_drift":
        prob = power_drift_problem(p.gamma, p.theta, d, p.s, drift_sign=p.drift_sign)
    elif p.family == "constant_cost":
        prob = constant_cost_problem(p.kappa, d, p.s if p.s is not None else 0.75,
                                     local_identity=p.local_identity)
    else:
        prob = _build_custom(p, d)
    if p.cost_shift != 0.0:
        shift = float(p.cost_shift)
        costs = tuple(_shifted(g, shift) for g in prob.cost)
        import dataclasses
        prob = dataclasses.replace(prob, cost=costs)
    return prob


def _shifted(g, shift: float):
    def gg(x):
        return np.asarray(g(x), dtype=float) + shift
    return gg


def _build_custom(p: ProblemConfig, d: int) -> ControlProblem:
    drifts, costs, zeroths, kernels = [], [], [], []
    any_zeroth = any(c.zeroth is not None for c in p.controls)
    for c in p.controls:
        if len(c.drift) != d:
            raise ConfigError(f"drift needs {d} component expressions")
        comps = [compile_scalar_field(e, d) for e in c.drift]

        def make_b(comps=comps):
            def b(x):
                x = np.asarray(x, dtype=float)
                return np.stack([f(x) for f in comps], axis=-1)
            return b

        drifts.append(make_b())
        costs.append(compile_scalar_field(c.cost, d))
        if any_zeroth:
            if c.zeroth is None:
                raise ConfigError("either all controls carry zeroth or none")
            zeroths.append(compile_scalar_field(c.zeroth, d))
        if c.kernel is not None:
            kernels.append(compile_kernel_field(c.kernel, d))
        else:
            kernels.append(constant_kernel(2.0 - 2.0 * p.s))
    kspec = KernelSpec(s=p.s, lambda_ell=p.lambda_ell, Lambda_ell=p.Lambda_ell,
                      k=tuple(kernels))
    return ControlProblem(
        controls=tuple(f"tau{i}" for i in range(len(p.controls))),
        kernel=kspec,
        drift=tuple(drifts), cost=tuple(costs),
        zeroth=tuple(zeroths) if any_zeroth else None)


def build_domain(cfg: RunConfig) -> DomainConfig:
    g = cfg.grid
    return DomainConfig(d=g.d, hx=g.hx, radii=tuple(g.radii),
                        r_far_margin=g.r_far_margin, reg_radius=g.reg_radius,
                        inner_radius=g.inner_radius)


def build_alpha_schedule(cfg: RunConfig) -> AlphaSchedule:
    a = cfg.alpha
    if a.values is not None:
        return AlphaSchedule(explicit=tuple(a.values))
    return AlphaSchedule(start=a.start, factor=a.factor, max_levels=a.max_levels)

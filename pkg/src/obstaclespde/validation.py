"""
Exact-solution oracles and checks for the deterministic porous medium case.

* the Barenblatt profile (unconstrained flow, valid while its support fits
  inside one period);
* grid-refinement studies with fitted log-log orders;
* the variational inequality tested with registered comparison functions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import grid as g
from .errors import ConfigurationError, OracleInvalidError
from .grid import TorusGrid
from .model.spec import ModelSpec
from .sde_driver import NoisePathSpec
from .solver import SolverConfig, Trajectory, default_state_bound, solve, stable_dt

# {{{ Barenblatt


@dataclass(frozen=True)
class BarenblattParams:
    """Self-similar solution of ``u_t = Lap(u^m)`` with ``u(0) = U(t0)``."""

    m: float
    dim: int
    mass: float
    t0: float
    center: tuple = (0.5,)

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError("m must exceed 1")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if len(self.center) != self.dim:
            object.__setattr__(self, "center", tuple(self.center) + (0.5,) * (self.dim - len(self.center)))

    @property
    def alpha(self) -> float:
        return self.dim / (self.dim * (self.m - 1) + 2)

    @property
    def beta(self) -> float:
        return self.alpha / self.dim

    @property
    def k(self) -> float:
        return self.alpha * (self.m - 1) / (2 * self.m * self.dim)

    @staticmethod
    def _mass_factor(m, d, k):
        p = 1.0 / (m - 1)
        return k ** (-d / 2) * math.pi ** (d / 2) * math.gamma(p + 1) / math.gamma(p + 1 + d / 2)

    @property
    def C(self) -> float:
        p = 1.0 / (self.m - 1)
        return (self.mass / self._mass_factor(self.m, self.dim, self.k)) ** (1.0 / (p + self.dim / 2))

    @classmethod
    def from_constant(cls, m, dim, C, t0, center=(0.5,)) -> "BarenblattParams":
        tmp = cls(m, dim, 1.0, t0, tuple(center))
        p = 1.0 / (m - 1)
        mass = C ** (p + dim / 2) * cls._mass_factor(m, dim, tmp.k)
        return cls(m, dim, mass, t0, tuple(center))

    def support_radius(self, t: float) -> float:
        return math.sqrt(self.C / self.k) * (t + self.t0) ** self.beta

    def time_derivative(self, coords, t):
        """Analytic ``U_t`` (zero outside the support)."""
        s = t + self.t0
        r2 = _periodic_r2(coords, self.center)
        base = self.C - self.k * r2 * s ** (-2 * self.beta)
        p = 1.0 / (self.m - 1)
        pos = np.maximum(base, 0.0)
        val = s ** (-self.alpha) * pos**p
        dbase = 2 * self.beta * self.k * r2 * s ** (-2 * self.beta - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = -self.alpha / s * val + s ** (-self.alpha) * p * np.where(base > 0, pos ** (p - 1), 0.0) * dbase
        return np.where(base > 0, d, 0.0)


def _periodic_r2(coords, center):
    r2 = 0.0
    for x, c in zip(coords, center):
        dx = np.asarray(x, dtype=float) - c
        dx = dx - np.round(dx)
        r2 = r2 + dx * dx
    return r2


def barenblatt(coords, t: float, p: BarenblattParams):
    """Profile at time ``t`` (that is, ``t + t0`` in self-similar time)."""
    if t + p.t0 <= 0:
        raise OracleInvalidError("need t + t0 > 0")
    R = p.support_radius(t)
    if R >= 0.5:
        raise OracleInvalidError(f"support radius {R:.4f} exceeds half the period at t={t}")
    if not isinstance(coords, (tuple, list)):
        coords = (coords,)
    s = t + p.t0
    r2 = _periodic_r2(coords, p.center)
    base = np.maximum(p.C - p.k * r2 * s ** (-2 * p.beta), 0.0)
    return s ** (-p.alpha) * base ** (1.0 / (p.m - 1))


def pme_residual(p: BarenblattParams, grid: TorusGrid, t: float, margin: float = 0.05) -> float:
    """``max |U_t - Lap_h(U^m)|`` over nodes farther than ``margin`` from the free boundary."""
    coords = grid.coordinates()
    U = barenblatt(coords, t, p)
    lap = g.laplacian_array(U**p.m, grid.spacing, grid.dim)
    res = np.abs(p.time_derivative(coords, t) - lap)
    r = np.sqrt(_periodic_r2(coords, p.center))
    keep = np.abs(r - p.support_radius(t)) > margin
    return float(np.max(res[keep]))


# }}}

# {{{ convergence studies


@dataclass
class ConvergenceResult:
    rows: list  # (points_per_dim, h, dt, error)
    order: float
    monotone: bool
    flags: list = field(default_factory=list)

    @property
    def errors(self) -> list[float]:
        return [r[3] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["points_per_dim", "h", "dt", "error", "rate"])
        prev = None
        for N, h, dt, err in self.rows:
            rate = ""
            if prev is not None and prev[1] != h and err > 0 and prev[3] > 0:
                rate = repr(math.log(prev[3] / err) / math.log(prev[1] / h))
            w.writerow([N, repr(h), repr(dt), repr(err), rate])
            prev = (N, h, dt, err)
        return buf.getvalue()


def fitted_order(h, err) -> float:
    h, err = np.asarray(h, float), np.asarray(err, float)
    if len(np.unique(h)) < 2 or np.any(err <= 0):
        return math.nan
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def convergence_study(
    model: ModelSpec,
    grids: Sequence[int | TorusGrid],
    T: float,
    ic: Callable,
    oracle: Callable | str,
    dt_factor: float = 0.5,
    eps: float = 1.0,
    level: int | None = None,
    dim: int = 1,
) -> ConvergenceResult:
    """L1 errors at ``T`` per grid and the fitted order in ``h``.

    ``ic(coords)`` gives the initial data, ``oracle(coords, T)`` the exact
    solution; ``oracle="self"`` compares against the finest grid, sampled at
    the coarse nodes (grid sizes must then divide the finest one).
    On each grid ``dt = T / ceil(T / dt_max)`` where ``dt_max`` is
    ``dt_factor`` times the explicit stability bound.
    """
    if not model.deterministic:
        raise ConfigurationError("convergence studies need a deterministic model")
    grids = [G if isinstance(G, TorusGrid) else TorusGrid(dim, int(G)) for G in grids]
    finals = []
    rows = []
    for G in grids:
        h = G.spacing
        xi = np.asarray(ic(G.coordinates()), dtype=float)
        probe = SolverConfig(G, T, T if T > 0 else 1.0, eps, level=level)
        dt_max = dt_factor * stable_dt(probe, model, default_state_bound(model, G, xi, T))
        steps = max(1, math.ceil(T / dt_max))
        dt = T / steps
        cfg = SolverConfig(G, T, dt, eps, level=level, record_stride=steps)
        tr = solve(cfg, model, G.field(xi), NoisePathSpec(0, 0, steps, dt))
        finals.append(tr.states[-1])
        rows.append([G.points_per_dim, h, dt, math.nan])
    if oracle == "self":
        ref_grid = grids[int(np.argmax([G.points_per_dim for G in grids]))]
        ref = finals[grids.index(ref_grid)]
        for row, G, u in zip(rows, grids, finals):
            stride = ref_grid.points_per_dim // G.points_per_dim
            if stride * G.points_per_dim != ref_grid.points_per_dim:
                raise ConfigurationError("self-referenced grids must divide the finest grid")
            sl = tuple(slice(None, None, stride) for _ in range(G.dim))
            row[3] = G.cell_volume * float(np.sum(np.abs(u - ref[sl])))
    else:
        for row, G, u in zip(rows, grids, finals):
            exact = oracle(G.coordinates(), T)
            row[3] = G.cell_volume * float(np.sum(np.abs(u - exact)))
    rows = [tuple(r) for r in rows]
    flags = []
    for a, b in zip(rows, rows[1:]):
        if b[1] < a[1] and not b[3] < a[3]:
            flags.append(f"error did not decrease from N={a[0]} to N={b[0]} ({a[3]:.3e} -> {b[3]:.3e})")
    finite = [r for r in rows if r[3] > 0]
    order = fitted_order([r[1] for r in finite], [r[3] for r in finite])
    return ConvergenceResult(rows, order, not flags, flags)


# }}}

# {{{ comparison functions and the variational inequality


@dataclass(frozen=True, eq=False)
class ComparisonFunction:
    """``v(t, x) >= psi`` with the analytic ``d/dt (|v|^{m-1} v)``."""

    name: str
    value: Callable  # (t, coords) -> array
    dv_dt: Callable  # (t, coords) -> array, time derivative of v itself
    tag: str = "K'_psi"

    def power_dt(self, t, coords, m: float):
        v = self.value(t, coords)
        return m * np.abs(v) ** (m - 1) * self.dv_dt(t, coords)


def _profile(name, coords, center=0.5, radius=0.25):
    x = np.asarray(coords[0], dtype=float)
    if name == "one":
        return np.ones_like(x)
    if name == "cosine":
        return 0.5 * (1.0 + np.cos(2 * math.pi * x))
    if name == "bump":
        dx = x - center
        dx = dx - np.round(dx)
        return np.where(np.abs(dx) < radius, np.cos(0.5 * math.pi * dx / radius) ** 2, 0.0)
    raise KeyError(f"unknown profile {name!r}")


def obstacle_plus(model: ModelSpec, offset: float = 0.1, growth: float = 0.0, profile: str = "one", amplitude: float = 0.0):
    """``v = psi + (offset + growth t) + amplitude * profile(x)``; ``growth >= 0``."""
    if offset < 0 or growth < 0 or amplitude < 0:
        raise ValueError("lifts must be nonnegative so that v >= psi")
    ob = model.obstacle

    def value(t, coords):
        lift = offset + growth * t
        extra = amplitude * _profile(profile, coords) if amplitude else 0.0
        return ob.psi(t, coords) + lift + extra

    def dv(t, coords):
        return ob.psi_t(t, coords) + growth

    return ComparisonFunction(f"obstacle_plus(offset={offset},growth={growth},{profile}x{amplitude})", value, dv)


def obstacle_time_profile(model: ModelSpec, offset: float = 0.1, rate: float = 1.0, profile: str = "cosine"):
    """``v = psi + offset * (1 + rate t) * profile(x)`` (time-dependent lift)."""
    ob = model.obstacle

    def value(t, coords):
        return ob.psi(t, coords) + offset * (1.0 + rate * t) * _profile(profile, coords)

    def dv(t, coords):
        return ob.psi_t(t, coords) + offset * rate * _profile(profile, coords)

    return ComparisonFunction(f"obstacle_time_profile(offset={offset},rate={rate},{profile})", value, dv)


def frozen_state(traj: Trajectory, index: int = -1, lift: float = 0.02):
    """Time-independent ``v = max(u(t_index), sup_t psi) + lift``."""
    psi_sup = np.max(traj.obstacle_values(), axis=0)
    frozen = np.maximum(traj.states[index], psi_sup) + lift

    def value(t, coords):
        return frozen

    def dv(t, coords):
        return np.zeros_like(frozen)

    return ComparisonFunction(f"frozen_state(index={index},lift={lift})", value, dv)


def trajectory_self(traj: Trajectory):
    """``v = u`` itself, time derivative by finite differences of the recorded states."""
    times = traj.times
    states = traj.states
    grad_t = np.gradient(states, times, axis=0) if len(times) > 1 else np.zeros_like(states)

    def _idx(t):
        return int(np.clip(np.round(t / traj.record_dt), 0, len(times) - 1))

    def value(t, coords):
        return states[_idx(t)]

    def dv(t, coords):
        return grad_t[_idx(t)]

    return ComparisonFunction("self", value, dv, tag="self")


COMPARISON_FAMILIES = {
    "obstacle_plus": obstacle_plus,
    "obstacle_time_profile": obstacle_time_profile,
    "frozen_state": frozen_state,
    "self": trajectory_self,
}


def variational_inequality_check(traj: Trajectory, v: ComparisonFunction, phi_t, check_membership: bool = True) -> float:
    """``<<d_t u, (V - U) phi>> + int grad U . grad((V - U) phi)`` with ``V = |v|^{m-1} v``.

    The double bracket is evaluated through its integrated-by-parts form, the
    gradient pairing with forward differences.  Should be ``>= -tol``.
    """
    model = traj.model
    if not model.deterministic:
        raise ConfigurationError("the variational inequality check needs a deterministic trajectory")
    m = model.m
    grid = traj.grid
    coords = grid.coordinates()
    h, d, hd = grid.spacing, grid.dim, grid.cell_volume
    times = traj.times
    dtr = traj.record_dt
    R = len(times) - 1
    pt = phi_t(times)
    pt_t = phi_t.derivative(times)
    if check_membership and v.tag != "self":
        psi = traj.obstacle_values()
        vals = np.stack([np.broadcast_to(v.value(t, coords), grid.shape) for t in times])
        if np.any(vals < psi - 1e-12):
            raise ConfigurationError(f"comparison function {v.name} dips below the obstacle")
    total = 0.0
    for r in range(R):
        t = times[r]
        u = traj.states[r]
        vv = np.broadcast_to(v.value(t, coords), grid.shape)
        V = np.abs(vv) ** (m - 1) * vv
        U = np.abs(u) ** (m - 1) * u
        dV = np.broadcast_to(v.power_dt(t, coords, m), grid.shape)
        bulk = pt_t[r] * (np.abs(u) ** (m + 1) / (m + 1) - u * V) - pt[r] * u * dV
        grad = 0.0
        W = (V - U) * pt[r]
        for i in range(d):
            grad = grad + g.forward_diff_array(U, h, d, i) * g.forward_diff_array(W, h, d, i)
        total += dtr * hd * float(np.sum(bulk + grad))
    xi = traj.states[0]
    v0 = np.broadcast_to(v.value(0.0, coords), grid.shape)
    V0 = np.abs(v0) ** (m - 1) * v0
    total += hd * pt[0] * float(np.sum(np.abs(xi) ** (m + 1) / (m + 1) - xi * V0))
    return total


# }}}

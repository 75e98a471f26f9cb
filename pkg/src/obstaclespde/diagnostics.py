"""
Checks of the entropy inequality, the Skorohod condition, the a priori
estimates, L1 stability and initial attainment on completed trajectories.

Every diagnostic is a pure function of stored runs.  Space-time integrals use
left-point sums over the recorded time levels with weight ``record_dt * h^d``;
derivatives of test functions are analytic.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import grid as g
from . import mollifier
from .errors import ConfigurationError
from .grid import TorusGrid
from .model.coefficients import smoothstep, smoothstep_prime
from .model.spec import ModelSpec, negative_part
from .quadrature import AntiderivativeTable
from .sde_driver import coarsen, fine_spec, wiener_increments
from .solver import CompensationMeasure, Trajectory, compensation_measure, solve

TWO_PI = 2.0 * math.pi


# {{{ test functions


@dataclass(frozen=True)
class TimeCutoff:
    """``phi_t = 1`` on ``[0, t_a]``, quintic ramp to 0 on ``[t_a, t_b]``, 0 after."""

    t_a: float
    t_b: float

    def __post_init__(self):
        if not 0 <= self.t_a < self.t_b:
            raise ValueError("need 0 <= t_a < t_b")

    @classmethod
    def for_horizon(cls, T: float, start: float = 0.5, stop: float = 0.9) -> "TimeCutoff":
        return cls(start * T, stop * T)

    def __call__(self, t):
        return 1.0 - smoothstep((np.asarray(t, dtype=float) - self.t_a) / (self.t_b - self.t_a))

    def derivative(self, t):
        w = self.t_b - self.t_a
        return -smoothstep_prime((np.asarray(t, dtype=float) - self.t_a) / w) / w


@dataclass(frozen=True)
class PlaneWaveProfile:
    """``rho(x) = 1 + amplitude * cos(2 pi w.x + phase)`` with ``|amplitude| <= 1``."""

    amplitude: float = 0.5
    wavenumber: tuple = (1,)
    phase: float = 0.0

    def __post_init__(self):
        if abs(self.amplitude) > 1:
            raise ValueError("amplitude must not exceed 1 (profile must stay >= 0)")

    def _w(self, coords):
        w = tuple(self.wavenumber) + (0,) * (len(coords) - len(self.wavenumber))
        return w

    def _theta(self, coords):
        th = self.phase
        for w, x in zip(self._w(coords), coords):
            th = th + TWO_PI * w * np.asarray(x, dtype=float)
        return th

    def values(self, coords):
        return 1.0 + self.amplitude * np.cos(self._theta(coords))

    def gradient(self, coords):
        s = np.sin(self._theta(coords))
        return np.stack([-self.amplitude * TWO_PI * w * s for w in self._w(coords)])

    def hessian(self, coords):
        c = np.cos(self._theta(coords))
        w = self._w(coords)
        d = len(coords)
        return np.stack(
            [np.stack([-self.amplitude * TWO_PI**2 * w[i] * w[j] * c for j in range(d)]) for i in range(d)]
        )


@dataclass(frozen=True)
class BumpProfile:
    """``cos^4(pi r / (2 R))`` bump around ``center`` (periodic distance), C^3."""

    center: tuple = (0.5,)
    radius: float = 0.2
    height: float = 1.0

    def _geom(self, coords):
        diffs = []
        for x, c in zip(coords, self.center):
            dx = np.asarray(x, dtype=float) - c
            diffs.append(dx - np.round(dx))
        r = np.sqrt(sum(dx * dx for dx in diffs))
        return diffs, r

    def _q(self, r, k):
        a = 0.5 * math.pi / self.radius
        c, s = np.cos(a * r), np.sin(a * r)
        inside = r < self.radius
        if k == 0:
            v = c**4
        elif k == 1:
            v = -4 * a * c**3 * s
        else:
            v = a * a * (12 * c * c * s * s - 4 * c**4)
        return self.height * np.where(inside, v, 0.0)

    def values(self, coords):
        return self._q(self._geom(coords)[1], 0)

    def gradient(self, coords):
        diffs, r = self._geom(coords)
        q1 = self._q(r, 1)
        rs = np.where(r > 0, r, 1.0)
        return np.stack([np.where(r > 0, q1 * dx / rs, 0.0) for dx in diffs])

    def hessian(self, coords):
        diffs, r = self._geom(coords)
        q1, q2 = self._q(r, 1), self._q(r, 2)
        rs = np.where(r > 0, r, 1.0)
        d = len(coords)
        rows = []
        for i in range(d):
            row = []
            for j in range(d):
                ni, nj = diffs[i] / rs, diffs[j] / rs
                iso = (1.0 if i == j else 0.0)
                if d == 1:
                    val = q2
                else:
                    val = np.where(r > 0, q2 * ni * nj + q1 / rs * (iso - ni * nj), q2 * iso)
                row.append(val)
            rows.append(np.stack(row))
        return np.stack(rows)


@dataclass(frozen=True)
class SumProfile:
    parts: tuple

    def values(self, coords):
        return sum(p.values(coords) for p in self.parts)

    def gradient(self, coords):
        return sum(p.gradient(coords) for p in self.parts)

    def hessian(self, coords):
        return sum(p.hessian(coords) for p in self.parts)


# }}}

# {{{ entropies


@dataclass(frozen=True, eq=False)
class EntropyTestPack:
    """Entropy ``eta`` together with ``phi = scale * phi_t(t) * rho(x)``.

    ``kind="delta"``: ``eta(r) = eta_delta(r - center)`` with ``eta_delta(0) =
    eta_delta'(0) = 0`` and ``eta_delta'' = rho_delta(|.|)``.
    ``kind="linear"``: ``eta(r) = sign * r``, the equality cases.
    """

    time_cutoff: TimeCutoff
    space_profile: object = field(default_factory=PlaneWaveProfile)
    kind: str = "delta"
    delta: float = 0.1
    center: float = 0.0
    sign: float = 1.0
    scale: float = 1.0
    quad_tol: float = 1e-12

    def __post_init__(self):
        if self.kind not in ("delta", "linear"):
            raise ValueError("kind must be 'delta' or 'linear'")
        if self.kind == "delta" and not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.kind == "linear" and self.sign not in (1.0, -1.0, 1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.scale < 0:
            raise ValueError("scale must be nonnegative (phi >= 0)")

    @classmethod
    def linear(cls, time_cutoff, space_profile=None, sign=1.0, **kw):
        return cls(time_cutoff, space_profile or PlaneWaveProfile(), kind="linear", sign=float(sign), **kw)

    def scaled(self, lam: float) -> "EntropyTestPack":
        from dataclasses import replace

        return replace(self, scale=self.scale * lam)

    # entropy and derivatives
    def eta(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "linear":
            return self.sign * r
        x = np.abs(r - self.center) / self.delta
        return self.delta * mollifier.cdf_integral(x)

    def eta_prime(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "linear":
            return np.full_like(r, self.sign)
        y = r - self.center
        return np.sign(y) * mollifier.cdf(np.abs(y) / self.delta)

    def eta_second(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "linear":
            return np.zeros_like(r)
        return mollifier.rho_scaled(np.abs(r - self.center), self.delta)

    @property
    def support(self):
        """Support of ``eta''`` or ``None``."""
        if self.kind == "linear":
            return None
        return (self.center - self.delta, self.center + self.delta)

    def bracket(self, G, u, key=None):
        """``[[G' eta']](u) = G(u) eta'(u) - int_0^u G eta''`` for a primitive ``G`` with ``G(0) = 0``."""
        u = np.asarray(u, dtype=float)
        out = G(u) * self.eta_prime(u)
        sup = self.support
        if sup is None:
            return out
        tab = self._table(G, key)
        lo, hi = sup
        J = tab(np.clip(u, lo, hi)) - tab(np.clip(0.0, lo, hi))
        return out - J

    def _table(self, G, key):
        cache = self.__dict__.setdefault("_tables", {})
        if key is None or key not in cache:
            lo, hi = self.support
            # eta'' is smooth on its support; split at the center
            tab = AntiderivativeTable(
                lambda s: G(s) * self.eta_second(s),
                lo,
                hi,
                anchor=lo,
                tol=self.quad_tol * max(1.0, float(np.max(np.abs(G(np.linspace(lo, hi, 65)))))),
                breakpoints=(self.center,),
                initial_nodes=65,
            )
            if key is None:
                return tab
            cache[key] = tab
        return cache[key]

    def dissipation_potential(self, phi_n, u, key=None):
        """``Psi(u) = int_{lo}^{u} sqrt(eta'' Phi_n')``, constant outside the support of ``eta''``."""
        lo, hi = self.support
        cache = self.__dict__.setdefault("_tables", {})
        if key is None or key not in cache:
            tab = AntiderivativeTable(
                lambda s: np.sqrt(self.eta_second(s)) * phi_n.sqrt_phi_prime(s),
                lo,
                hi,
                anchor=lo,
                tol=self.quad_tol * max(1.0, float(phi_n.sqrt_phi_prime(max(abs(lo), abs(hi))))),
                breakpoints=(self.center,),
                initial_nodes=65,
            )
            if key is None:
                return tab(np.clip(u, lo, hi))
            cache[key] = tab
        return cache[key](np.clip(u, lo, hi))

    def phi(self, t, coords):
        return self.scale * np.multiply.outer(self.time_cutoff(t), self.space_profile.values(coords))


# }}}


@dataclass
class DiagnosticsReport:
    """Named scalar entries with tolerances and pass flags."""

    entries: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, name, value, tolerance=None, passed=None, **extra):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"diagnostic {name} is not finite")
        tolerance = None if tolerance is None else float(tolerance)
        passed = None if passed is None else bool(passed)
        self.entries.append(
            {"name": name, "value": value, "tolerance": tolerance, "passed": passed, **extra}
        )
        return self

    def __getitem__(self, name):
        for e in self.entries:
            if e["name"] == name:
                return e["value"]
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(e["passed"] is not False for e in self.entries)

    def failures(self):
        return [e for e in self.entries if e["passed"] is False]

    def to_json(self) -> str:
        return json.dumps({"metadata": self.metadata, "entries": self.entries}, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "value", "tolerance", "passed"])
        for e in self.entries:
            tol = "" if e["tolerance"] is None else repr(float(e["tolerance"]))
            ok = "" if e["passed"] is None else str(bool(e["passed"])).lower()
            w.writerow([e["name"], repr(e["value"]), tol, ok])
        return buf.getvalue()


def config_hash(traj: Trajectory) -> str:
    cfg = traj.config
    text = repr((cfg, traj.noise_spec))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# {{{ entropy residual


def _check_pair(traj: Trajectory, nu: CompensationMeasure):
    if nu.grid != traj.grid or nu.atoms.shape[0] != traj.states.shape[0] - 1:
        raise ConfigurationError("compensation measure does not belong to this trajectory")
    if not np.allclose(nu.times, traj.times[1:]):
        raise ConfigurationError("compensation measure times differ from the trajectory")


def entropy_residual_terms(
    traj: Trajectory, nu: CompensationMeasure, pack: EntropyTestPack, model: ModelSpec | None = None, chunk: int = 4096
) -> dict:
    """Individual contributions; ``residual = lhs_time + lhs_measure - (sum of rhs_*)``."""
    model = model or traj.model
    _check_pair(traj, nu)
    cfg, grid = traj.config, traj.grid
    h, d, hd = grid.spacing, grid.dim, grid.cell_volume
    coords = grid.coordinates()
    phi_n = model.smoothed(cfg.level)
    dtr = traj.record_dt
    R = traj.states.shape[0] - 1
    times = traj.times

    prof = pack.space_profile
    rho = np.broadcast_to(prof.values(coords), grid.shape)
    grad_rho = np.stack([np.broadcast_to(v, grid.shape) for v in prof.gradient(coords)])
    hess_rho = np.stack(
        [np.stack([np.broadcast_to(v, grid.shape) for v in row]) for row in prof.hessian(coords)]
    )
    lap_rho = sum(hess_rho[i, i] for i in range(d))
    ct = pack.time_cutoff(times) * pack.scale
    ct_t = pack.time_cutoff.derivative(times) * pack.scale

    dW = traj.increments
    if cfg.record_stride > 1 and dW.shape[1]:
        dW = coarsen(dW[: R * cfg.record_stride], cfg.record_stride)

    modes = []
    for k, md in enumerate(model.noise.modes):
        T = np.broadcast_to(md.T(coords), grid.shape)
        DT = np.broadcast_to(md.directional(coords, 1), grid.shape)
        D2T = np.broadcast_to(md.directional(coords, 2), grid.shape)
        e_grad_rho = sum(md.direction[i] * grad_rho[i] for i in range(d))
        e2_rho = sum(md.direction[i] * md.direction[j] * hess_rho[i, j] for i in range(d) for j in range(d))
        s00 = float(md.s(0.0, 0))
        s10 = float(md.s(0.0, 1))
        G_s1 = lambda r, md=md, s00=s00: md.s(r, 0) - s00
        G_s1sq = md.s1sq_primitive
        G_ss = lambda r, md=md, c=s00 * s10: md.s(r, 0) * md.s(r, 1) - c
        modes.append((k, md, T, DT, D2T, e_grad_rho, e2_rho, G_s1, G_s1sq, G_ss))

    terms = dict.fromkeys(
        ["lhs_time", "lhs_measure", "rhs_initial", "rhs_phi", "rhs_a", "rhs_first", "rhs_zero", "rhs_second", "rhs_noise"],
        0.0,
    )
    xi = traj.states[0]
    terms["rhs_initial"] = hd * ct[0] * float(np.sum(pack.eta(xi) * rho))

    psi_all = traj.obstacle_values()
    shp = (-1,) + (1,) * d
    nu_w = float(np.sum(nu.atoms * pack.eta_prime(psi_all[1:]) * ct[1:].reshape(shp) * rho))
    terms["lhs_measure"] = -nu_w

    for start in range(0, R, chunk):
        stop = min(R, start + chunk)
        u = traj.states[start:stop]
        tt = times[start:stop]
        c0 = ct[start:stop].reshape(shp)
        c1 = ct_t[start:stop].reshape(shp)
        w = dtr * hd
        e1 = pack.eta_prime(u)
        e2 = pack.eta_second(u)

        terms["lhs_time"] += -w * float(np.sum(pack.eta(u) * c1 * rho))

        if pack.kind == "linear":
            bphi = pack.sign * phi_n.phi(u)
        else:
            bphi = pack.bracket(phi_n.phi, u, key=("phi", repr(model.nonlinearity), cfg.level))
        terms["rhs_phi"] += w * float(np.sum(bphi * c0 * lap_rho))

        f = model.reaction.f(tt.reshape(shp), coords, u)
        zero = e1 * f
        second = np.zeros_like(u)
        if pack.kind != "linear":
            # eta''(u) |grad [[sqrt Phi']](u)|^2 = |grad Psi(u)|^2 with Psi = [[sqrt(eta'' Phi')]],
            # taken on cell edges with edge-averaged weights
            psi_u = pack.dissipation_potential(phi_n, u, key=("psi", repr(model.nonlinearity), cfg.level))
            for i in range(d):
                fw = g.forward_diff_array(psi_u, h, d, i)
                rho_edge = 0.5 * (rho + g.shift_array(rho, 1, -d + i))
                terms["rhs_second"] -= w * float(np.sum(fw * fw * c0 * rho_edge))
        a_term = np.zeros_like(u)
        first = np.zeros_like(u)
        noise_int = np.zeros(u.shape[0]) if dW.shape[1] else None
        for (k, md, T, DT, D2T, egr, e2r, G_s1, G_s1sq, G_ss) in modes:
            c = md.amplitude
            s0, s1 = md.s(u, 0), md.s(u, 1)
            B_s1sq = pack.bracket(G_s1sq, u, key=("s1sq", md))
            B_ss = pack.bracket(G_ss, u, key=("ss", md))
            B_s1 = pack.bracket(G_s1, u, key=("s1", md))
            a_term += 0.5 * c * c * T * T * B_s1sq * e2r
            first += (c * c * T * DT * (B_s1sq + 0.5 * B_ss) - e1 * c * c * s1 * s0 * T * DT) * egr
            curv = DT * DT + T * D2T
            zero += -e1 * 0.5 * c * c * s1 * s0 * curv + 0.5 * c * c * curv * B_ss
            second += 0.5 * e2 * c * c * s0 * s0 * DT * DT
            integrand = e1 * rho * c * s0 * DT - c * DT * B_s1 * rho - c * T * B_s1 * egr
            axes = tuple(range(1, 1 + d))
            noise_int += hd * ct[start:stop] * np.sum(integrand, axis=axes) * dW[start:stop, k]
        terms["rhs_a"] += w * float(np.sum(a_term * c0))
        terms["rhs_first"] += w * float(np.sum(first * c0))
        terms["rhs_zero"] += w * float(np.sum(zero * c0 * rho))
        terms["rhs_second"] += w * float(np.sum(second * c0 * rho))
        if noise_int is not None:
            terms["rhs_noise"] += float(np.sum(noise_int))
    return terms


def residual_from_terms(terms: dict) -> float:
    lhs = terms["lhs_time"] + terms["lhs_measure"]
    rhs = sum(v for k, v in terms.items() if k.startswith("rhs_"))
    return lhs - rhs


def entropy_residual(traj: Trajectory, nu: CompensationMeasure, pack: EntropyTestPack, model: ModelSpec | None = None) -> float:
    """LHS - RHS of the entropy inequality; negative means satisfied."""
    return residual_from_terms(entropy_residual_terms(traj, nu, pack, model))


@dataclass
class EntropyCheck:
    residual: float
    tolerance: float
    equality_plus: float
    equality_minus: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


def calibrated_entropy_check(traj, nu, pack: EntropyTestPack, factor: float = 3.0) -> EntropyCheck:
    """Tolerance ``factor * |residual(eta = r)|`` on the same run and test function."""
    plus = EntropyTestPack.linear(pack.time_cutoff, pack.space_profile, 1.0, scale=pack.scale)
    minus = EntropyTestPack.linear(pack.time_cutoff, pack.space_profile, -1.0, scale=pack.scale)
    rp = entropy_residual(traj, nu, plus)
    rm = entropy_residual(traj, nu, minus)
    res = entropy_residual(traj, nu, pack)
    return EntropyCheck(res, factor * max(abs(rp), abs(rm)), rp, rm)


@dataclass
class EntropyLadder:
    """Equality-case residuals over a ``(dt, h^2)`` refinement ladder."""

    points: list[int]
    dts: list[float]
    plus: list[float]
    minus: list[float]

    @property
    def ratios(self) -> list[float]:
        """``|r_k| / |r_{k+1}|`` for consecutive levels."""
        r = [abs(v) for v in self.plus]
        return [a / b if b > 0 else math.inf for a, b in zip(r, r[1:])]


def entropy_ladder(cfg, model: ModelSpec, ic, noise, levels: int = 3) -> EntropyLadder:
    """Equality residuals on ``levels`` discretizations, each halving ``dt`` and ``h^2``.

    Level ``k`` has ``round(N * 2^(k/2))`` points per axis and step
    ``dt / 2^k``, so ``h^2`` halves up to the rounding of the point count.
    Every step is recorded, so no time sampling error enters the residual.
    ``ic(coords)`` samples the initial data on each grid; a stochastic model
    is driven by one fine path, coarsened to each level.
    """
    if levels < 2:
        raise ConfigurationError("an entropy ladder needs at least two levels")
    N0, dt0, J0 = cfg.grid.points_per_dim, cfg.dt, cfg.steps
    top = 2 ** (levels - 1)
    fine = None
    if not model.deterministic:
        fine = wiener_increments(fine_spec(noise.with_steps(J0, dt0), top))
    tc = TimeCutoff.for_horizon(cfg.T)
    out = EntropyLadder([], [], [], [])
    for k in range(levels):
        N = int(round(N0 * 2 ** (k / 2)))
        dt = dt0 / 2**k
        grid = TorusGrid(cfg.grid.dim, N)
        lcfg = cfg.with_(grid=grid, dt=dt, record_stride=1)
        incs = None if fine is None else coarsen(fine, top // 2**k)
        xi = grid.field(ic(grid.coordinates()))
        traj = solve(lcfg, model, xi, noise.with_steps(J0 * 2**k, dt), incs)
        nu = compensation_measure(traj)
        out.points.append(N)
        out.dts.append(dt)
        out.plus.append(entropy_residual(traj, nu, EntropyTestPack.linear(tc, sign=1.0)))
        out.minus.append(entropy_residual(traj, nu, EntropyTestPack.linear(tc, sign=-1.0)))
    return out


# }}}

# {{{ skorohod, a priori, stability, attainment


def skorohod_defect(traj: Trajectory, nu: CompensationMeasure | None = None) -> float:
    """``|<u - psi, nu>|`` over the recorded time levels."""
    nu = nu or compensation_measure(traj)
    _check_pair(traj, nu)
    if traj.model.obstacle.is_inactive:
        return 0.0
    gap = traj.states[1:] - traj.obstacle_values()[1:]
    return abs(float(np.sum(nu.atoms * gap)))


def violation_sq(traj: Trajectory) -> float:
    """``||(u - psi)^-||^2_{L2(Q_T)}`` over the recorded time levels."""
    if traj.model.obstacle.is_inactive:
        return 0.0
    v = negative_part(traj.states[1:] - traj.obstacle_values()[1:])
    return traj.record_dt * traj.grid.cell_volume * float(np.sum(v * v))


def _grad_sq(w, grid):
    h, d = grid.spacing, grid.dim
    out = np.zeros_like(w)
    for i in range(d):
        fw = g.forward_diff_array(w, h, d, i)
        out += fw * fw
    return out


def apriori_monitor(traj: Trajectory, model: ModelSpec | None = None) -> DiagnosticsReport:
    model = model or traj.model
    cfg, grid = traj.config, traj.grid
    hd = grid.cell_volume
    axes = tuple(range(1, 1 + grid.dim))
    phi_n = model.smoothed(cfg.level)
    u = traj.states
    w = traj.record_dt * hd
    left = u[:-1]
    rep = DiagnosticsReport(metadata={"config_hash": config_hash(traj), "kind": "apriori"})
    rep.add("sup_l2_sq", float(np.max(hd * np.sum(u * u, axis=axes))))
    rep.add("grad_sqrt_bracket_sq", w * float(np.sum(_grad_sq(phi_n.bracket_sqrt(left), grid))))
    rep.add("penalty_energy", traj.running.get("violation_sq", violation_sq(traj)) / cfg.eps)
    rep.add("penalty_l1", traj.running.get("penalty_l1", 0.0))
    rep.add("sup_lm1", float(np.max(hd * np.sum(np.abs(u) ** (model.m + 1), axis=axes))))
    rep.add("grad_phi_sq", w * float(np.sum(_grad_sq(phi_n.phi(left), grid))))
    if model.obstacle.is_inactive:
        weighted = 0.0
    else:
        v = negative_part(u[1:] - traj.obstacle_values()[1:])
        weighted = w * float(np.sum(v * v * np.abs(u[1:]) ** (model.m - 1))) / cfg.eps
    rep.add("penalty_weighted", weighted)
    return rep


@dataclass
class L1Stability:
    times: np.ndarray
    distance: np.ndarray
    stderr: np.ndarray
    initial_distance: float
    ratio: float


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def l1_stability(trajs, trajs_tilde) -> L1Stability:
    """Per-time ``E||u - u~||_{L1}`` and ``sup_t`` of it over ``E||xi - xi~||_{L1}``."""
    a, b = _as_list(trajs), _as_list(trajs_tilde)
    if len(a) != len(b) or not a:
        raise ConfigurationError("need equally many members on both sides")
    for p, q in zip(a, b):
        if p.config != q.config or p.model is not q.model and repr(p.model) != repr(q.model):
            raise ConfigurationError("paired runs must share configuration and model")
        if p.increments.shape != q.increments.shape or not np.array_equal(p.increments, q.increments):
            raise ConfigurationError("paired runs are not driven by the same noise")
    hd = a[0].grid.cell_volume
    axes = tuple(range(1, 1 + a[0].grid.dim))
    dist = np.stack([hd * np.sum(np.abs(p.states - q.states), axis=axes) for p, q in zip(a, b)])
    init = np.array([hd * float(np.sum(np.abs(p.xi - q.xi))) for p, q in zip(a, b)])
    mean = dist.mean(axis=0)
    se = dist.std(axis=0, ddof=1) / math.sqrt(len(a)) if len(a) > 1 else np.zeros_like(mean)
    init_mean = float(init.mean())
    peak = float(np.max(mean))
    if init_mean == 0.0:
        ratio = 0.0 if peak == 0.0 else math.inf
    else:
        ratio = peak / init_mean
    return L1Stability(a[0].times, mean, se, init_mean, ratio)


def initial_attainment(traj: Trajectory, xi, taus: Sequence[float]) -> list[float]:
    """``A(tau) = tau^-1 sum_{t_r < tau} record_dt * ||u(t_r) - xi||^2_{L2}``."""
    xi = xi.values if hasattr(xi, "values") else np.asarray(xi, dtype=float)
    dtr = traj.record_dt
    hd = traj.grid.cell_volume
    axes = tuple(range(1, 1 + traj.grid.dim))
    sq = hd * np.sum((traj.states - xi) ** 2, axis=axes)
    out = []
    for tau in taus:
        k = tau / dtr
        if abs(k - round(k)) > 1e-6 * max(1.0, k) or not 1 <= round(k) <= len(traj.times) - 1:
            raise ConfigurationError(f"tau={tau} is not a recorded multiple of {dtr} within [dt, T]")
        k = int(round(k))
        out.append(float(dtr * np.sum(sq[:k]) / tau))
    return out


def ensemble_summary(values) -> tuple[float, float]:
    """Mean and standard error."""
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


# }}}

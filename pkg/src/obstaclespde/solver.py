"""
Time integration of the penalized equation

    du = [Lap Phi_n(u) + div(a grad u + b) + f + P_eps(u, psi)] dt + div sigma^k(u) dW^k

on the torus.  The drift and noise are explicit (Euler--Maruyama on the Ito
form); the penalty is solved exactly and pointwise.  With ``lam = dt/eps`` and
the explicit predictor ``u*``,

    nu    = (psi(t+dt) - u*)^+ / (eps + dt),
    u_new = u* + dt * nu,

so that ``nu = eps^-1 (u_new - psi)^-`` is both the penalty of the updated
state and the applied increment divided by ``dt``.  With ``record_stride > 1``
the recorded penalty field is the mean of ``nu`` over the record interval.

Ensemble members are integrated together along a leading batch axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import grid as g
from .errors import ConfigurationError, IntegrationError
from .grid import Field, TorusGrid
from .model.spec import ModelSpec, negative_part
from .sde_driver import NoisePathSpec, wiener_increments

SCHEMES = ("explicit-EM", "semi-implicit-diffusion")


@dataclass(frozen=True)
class SolverConfig:
    """Discretization parameters.

    ``level=None`` integrates the unsmoothed ``Phi`` without truncating the
    initial data.  ``state_bound`` is the range of ``|u|`` over which the
    explicit stability bound is evaluated; leaving it ``None`` derives it from
    the data at solve time.
    """

    grid: TorusGrid
    T: float
    dt: float
    eps: float
    level: int | None = None
    cfl_safety: float = 0.9
    scheme: str = "explicit-EM"
    record_stride: int = 1
    state_bound: float | None = None
    cg_tol: float = 1e-10

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.T < 0:
            raise ConfigurationError("T must be nonnegative")
        if not self.eps > 0:
            raise ConfigurationError("penalty parameter eps must be positive")
        if self.level is not None and self.level < 1:
            raise ConfigurationError("smoothing level n must be >= 1")
        if not 0 < self.cfl_safety < 1:
            raise ConfigurationError("cfl_safety must lie in (0, 1)")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}")
        if self.record_stride < 1:
            raise ConfigurationError("record_stride must be >= 1")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ConfigurationError(f"T/dt = {ratio} is not an integer; steps would not land on T")
        if round(ratio) % self.record_stride:
            raise ConfigurationError(
                f"record_stride={self.record_stride} does not divide the {round(ratio)} steps; the last record would miss T"
            )

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


def default_state_bound(model: ModelSpec, grid: TorusGrid, ic: np.ndarray, T: float) -> float:
    """``1.25 * max(|xi|, |psi|)`` with the obstacle sampled over ``[0, T]``."""
    bound = float(np.max(np.abs(ic))) if ic.size else 0.0
    if not model.obstacle.is_inactive:
        coords = grid.coordinates()
        for t in np.linspace(0.0, T, 33):
            bound = max(bound, float(np.max(np.abs(model.obstacle.psi(t, coords)))))
    return 1.25 * max(bound, 1e-3)


def max_ito_a(model: ModelSpec, grid: TorusGrid, bound: float) -> float:
    """``max_{i, x, |r| <= bound} a^{ii}(x, r)`` sampled on the grid nodes."""
    if model.noise.mode_count == 0:
        return 0.0
    coords = grid.coordinates()
    r = np.linspace(-bound, bound, 257)
    best = 0.0
    for i in range(grid.dim):
        acc = 0.0
        for md in model.noise.modes:
            s1 = np.max(md.s(r, 1) ** 2)
            T2 = np.max(md.T(coords) ** 2)
            acc += 0.5 * md.amplitude**2 * md.direction[i] ** 2 * s1 * T2
        best = max(best, acc)
    return float(best)


def stable_dt(cfg: SolverConfig, model: ModelSpec, bound: float) -> float:
    """Largest ``dt`` allowed by the explicit stability (monotonicity) bound."""
    h, d = cfg.grid.spacing, cfg.grid.dim
    phi = model.smoothed(cfg.level)
    a_max = max_ito_a(model, cfg.grid, bound)
    if cfg.scheme == "explicit-EM":
        denom = 2 * d * phi.max_phi_prime(bound) + d * a_max
    else:
        denom = d * a_max
    return math.inf if denom == 0 else cfg.cfl_safety * h * h / denom


# {{{ stepping


class Stepper:
    """Precomputed operators for one (config, model) pair, acting on batches."""

    def __init__(self, cfg: SolverConfig, model: ModelSpec, bound: float):
        if model.dim != cfg.grid.dim:
            raise ConfigurationError(
                f"noise model is {model.dim}-d but the grid is {cfg.grid.dim}-d"
            )
        if cfg.scheme == "semi-implicit-diffusion" and cfg.level is None:
            raise ConfigurationError("semi-implicit scheme needs a smoothing level (Phi_n' > 0)")
        self.cfg, self.model, self.bound = cfg, model, bound
        self.grid = cfg.grid
        self.h, self.dim = cfg.grid.spacing, cfg.grid.dim
        self.phi = model.smoothed(cfg.level)
        self.coords = cfg.grid.coordinates()
        limit = stable_dt(cfg, model, bound)
        if cfg.dt > limit:
            raise ConfigurationError(
                f"dt={cfg.dt:.3e} exceeds the stability bound {limit:.3e} "
                f"(cfl_safety={cfg.cfl_safety}, |u| <= {bound:.3g})"
            )
        self.modes = []
        for md in model.noise.modes:
            T = md.T(self.coords)
            DT = md.directional(self.coords, 1)
            self.modes.append((md, np.asarray(T, float), np.asarray(DT, float)))
        self.obstacle_active = not model.obstacle.is_inactive
        self._precond_cache = {}

    def psi(self, t):
        return self.model.obstacle.psi(t, self.coords)

    def _flux_divergence(self, u, dW):
        """``dt * div(a grad u + b) + sum_k div(sigma^k(u)) dW^k`` for a batch ``u``."""
        if not self.modes:
            return 0.0
        dt, h, d = self.cfg.dt, self.h, self.dim
        grad = g.gradient_array(u, h, d)
        flux = np.zeros((d,) + u.shape)
        for k, (md, T, DT) in enumerate(self.modes):
            s0 = md.s(u, 0)
            s1 = md.s(u, 1)
            c = md.amplitude
            e_grad = sum(md.direction[i] * grad[i] for i in range(d))
            w = 0.5 * c * c * s1 * T * (s1 * T * e_grad + s0 * DT) * dt
            w = w + c * s0 * T * dW[..., k]
            for i in range(d):
                if md.direction[i] != 0.0:
                    flux[i] += md.direction[i] * w
        return g.divergence_array(flux, h, d)

    def predictor(self, u, t, dW):
        """Explicit update ``u*`` and the reaction values ``f(t, x, u)``."""
        dt, h, d = self.cfg.dt, self.h, self.dim
        f = self.model.reaction.f(t, self.coords, u)
        incr = dt * f + self._flux_divergence(u, dW)
        if self.cfg.scheme == "explicit-EM":
            incr = incr + dt * g.laplacian_array(self.phi.phi(u), h, d)
            return u + incr, f
        rhs = incr + dt * g.laplacian_array(self.phi.phi(u), h, d)
        return u + self._semi_implicit(u, rhs), f

    def _semi_implicit(self, u, rhs):
        """Solve ``(C^-1 - dt L) z = rhs`` with ``C = Phi_n'(u)``; return ``rhs + dt L z``."""
        dt, h, d = self.cfg.dt, self.h, self.dim
        shape = self.grid.shape
        C = self.phi.phi_prime(u)
        flat_rhs = rhs.reshape((-1,) + shape)
        flat_C = C.reshape((-1,) + shape)
        out = np.empty_like(flat_rhs)
        lap_sym = _laplacian_symbol(self.grid)
        for b in range(flat_rhs.shape[0]):
            cinv = 1.0 / flat_C[b]
            cbar = 1.0 / float(np.mean(cinv))
            symbol = 1.0 / cbar - dt * lap_sym

            def matvec(z, cinv=cinv):
                zz = z.reshape(shape)
                return (cinv * zz - dt * g.laplacian_array(zz, h, d)).ravel()

            def precond(r, symbol=symbol):
                return np.real(np.fft.ifftn(np.fft.fftn(r.reshape(shape)) / symbol)).ravel()

            n = flat_rhs[b].size
            A = LinearOperator((n, n), matvec=matvec, dtype=float)
            M = LinearOperator((n, n), matvec=precond, dtype=float)
            z, info = cg(A, flat_rhs[b].ravel(), x0=(flat_C[b] * flat_rhs[b]).ravel(), rtol=self.cfg.cg_tol, atol=0.0, M=M, maxiter=500)
            if info > 0:
                raise IntegrationError("conjugate gradient did not converge")
            out[b] = flat_rhs[b] + dt * g.laplacian_array(z.reshape(shape), h, d)
        return out.reshape(rhs.shape)

    def penalize(self, u_star, t_next):
        """Exact pointwise implicit penalty solve; returns ``(u_new, nu, psi)``."""
        if not self.obstacle_active:
            zero = np.zeros_like(u_star)
            return u_star, zero, None
        psi = self.psi(t_next)
        nu = np.maximum(psi - u_star, 0.0) / (self.cfg.eps + self.cfg.dt)
        return u_star + self.cfg.dt * nu, nu, psi


def _laplacian_symbol(grid: TorusGrid) -> np.ndarray:
    N, h = grid.points_per_dim, grid.spacing
    k = 2 * np.pi * np.fft.fftfreq(N)
    one = (2 * np.cos(k) - 2) / (h * h)
    if grid.dim == 1:
        return one
    return one[:, None] + one[None, :]


def step(u: Field, t: float, dW, cfg: SolverConfig, model: ModelSpec, bound: float | None = None) -> Field:
    """One step of the scheme for a single field."""
    if bound is None:
        bound = default_state_bound(model, cfg.grid, u.values, t + cfg.dt)
    st = Stepper(cfg, model, bound)
    dW = np.asarray(dW, dtype=float).reshape(-1)
    if dW.size != model.noise.mode_count:
        raise ConfigurationError(f"{dW.size} increments for {model.noise.mode_count} modes")
    u_new, _, _ = _advance(st, u.values[None], t, dW[None, :], 0)
    return Field(cfg.grid, u_new[0])


def _advance(st: Stepper, u, t, dW, index):
    # (batch, K) -> (batch, 1, .., 1, K) so dW[..., k] broadcasts over space
    dW = np.asarray(dW, dtype=float)
    dW = dW.reshape(dW.shape[:-1] + (1,) * st.dim + dW.shape[-1:])
    u_star, f = st.predictor(u, t, dW)
    u_new, nu, psi = st.penalize(u_star, t + st.cfg.dt)
    if not np.all(np.isfinite(u_new)):
        bad = np.argwhere(~np.isfinite(u_new))[0]
        raise IntegrationError("non-finite state", step=index, cell=tuple(int(v) for v in bad))
    return u_new, nu, (u_star, f, psi)


# }}}


@dataclass(eq=False)
class Trajectory:
    """Recorded states, penalty fields and running space-time integrals of one run."""

    config: SolverConfig
    model: ModelSpec
    noise_spec: NoisePathSpec
    times: np.ndarray
    states: np.ndarray
    penalty_fields: np.ndarray
    xi: np.ndarray
    increments: np.ndarray
    running: dict = field(default_factory=dict)

    @property
    def grid(self) -> TorusGrid:
        return self.config.grid

    @property
    def record_dt(self) -> float:
        return self.config.dt * self.config.record_stride

    def state(self, i: int) -> Field:
        return Field(self.grid, self.states[i])

    def penalty_field(self, i: int) -> Field:
        return Field(self.grid, self.penalty_fields[i])

    def obstacle_values(self) -> np.ndarray:
        coords = self.grid.coordinates()
        return np.stack([np.broadcast_to(self.model.obstacle.psi(t, coords), self.grid.shape) for t in self.times])

    @property
    def final(self) -> Field:
        return self.state(-1)


_RUNNING_KEYS = (
    "violation_sq",
    "penalty_l1",
    "skorohod",
    "mass_residual_max",
    "contraction_excess_max",
    "penalty_min",
)


def _running_init(batch):
    return {
        "violation_sq": np.zeros(batch),
        "penalty_l1": np.zeros(batch),
        "skorohod": np.zeros(batch),
        "mass_residual_max": np.zeros(batch),
        "contraction_excess_max": np.full(batch, -np.inf),
        "penalty_min": np.full(batch, np.inf),
    }


def solve_ensemble(
    cfg: SolverConfig,
    model: ModelSpec,
    ics: Sequence[Field] | np.ndarray,
    noises: Sequence[NoisePathSpec],
    increments: np.ndarray | None = None,
    monitor: Callable | None = None,
) -> list[Trajectory]:
    """Integrate several members together; member ``b`` uses ``ics[b]`` and ``noises[b]``.

    ``increments`` (shape ``(members, steps, modes)``) overrides generation
    from the specs, e.g. for coarsened fine paths.  ``monitor(j, t, u_old,
    u_new, info)`` is called after every step.
    """
    grid = cfg.grid
    xi = np.stack([ic.values if isinstance(ic, Field) else np.asarray(ic, float) for ic in ics])
    if xi.shape[1:] != grid.shape:
        raise ConfigurationError(f"initial data of shape {xi.shape[1:]} on grid {grid.shape}")
    B = xi.shape[0]
    if len(noises) != B:
        raise ConfigurationError(f"{len(noises)} noise specs for {B} members")
    K, J = model.noise.mode_count, cfg.steps
    for ns in noises:
        if ns.mode_count != K:
            raise ConfigurationError(f"noise spec has {ns.mode_count} modes, model has {K}")
    if increments is None:
        for ns in noises:
            if K and not math.isclose(ns.dt, cfg.dt, rel_tol=1e-12):
                raise ConfigurationError(f"noise dt {ns.dt} differs from solver dt {cfg.dt}")
        dW = np.stack([wiener_increments(ns.with_steps(J, cfg.dt)) for ns in noises])
    else:
        dW = np.asarray(increments, dtype=float)
        if dW.shape != (B, J, K):
            raise ConfigurationError(f"increments of shape {dW.shape}, expected {(B, J, K)}")

    coords = grid.coordinates()
    psi0 = model.obstacle.psi(0.0, coords)
    if not model.obstacle.is_inactive:
        slack = xi - psi0
        if np.any(slack < -1e-12 * np.maximum(1.0, np.abs(psi0))):
            idx = np.unravel_index(int(np.argmin(slack)), slack.shape)
            raise ConfigurationError(
                f"initial data below the obstacle at member/cell {idx}: xi - psi(0) = {slack[idx]:.3e}"
            )
    u = np.clip(xi, -cfg.level, cfg.level) if cfg.level is not None else xi.copy()
    bound = cfg.state_bound if cfg.state_bound is not None else default_state_bound(model, grid, u, cfg.T)
    st = Stepper(cfg, model, bound)
    h_d = grid.cell_volume
    axes = tuple(range(1, 1 + grid.dim))
    n_pts = grid.total_points

    n_rec = J // cfg.record_stride + 1
    times = cfg.dt * cfg.record_stride * np.arange(n_rec)
    states = np.empty((n_rec, B) + grid.shape)
    pens = np.zeros((n_rec, B) + grid.shape)
    states[0] = u
    if st.obstacle_active:
        pens[0] = negative_part(u - psi0) / cfg.eps
    run = _running_init(B)
    lam_fac = cfg.eps / (cfg.eps + cfg.dt)
    dt = cfg.dt
    check_bound = cfg.level is None or bound < cfg.level
    # penalty recorded per interval is the mean of nu over its steps, so the
    # measure atoms reproduce the applied forcing exactly for any stride
    nu_acc = np.zeros((B,) + grid.shape)

    for j in range(J):
        t = j * dt
        u_new, nu, (u_star, f, psi) = _advance(st, u, t, dW[:, j, :], j)
        if check_bound and np.max(np.abs(u_new)) > bound:
            raise IntegrationError(
                f"|u| exceeded the state bound {bound:.4g} used for the stability check", step=j
            )
        # mean(u_new) - mean(u) - dt * mean(f + nu), relative to ||u||_{L2}
        drift = np.sum(u_new - u - dt * (f + nu), axis=axes) / n_pts
        unorm = np.sqrt(h_d * np.sum(u * u, axis=axes))
        run["mass_residual_max"] = np.maximum(
            run["mass_residual_max"], np.abs(drift) / np.maximum(unorm, 1e-300)
        )
        if psi is not None:
            viol = np.maximum(psi - u_new, 0.0)
            pre = np.maximum(psi - u_star, 0.0)
            run["violation_sq"] += dt * h_d * np.sum(viol * viol, axis=axes)
            run["penalty_l1"] += dt * h_d * np.sum(nu, axis=axes)
            run["skorohod"] += dt * h_d * np.sum(nu * (u_new - psi), axis=axes)
            run["contraction_excess_max"] = np.maximum(
                run["contraction_excess_max"], np.max(viol - lam_fac * pre, axis=axes)
            )
            run["penalty_min"] = np.minimum(run["penalty_min"], np.min(nu, axis=axes))
        if monitor is not None:
            monitor(j, t, u, u_new, {"u_star": u_star, "f": f, "nu": nu, "psi": psi})
        u = u_new
        if st.obstacle_active:
            nu_acc += nu
        if (j + 1) % cfg.record_stride == 0:
            r = (j + 1) // cfg.record_stride
            states[r] = u
            pens[r] = nu_acc / cfg.record_stride
            nu_acc[:] = 0.0

    if not st.obstacle_active:
        run["penalty_min"][:] = 0.0
        run["contraction_excess_max"][:] = 0.0
    run["state_bound"] = np.full(B, bound)

    out = []
    for b in range(B):
        out.append(
            Trajectory(
                config=cfg,
                model=model,
                noise_spec=noises[b],
                times=times,
                states=states[:, b].copy(),
                penalty_fields=pens[:, b].copy(),
                xi=xi[b].copy(),
                increments=dW[b].copy(),
                running={k: float(v[b]) for k, v in run.items()},
            )
        )
    return out


def solve(
    cfg: SolverConfig,
    model: ModelSpec,
    ic: Field,
    noise: NoisePathSpec,
    increments: np.ndarray | None = None,
    monitor: Callable | None = None,
) -> Trajectory:
    """Single trajectory of the penalized problem."""
    incs = None if increments is None else np.asarray(increments)[None]
    return solve_ensemble(cfg, model, [ic], [noise], incs, monitor)[0]


# {{{ compensation measure


@dataclass(eq=False)
class CompensationMeasure:
    """Atoms ``record_dt * h^d * nu_r(x_p)`` placed at recorded times ``t_r``, ``r >= 1``.

    ``nu_r`` is the mean penalty over the interval ending at ``t_r``, so the
    total mass equals the space-time integral of the applied penalty.
    """

    grid: TorusGrid
    times: np.ndarray
    atoms: np.ndarray
    total_mass: float

    def pair(self, g_values) -> float:
        """``<g, nu>``; ``g_values`` is a callable ``g(t, coords)`` or an array shaped like ``atoms``."""
        if callable(g_values):
            coords = self.grid.coordinates()
            vals = np.stack([np.broadcast_to(g_values(t, coords), self.grid.shape) for t in self.times])
        else:
            vals = np.broadcast_to(np.asarray(g_values, dtype=float), self.atoms.shape)
        return float(np.sum(self.atoms * vals))


def compensation_measure(traj: Trajectory) -> CompensationMeasure:
    atoms = traj.record_dt * traj.grid.cell_volume * traj.penalty_fields[1:]
    if np.any(atoms < 0):
        raise AssertionError("negative penalty atom")
    return CompensationMeasure(traj.grid, traj.times[1:], atoms, float(np.sum(atoms)))


# }}}

# {{{ refinement drivers


@dataclass
class EpsilonRefinement:
    schedule: list[float]
    trajectories: list[Trajectory]
    order_gaps: list[float]
    violation_norms: list[float]

    @property
    def monotone(self) -> bool:
        """``u_{eps_i} <= u_{eps_{i+1}}`` on every recorded point, up to 1e-8."""
        return all(gap <= 1e-8 for gap in self.order_gaps)

    @property
    def violations_nonincreasing(self) -> bool:
        v = self.violation_norms
        return all(b <= a * (1 + 1e-12) for a, b in zip(v, v[1:]))


def _check_schedule(schedule):
    sched = [float(e) for e in schedule]
    if not sched or any(e <= 0 for e in sched):
        raise ConfigurationError("epsilon schedule must be nonempty and positive")
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ConfigurationError("epsilon schedule must be strictly decreasing")
    return sched


def refine_epsilon(cfg, model, ic, noise, schedule, increments=None) -> EpsilonRefinement:
    """One solve per ``eps``, all driven by the same noise path."""
    sched = _check_schedule(schedule)
    trajs = [solve(cfg.with_(eps=e), model, ic, noise, increments) for e in sched]
    gaps = [float(np.max(a.states - b.states)) for a, b in zip(trajs, trajs[1:])]
    norms = [math.sqrt(t.running["violation_sq"]) for t in trajs]
    return EpsilonRefinement(sched, trajs, gaps, norms)


@dataclass
class JointRefinement:
    order: str
    levels: list[int]
    schedule: list[float]
    trajectories: dict
    sequence: list[tuple[int, float]]


def refine_joint(cfg, model, ic, noise, levels, schedule, order="n-then-eps", increments=None) -> JointRefinement:
    """Solve on the ``levels x schedule`` grid.

    ``order="n-then-eps"`` sweeps ``n`` at each fixed ``eps`` before
    decreasing ``eps`` (n to infinity first); ``"eps-then-n"`` sweeps ``eps``
    at each fixed ``n``.  The traversal order is recorded in ``sequence``.
    """
    sched = _check_schedule(schedule)
    levels = [int(n) for n in levels]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigurationError("levels must be strictly increasing")
    if order == "n-then-eps":
        seq = [(n, e) for e in sched for n in levels]
    elif order == "eps-then-n":
        seq = [(n, e) for n in levels for e in sched]
    else:
        raise ConfigurationError("order must be 'n-then-eps' or 'eps-then-n'")
    trajs = {}
    for n, e in seq:
        trajs[(n, e)] = solve(cfg.with_(level=n, eps=e), model, ic, noise, increments)
    return JointRefinement(order, levels, sched, trajs, seq)


# }}}

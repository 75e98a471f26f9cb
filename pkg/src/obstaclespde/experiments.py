"""
The experiment kinds behind the command line runner.

Each kind turns an :class:`ExperimentConfig` into trajectories, a
:class:`DiagnosticsReport`, a flat summary and some tables and figures.
Ensemble-like kinds split members into fixed batches that run in a bounded
process pool; every finished member leaves ``members/member_XXXX/member.toml``
behind, and a rerun only computes members whose file is missing.  Batch
composition does not depend on the worker count, so results do not either.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path
from typing import Callable

import numpy as np
import tomli
import tomli_w

from . import io as oio
from . import plotting
from .config import CALIBRATED, ExperimentConfig
from .diagnostics import (
    DiagnosticsReport,
    EntropyTestPack,
    TimeCutoff,
    apriori_monitor,
    calibrated_entropy_check,
    ensemble_summary,
    entropy_ladder,
    entropy_residual_terms,
    initial_attainment,
    residual_from_terms,
)
from .errors import ConfigurationError
from .grid import Field
from .model.coefficients import Reaction
from .model.spec import ModelSpec
from .sde_driver import NoisePathSpec, couple
from .solver import Trajectory, compensation_measure, solve_ensemble
from .validation import (
    BarenblattParams,
    barenblatt,
    convergence_study,
    fitted_order,
    frozen_state,
    obstacle_plus,
    obstacle_time_profile,
    trajectory_self,
    variational_inequality_check,
)

BATCH = 8
SKOROHOD_REL_TOL = 1e-9


@dataclass
class Figure:
    filename: str
    render: Callable  # render(path)


@dataclass
class ExperimentResult:
    kind: str
    report: DiagnosticsReport
    summary: list = field(default_factory=list)  # [(name, value)]
    tables: dict = field(default_factory=dict)  # filename -> (header, rows)
    figures: list = field(default_factory=list)
    stores: list = field(default_factory=list)  # trajectory store directories, relative


@dataclass(frozen=True)
class ShiftedReaction(Reaction):
    """``f + shift``; ``shift >= 0`` gives an ordered pair of reactions."""

    base: Reaction
    shift: float = 0.0
    name = "shifted"

    def f(self, t, coords, r):
        return self.base.f(t, coords, r) + self.shift

    def f_r(self, t, coords, r):
        return self.base.f_r(t, coords, r)

    def lipschitz(self) -> float:
        return self.base.lipschitz()


# {{{ helpers


def noise_spec(cfg: ExperimentConfig, model: ModelSpec, member: int) -> NoisePathSpec:
    s = cfg.solver
    return NoisePathSpec(cfg.experiment.seed, model.noise.mode_count, int(round(s.T / s.dt)), s.dt, member)


def initial_field(cfg: ExperimentConfig, spec: NoisePathSpec, family=None, tag: str = "") -> Field:
    grid = cfg.grid()
    ic = cfg.initial_condition(family)
    rng = couple(spec, tag).ic_rng()
    return grid.field(ic.sample(grid.coordinates(), rng))


def _pool_map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items)), mp_context=get_context("spawn")) as ex:
        return list(ex.map(fn, items))


def _member_dir(out: Path, i: int) -> Path:
    return out / "members" / f"member_{i:04d}"


def _write_member(out: Path, i: int, values: dict, h: str):
    d = _member_dir(out, i)
    d.mkdir(parents=True, exist_ok=True)
    oio.write_text(d / "member.toml", tomli_w.dumps({"member": i, "config_hash": h, **values}))


def _read_member(out: Path, i: int, h: str) -> dict | None:
    """Stored member values, or ``None`` if absent or written under another config."""
    p = _member_dir(out, i) / "member.toml"
    if not p.is_file():
        return None
    d = tomli.loads(p.read_text())
    if d.pop("config_hash", None) != h:
        return None
    d.pop("member", None)
    return d


def _run_members(cfg: ExperimentConfig, out: Path, workers: int, task) -> list[dict]:
    """Evaluate ``task((cfg, out, members))`` over fixed batches of missing members."""
    n = cfg.experiment.ensemble_size
    h = cfg.hash()
    results = {i: _read_member(out, i, h) for i in range(n)}
    batches = [list(range(b, min(b + BATCH, n))) for b in range(0, n, BATCH)]
    todo = [[i for i in b if results[i] is None] for b in batches]
    todo = [b for b in todo if b]
    for done in _pool_map(task, [(cfg, str(out), b) for b in todo], workers):
        for i, vals in done.items():
            _write_member(out, i, vals, h)
            results[i] = vals
    return [results[i] for i in range(n)]


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def trajectory_scalars(traj: Trajectory) -> dict:
    run = traj.running
    axes = tuple(range(1, 1 + traj.grid.dim))
    hd = traj.grid.cell_volume
    fin = traj.states[-1]
    viol = run["violation_sq"]
    return {
        "mass_residual_max": run["mass_residual_max"],
        "violation_sq": viol,
        "violation_norm": math.sqrt(viol),
        "penalty_l1": run["penalty_l1"],
        "skorohod_defect": abs(run["skorohod"]),
        "skorohod_identity_gap": _rel(abs(run["skorohod"]), viol / traj.config.eps) if viol > 0 else abs(run["skorohod"]),
        "contraction_excess_max": run["contraction_excess_max"],
        "final_mean": float(np.mean(fin)),
        "final_l2": float(np.sqrt(hd * np.sum(fin * fin))),
        "sup_l2": float(np.max(np.sqrt(hd * np.sum(traj.states**2, axis=axes)))),
    }


def _save_store(traj, out: Path, name: str, cfg_hash: str) -> str:
    oio.save_trajectory(traj, out / name, cfg_hash)
    return name


def _common_checks(report: DiagnosticsReport, sc: dict, dg, prefix: str = ""):
    report.add(f"{prefix}mass_residual_max", sc["mass_residual_max"], dg.mass_tol, sc["mass_residual_max"] <= dg.mass_tol)
    report.add(
        f"{prefix}skorohod_identity_gap",
        sc["skorohod_identity_gap"],
        SKOROHOD_REL_TOL,
        sc["skorohod_identity_gap"] <= SKOROHOD_REL_TOL,
    )


def _snapshot_figure(traj: Trajectory, filename="snapshots.png") -> Figure:
    psi = None if traj.model.obstacle.is_inactive else traj.obstacle_values()
    return Figure(filename, lambda p, t=traj, s=psi: plotting.snapshots(p, t.times, t.states, s))


# }}}

# {{{ entropy and attainment blocks


def entropy_block(report: DiagnosticsReport, traj: Trajectory, cfg: ExperimentConfig):
    """Equality cases, their exact cancellation, and the convex test packs."""
    dg = cfg.diagnostics
    tc = TimeCutoff.for_horizon(traj.config.T)
    nu = compensation_measure(traj)
    plus_t = entropy_residual_terms(traj, nu, EntropyTestPack.linear(tc, sign=1.0))
    minus_t = entropy_residual_terms(traj, nu, EntropyTestPack.linear(tc, sign=-1.0))
    rp, rm = residual_from_terms(plus_t), residual_from_terms(minus_t)
    scale = sum(abs(v) for v in plus_t.values())
    report.add("entropy_equality_plus", rp)
    report.add("entropy_equality_minus", rm)
    tol = 1e-10 * max(scale, 1e-300)
    report.add("entropy_equality_cancellation", abs(rp + rm), tol, abs(rp + rm) <= tol)
    # On a single noisy path the discrete Ito formula leaves a zero-mean
    # quadratic-variation error weighted by eta'' that the equality cases
    # (eta'' = 0) cannot calibrate, so there the convex packs are recorded only.
    judged = traj.model.deterministic
    rows = []
    for delta in dg.deltas:
        pack = EntropyTestPack(tc, kind="delta", delta=float(delta), center=dg.center)
        chk = calibrated_entropy_check(traj, nu, pack)
        tol = chk.tolerance if dg.entropy_tol == CALIBRATED else float(dg.entropy_tol)
        ok = chk.residual <= tol if judged else None
        extra = {} if judged else {"note": "stochastic path: informational"}
        report.add(f"entropy_residual_delta_{delta:g}", chk.residual, tol, ok, **extra)
        rows.append([float(delta), chk.residual, tol])
    return rp, rm, rows


def attainment_block(report: DiagnosticsReport, traj: Trajectory, cfg: ExperimentConfig):
    T = traj.config.T
    taus, skipped = [], []
    for frac in cfg.diagnostics.taus:
        tau = frac * T
        k = tau / traj.record_dt
        (taus if abs(k - round(k)) < 1e-9 * max(1.0, k) and round(k) >= 1 else skipped).append(tau)
    if skipped:
        report.metadata["attainment_skipped_taus"] = [repr(t) for t in skipped]
    if not taus:
        return []
    vals = initial_attainment(traj, traj.xi, taus)
    for tau, a in zip(taus, vals):
        report.add(f"attainment_tau_{tau:.6g}", a)
    dec = all(b <= a for a, b in zip(vals, vals[1:]))
    report.add("attainment_decreasing", float(dec), None, dec)
    return list(zip(taus, vals))


# }}}

# {{{ kinds


def _run_single(cfg: ExperimentConfig, out: Path, workers: int, h: str) -> ExperimentResult:
    model = cfg.model_spec()
    spec = noise_spec(cfg, model, 0)
    xi = initial_field(cfg, spec)
    traj = solve_ensemble(cfg.solver_config(), model, [xi], [spec])[0]
    rep = DiagnosticsReport(metadata={"config_hash": h, "kind": "single"})
    res = ExperimentResult("single", rep, stores=[_save_store(traj, out, "trajectory", h)])
    rep.add("records", len(traj.times))
    if traj.config.steps == 0:
        res.summary = [("records", len(traj.times)), ("initial_mean", float(np.mean(traj.xi)))]
        return res
    sc = trajectory_scalars(traj)
    _common_checks(rep, sc, cfg.diagnostics)
    for k in ("violation_norm", "penalty_l1", "final_mean", "final_l2"):
        rep.add(k, sc[k])
    for e in apriori_monitor(traj).entries:
        rep.add(f"apriori_{e['name']}", e["value"])
    rp, rm, rows = entropy_block(rep, traj, cfg)
    att = attainment_block(rep, traj, cfg)
    res.summary = [(k, sc[k]) for k in sorted(sc)] + [("entropy_equality_plus", rp), ("entropy_equality_minus", rm)]
    res.summary += [(f"entropy_residual_delta_{d:g}", r) for d, r, _ in rows]
    res.summary += [(f"attainment_tau_{t:.6g}", a) for t, a in att]
    res.tables["entropy.csv"] = (["delta", "residual", "tolerance"], rows)
    res.figures.append(_snapshot_figure(traj))
    return res


def _ensemble_task(args):
    cfg, out, members = args
    out = Path(out)
    model = cfg.model_spec()
    specs = [noise_spec(cfg, model, i) for i in members]
    xis = [initial_field(cfg, s) for s in specs]
    trajs = solve_ensemble(cfg.solver_config(), model, xis, specs)
    done = {}
    for i, tr in zip(members, trajs):
        oio.save_trajectory(tr, _member_dir(out, i) / "trajectory", cfg.hash())
        done[i] = trajectory_scalars(tr)
    return done


def _run_ensemble(cfg, out, workers, h) -> ExperimentResult:
    members = _run_members(cfg, out, workers, _ensemble_task)
    rep = DiagnosticsReport(metadata={"config_hash": h, "kind": "ensemble", "members": len(members)})
    worst = {k: max(m[k] for m in members) for k in ("mass_residual_max", "skorohod_identity_gap")}
    _common_checks(rep, worst, cfg.diagnostics)
    summary = []
    for k in sorted(members[0]):
        mean, se = ensemble_summary([m[k] for m in members])
        rep.add(f"{k}_mean", mean)
        summary += [(f"{k}_mean", mean), (f"{k}_stderr", se)]
    rows = [[i] + [m[k] for k in sorted(m)] for i, m in enumerate(members)]
    res = ExperimentResult("ensemble", rep, summary)
    res.tables["members.csv"] = (["member"] + sorted(members[0]), rows)
    res.stores = [f"members/member_{i:04d}/trajectory" for i in range(len(members))]
    res.figures.append(
        Figure("final_l2_hist.png", lambda p, v=[m["final_l2"] for m in members]: plotting.histogram(p, v, "||u(T)||_L2"))
    )
    return res


def _refine_task(args):
    cfg, out, members = args
    out = Path(out)
    model = cfg.model_spec()
    specs = [noise_spec(cfg, model, i) for i in members]
    xis = [initial_field(cfg, s) for s in specs]
    per = {i: {"violation_sq": [], "skorohod_defect": [], "skorohod_identity_gap": [], "mass_residual_max": [], "order_gap": []} for i in members}
    prev = None
    for k, eps in enumerate(cfg.solver.eps):
        trajs = solve_ensemble(cfg.solver_config(eps=eps), model, xis, specs)
        for i, tr in zip(members, trajs):
            sc = trajectory_scalars(tr)
            for key in ("violation_sq", "skorohod_defect", "skorohod_identity_gap", "mass_residual_max"):
                per[i][key].append(sc[key])
            if i == 0:
                oio.save_trajectory(tr, out / f"eps_{k:02d}", cfg.hash())
        if prev is not None:
            for i, a, b in zip(members, prev, trajs):
                per[i]["order_gap"].append(float(np.max(a.states - b.states)))
        prev = trajs
    return per


def _run_refine(cfg, out, workers, h) -> ExperimentResult:
    members = _run_members(cfg, out, workers, _refine_task)
    dg = cfg.diagnostics
    eps = list(cfg.solver.eps)
    rep = DiagnosticsReport(metadata={"config_hash": h, "kind": "refine-eps", "members": len(members), "schedule": eps})
    vsq = np.array([m["violation_sq"] for m in members])  # (members, eps)
    norms = np.sqrt(vsq.mean(axis=0))
    defects = np.array([m["skorohod_defect"] for m in members]).mean(axis=0)
    gap = max(max(m["order_gap"]) for m in members)
    mass = max(max(m["mass_residual_max"]) for m in members)
    sk = max(max(m["skorohod_identity_gap"]) for m in members)
    _common_checks(rep, {"mass_residual_max": mass, "skorohod_identity_gap": sk}, dg)
    rep.add("order_gap_max", gap, dg.comparison_tol, gap <= dg.comparison_tol)
    noninc = all(b <= a * (1 + 1e-12) for a, b in zip(norms, norms[1:]))
    rep.add("violation_nonincreasing", float(noninc), None, noninc)
    dnon = all(b <= a * (1 + 1e-12) for a, b in zip(defects, defects[1:]))
    rep.add("skorohod_defect_nonincreasing", float(dnon), None, dnon)
    slope = fitted_order(eps, norms) if np.all(norms > 0) else math.nan
    scaled = norms / np.sqrt(eps)
    spread = float(scaled.max() / scaled.min()) if np.all(scaled > 0) else math.nan
    if math.isfinite(slope):
        rep.add("violation_slope", slope, 0.4, slope >= 0.4)
        rep.add("scaled_violation_spread", spread, 2.0, spread < 2.0)
    rows = [[e, n, s, d] for e, n, s, d in zip(eps, norms, scaled, defects)]
    res = ExperimentResult("refine-eps", rep)
    res.summary = [("violation_slope", slope), ("scaled_violation_spread", spread), ("order_gap_max", gap)]
    res.summary += [(f"violation_norm_eps_{e:g}", n) for e, n in zip(eps, norms)]
    res.summary += [(f"skorohod_defect_eps_{e:g}", d) for e, d in zip(eps, defects)]
    res.tables["refinement.csv"] = (["eps", "violation_norm", "scaled_violation", "skorohod_defect"], rows)
    res.stores = [f"eps_{k:02d}" for k in range(len(eps))]
    res.figures.append(
        Figure(
            "refinement.png",
            lambda p: plotting.loglog(
                p, eps, {"||(u - psi)^-||": norms, "|<u - psi, nu>|": defects}, "eps", "value", reference_slope=0.5
            ),
        )
    )
    return res


def _stability_task(args):
    cfg, out, members = args
    out = Path(out)
    model = cfg.model_spec()
    specs = [noise_spec(cfg, model, i) for i in members]
    xa = [initial_field(cfg, s) for s in specs]
    xb = [initial_field(cfg, s, cfg.experiment.partner_initial, "partner") for s in specs]
    scfg = cfg.solver_config()
    ta = solve_ensemble(scfg, model, xa, specs)
    tb = solve_ensemble(scfg, model, xb, specs)
    hd = cfg.grid().cell_volume
    axes = tuple(range(1, 1 + cfg.solver.dim))
    done = {}
    for i, a, b in zip(members, ta, tb):
        if i == 0:
            oio.save_trajectory(a, out / "pair_a", cfg.hash())
            oio.save_trajectory(b, out / "pair_b", cfg.hash())
        done[i] = {
            "distance": [float(v) for v in hd * np.sum(np.abs(a.states - b.states), axis=axes)],
            "initial_distance": float(hd * np.sum(np.abs(a.xi - b.xi))),
        }
    return done


def _run_stability(cfg, out, workers, h) -> ExperimentResult:
    members = _run_members(cfg, out, workers, _stability_task)
    model = cfg.model_spec()
    dist = np.array([m["distance"] for m in members])
    init = float(np.mean([m["initial_distance"] for m in members]))
    mean = dist.mean(axis=0)
    se = dist.std(axis=0, ddof=1) / math.sqrt(len(members)) if len(members) > 1 else np.zeros_like(mean)
    ratio = float(mean.max() / init) if init > 0 else (0.0 if mean.max() == 0 else math.inf)
    lip = model.reaction.lipschitz()
    if lip == 0 and model.deterministic:
        bound = 1.0 + cfg.diagnostics.contraction_tol
    else:
        bound = math.exp(lip * cfg.solver.T) * 1.1
    rep = DiagnosticsReport(metadata={"config_hash": h, "kind": "stability-pair", "members": len(members)})
    rep.add("initial_distance", init)
    rep.add("contraction_ratio", ratio, bound, ratio <= bound)
    T = cfg.solver.T
    times = cfg.solver.dt * cfg.solver.record_stride * np.arange(dist.shape[1])
    res = ExperimentResult("stability-pair", rep, [("contraction_ratio", ratio), ("ratio_bound", bound), ("initial_distance", init)])
    res.tables["stability.csv"] = (["time", "mean_distance", "stderr"], [[t, m, s] for t, m, s in zip(times, mean, se)])
    res.stores = ["pair_a", "pair_b"]
    res.figures.append(Figure("stability.png", lambda p: plotting.stability(p, times, mean, se, init, bound)))
    res.summary.append(("horizon", T))
    return res


def _comparison_task(args):
    cfg, out, members = args
    model = cfg.model_spec()
    specs = [noise_spec(cfg, model, i) for i in members]
    xis = [initial_field(cfg, s) for s in specs]
    eps = cfg.solver.eps
    base = solve_ensemble(cfg.solver_config(eps=eps[-1]), model, xis, specs)
    done = {i: {} for i in members}
    if len(eps) > 1:
        coarse = solve_ensemble(cfg.solver_config(eps=eps[0]), model, xis, specs)
        for i, a, b in zip(members, coarse, base):
            done[i]["eps_order_gap"] = float(np.max(a.states - b.states))
    shifted = ModelSpec(
        model.nonlinearity,
        ShiftedReaction(model.reaction, cfg.experiment.reaction_shift),
        model.obstacle,
        model.noise,
        model.K,
        model.kappa,
    )
    up = solve_ensemble(cfg.solver_config(eps=eps[-1]), shifted, xis, specs)
    for i, a, b in zip(members, base, up):
        done[i]["reaction_order_gap"] = float(np.max(a.states - b.states))
    return done


def _run_comparison(cfg, out, workers, h) -> ExperimentResult:
    if cfg.experiment.reaction_shift < 0:
        raise ConfigurationError("experiment.reaction_shift: must be >= 0 so that f <= f + shift")
    members = _run_members(cfg, out, workers, _comparison_task)
    tol = cfg.diagnostics.comparison_tol
    rep = DiagnosticsReport(metadata={"config_hash": h, "kind": "comparison-pair", "members": len(members)})
    res = ExperimentResult("comparison-pair", rep)
    for key in ("eps_order_gap", "reaction_order_gap"):
        if key in members[0]:
            worst = max(m[key] for m in members)
            rep.add(f"{key}_max", worst, tol, worst <= tol)
            res.summary.append((f"{key}_max", worst))
    res.tables["members.csv"] = (
        ["member"] + sorted(members[0]),
        [[i] + [m[k] for k in sorted(m)] for i, m in enumerate(members)],
    )
    return res


def _run_convergence(cfg, out, workers, h) -> ExperimentResult:
    e = cfg.experiment
    model = cfg.model_spec()
    if not model.deterministic:
        raise ConfigurationError("model.noise: convergence studies need a deterministic model")
    if e.oracle == "barenblatt":
        p = BarenblattParams.from_constant(cfg.model.m, cfg.solver.dim, e.barenblatt_C, e.barenblatt_t0, (0.5,) * cfg.solver.dim)
        study = convergence_study(
            model, list(e.grids), cfg.solver.T, lambda c: barenblatt(c, 0.0, p), lambda c, t: barenblatt(c, t, p),
            eps=cfg.solver.eps[-1], dim=cfg.solver.dim,
        )
    else:
        ic = cfg.initial_condition()
        study = convergence_study(
            model, list(e.grids), cfg.solver.T, lambda c: ic.sample(c), "self", eps=cfg.solver.eps[-1], dim=cfg.solver.dim
        )
    rep = DiagnosticsReport(metadata={"config_hash": h, "kind": "convergence-study", "oracle": e.oracle, "flags": study.flags})
    rep.add("errors_decreasing", float(study.monotone), None, study.monotone)
    if math.isfinite(study.order):
        rep.add("fitted_order", study.order, 0.5, study.order >= 0.5)
    res = ExperimentResult("convergence-study", rep, [("fitted_order", study.order)])
    res.summary += [(f"error_N{r[0]}", r[3]) for r in study.rows]
    rows, prev = [], None
    for N, hh, dt, err in study.rows:
        rate = math.log(prev[1] / err) / math.log(prev[0] / hh) if prev and err > 0 and prev[1] > 0 and prev[0] != hh else None
        rows.append([N, hh, dt, err, rate])
        prev = (hh, err)
    res.tables["convergence.csv"] = (["points_per_dim", "h", "dt", "error", "rate"], rows)
    hs = [r[1] for r in study.rows]
    errs = [r[3] for r in study.rows]
    res.figures.append(Figure("convergence.png", lambda p: plotting.loglog(p, hs, {"L1 error": errs}, "h", "error", 1.0)))
    return res


def _run_entropy_suite(cfg, out, workers, h) -> ExperimentResult:
    model = cfg.model_spec()
    spec = noise_spec(cfg, model, 0)
    xi = initial_field(cfg, spec)
    trajs = [solve_ensemble(cfg.solver_config(eps=e), model, [xi], [spec])[0] for e in cfg.solver.eps]
    fine = trajs[-1]
    rep = DiagnosticsReport(metadata={"config_hash": h, "kind": "entropy-suite", "schedule": list(cfg.solver.eps)})
    res = ExperimentResult("entropy-suite", rep, stores=[_save_store(fine, out, "finest", h)])
    sc = trajectory_scalars(fine)
    _common_checks(rep, sc, cfg.diagnostics)
    defects = [trajectory_scalars(t)["skorohod_defect"] for t in trajs]
    dnon = all(b <= a * (1 + 1e-12) for a, b in zip(defects, defects[1:]))
    rep.add("skorohod_defect_nonincreasing", float(dnon), None, dnon)
    rp, rm, rows = entropy_block(rep, fine, cfg)
    res.summary = [("entropy_equality_plus", rp), ("entropy_equality_minus", rm)]
    res.summary += [(f"entropy_residual_delta_{d:g}", r) for d, r, _ in rows]
    res.tables["entropy.csv"] = (["delta", "residual", "tolerance"], rows)
    if cfg.diagnostics.ladder_levels:
        ladder_block(rep, res, cfg, model, spec)
    if model.deterministic and not model.obstacle.is_inactive:
        vi = vi_block(rep, fine, model)
        res.summary += [(f"vi_{n}", v) for n, v, _ in vi]
        res.tables["variational_inequality.csv"] = (["comparison", "value", "tolerance"], [list(r) for r in vi])
        res.figures.append(
            Figure("variational_inequality.png", lambda p: plotting.bars(p, [r[0] for r in vi], [r[1] for r in vi], -vi[0][2] if vi else None, "pairing"))
        )
    res.figures.append(_snapshot_figure(fine))
    return res


def ladder_block(rep: DiagnosticsReport, res: ExperimentResult, cfg: ExperimentConfig, model: ModelSpec, spec):
    dg = cfg.diagnostics
    ic = cfg.initial_condition()
    rng_spec = couple(spec, "")
    lad = entropy_ladder(
        cfg.solver_config(), model, lambda c: ic.sample(c, rng_spec.ic_rng()), spec, dg.ladder_levels
    )
    for N, r in zip(lad.points, lad.plus):
        rep.add(f"entropy_ladder_N{N}", r)
        res.summary.append((f"entropy_ladder_N{N}", r))
    for k, q in enumerate(lad.ratios):
        rep.add(f"entropy_ladder_ratio_{k}", q, dg.ladder_ratio, q >= dg.ladder_ratio)
    rows = [[N, dt, p, m] for N, dt, p, m in zip(lad.points, lad.dts, lad.plus, lad.minus)]
    res.tables["entropy_ladder.csv"] = (["points_per_dim", "dt", "residual_plus", "residual_minus"], rows)
    res.figures.append(
        Figure(
            "entropy_ladder.png",
            lambda p: plotting.loglog(p, lad.dts, {"|residual(eta = r)|": np.abs(lad.plus)}, "dt", "residual", 1.0),
        )
    )
    return lad


def comparison_family(model: ModelSpec, traj: Trajectory) -> list:
    """The five registered comparison functions used by the suite."""
    return [
        obstacle_plus(model, 0.05),
        obstacle_plus(model, 0.3),
        obstacle_plus(model, 0.1, profile="bump", amplitude=0.2),
        obstacle_time_profile(model, 0.1, 1.0),
        frozen_state(traj, -1, 0.02),
    ]


def vi_block(rep: DiagnosticsReport, traj: Trajectory, model: ModelSpec):
    phi = TimeCutoff.for_horizon(traj.config.T)
    ref = abs(variational_inequality_check(traj, trajectory_self(traj), phi))
    tol = 5.0 * ref
    rep.add("vi_self_test", ref)
    rows = []
    for v in comparison_family(model, traj):
        val = variational_inequality_check(traj, v, phi)
        rep.add(f"vi_{v.name}", val, -tol, val >= -tol)
        rows.append((v.name, val, tol))
    return rows


KINDS = {
    "single": _run_single,
    "refine-eps": _run_refine,
    "ensemble": _run_ensemble,
    "stability-pair": _run_stability,
    "comparison-pair": _run_comparison,
    "convergence-study": _run_convergence,
    "entropy-suite": _run_entropy_suite,
}


def run_experiment(cfg: ExperimentConfig, out, workers: int = 1) -> ExperimentResult:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return KINDS[cfg.experiment.kind](cfg, out, max(1, int(workers)), cfg.hash())


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


# }}}

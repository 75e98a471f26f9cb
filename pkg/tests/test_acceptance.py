"""
Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL criterion NN`` line (collected in
the terminal summary) and then asserts the same verdict.  Wall-time budgets
are part of each verdict.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from obstaclespde import config as cfgmod
from obstaclespde import grid as g
from obstaclespde import io as oio
from obstaclespde.diagnostics import (
    DiagnosticsReport,
    EntropyTestPack,
    TimeCutoff,
    calibrated_entropy_check,
    entropy_ladder,
    initial_attainment,
)
from obstaclespde.experiments import ShiftedReaction, initial_field, noise_spec, run_experiment, vi_block
from obstaclespde.grid import TorusGrid, VectorField
from obstaclespde.model import (
    ModelSpec,
    NoiseMode,
    NoiseModel,
    PowerNonlinearity,
    SmoothedNonlinearity,
    make_obstacle,
    make_reaction,
)
from obstaclespde.sde_driver import NoisePathSpec
from obstaclespde.solver import SolverConfig, compensation_measure, default_state_bound, solve, solve_ensemble, stable_dt

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
ROOT = Path(__file__).resolve().parents[1]


def load(name):
    return cfgmod.load(CONFIGS / f"{name}.toml")


def entries(rep):
    return {e["name"]: e for e in rep.entries}


@pytest.fixture(scope="module")
def sweeps(tmp_path_factory):
    """The epsilon sweeps of criterion 4, deterministic and 16-member stochastic."""
    out = {}
    t0 = time.perf_counter()
    for name in ("refine_eps", "refine_eps_noisy"):
        d = tmp_path_factory.mktemp(name)
        out[name] = (run_experiment(load(name), d), d)
    return out, time.perf_counter() - t0


# {{{ 1-2: operators and the smoothed nonlinearity


def test_criterion_01_operator_calculus(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(200):
        grid = TorusGrid(int(rng.choice([1, 2])), int(rng.choice([16, 64])))
        f = grid.field(rng.normal(size=grid.shape))
        F = VectorField.from_arrays(grid, rng.normal(size=(grid.dim,) + grid.shape))
        gf, dF = g.gradient(f), g.divergence(F)
        sbp = abs(g.inner(gf, F) + g.inner(f, dF))
        terms = [a.values * b.values for a, b in zip(gf.components, F.components)] + [f.values * dF.values]
        scale = grid.cell_volume * sum(np.abs(t).sum() for t in terms)
        lap = g.laplacian(f).values
        worst = max(
            worst,
            sbp / scale,
            abs(lap.sum()) / np.abs(lap).sum(),
            abs(dF.values.sum()) / np.abs(dF.values).sum(),
        )
    wall = time.perf_counter() - t0
    ok = worst <= 1e-12 and wall < 5
    verdict(1, ok, f"worst relative SBP/mean defect {worst:.2e} (<= 1e-12) over 200 fields, {wall:.1f}s (< 5s)")
    assert ok


def test_criterion_02_smoothing_bounds(verdict):
    t0 = time.perf_counter()
    bad = []
    for m in (2.0, 3.0):
        base = PowerNonlinearity(m)
        for n in (4, 16, 64):
            sm = SmoothedNonlinearity(base, n)
            r = np.linspace(-n, n, 10_000)
            s = sm.sqrt_phi_prime(r)
            gap = float(np.max(np.abs(base.sqrt_phi_prime(r) - s)))
            if not np.all(s >= 2.0 / n):
                bad.append(f"m={m:g} n={n}: sqrt(Phi_n') < 2/n")
            if gap > 4.0 / n:
                bad.append(f"m={m:g} n={n}: gap {gap:.3g} > 4/n")
            if not np.all(np.diff(sm.phi(r)) > 0):
                bad.append(f"m={m:g} n={n}: Phi_n not strictly increasing")
    wall = time.perf_counter() - t0
    ok = not bad and wall < 10
    verdict(2, ok, f"{'; '.join(bad) or 'all bounds hold'} for m in {{2,3}}, n in {{4,16,64}}, {wall:.1f}s (< 10s)")
    assert ok


# }}}

# {{{ 3: mass identity


def test_criterion_03_mass_identity(verdict):
    t0 = time.perf_counter()
    worst = {}
    for name in ("refine_eps", "refine_eps_noisy"):
        cfg = load(name)
        model = cfg.model_spec()
        spec = noise_spec(cfg, model, 0)
        scfg = cfg.solver_config(eps=1e-3)
        hd = scfg.grid.cell_volume
        acc = [0.0]

        def monitor(j, t, u, u_new, extra, hd=hd, dt=scfg.dt, acc=acc):
            nu = extra["nu"] if extra["psi"] is not None else 0.0
            drift = np.mean(u_new - u, axis=-1) - dt * np.mean(extra["f"] + nu, axis=-1)
            norm = np.sqrt(hd * np.sum(u * u, axis=-1))
            acc[0] = max(acc[0], float(np.max(np.abs(drift) / norm)))

        solve(scfg, model, initial_field(cfg, spec), spec, monitor=monitor)
        worst["deterministic" if model.deterministic else "stochastic"] = acc[0]
    wall = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-12 and wall < 30
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    verdict(3, ok, f"max |mean drift - dt mean(f + nu)| / ||u||: {detail} (<= 1e-12), {wall:.1f}s (< 30s)")
    assert ok


# }}}

# {{{ 4, 7, 8: epsilon sweeps


def test_criterion_04_penalty_scaling(sweeps, verdict):
    runs, wall = sweeps
    parts, ok = [], wall < 300
    for name, (res, _) in runs.items():
        e = entries(res.report)
        slope, spread = e["violation_slope"]["value"], e["scaled_violation_spread"]["value"]
        ok &= slope >= 0.4 and spread < 2.0
        parts.append(f"{name}: slope {slope:.3f} (>= 0.4), spread {spread:.3f} (< 2)")
    verdict(4, ok, "; ".join(parts) + f", {wall:.0f}s (< 300s)")
    assert ok


def test_criterion_07_entropy_residual(sweeps, verdict):
    t0 = time.perf_counter()
    cfg = load("refine_eps")
    model = cfg.model_spec()
    ic = cfg.initial_condition()
    lad = entropy_ladder(cfg.solver_config(eps=1e-4), model, lambda c: ic.sample(c), noise_spec(cfg, model, 0), levels=3)
    ladder_ok = all(r >= 1.5 for r in lad.ratios)
    d = sweeps[0]["refine_eps"][1]
    fine = oio.load_trajectory(d / "eps_03")
    nu = compensation_measure(fine)
    tc = TimeCutoff.for_horizon(fine.config.T)
    checks = []
    for delta in (1.0, 0.1):
        pack = EntropyTestPack(tc, delta=delta, center=cfg.diagnostics.center)
        checks.append((delta, calibrated_entropy_check(fine, nu, pack)))
    wall = time.perf_counter() - t0
    ok = ladder_ok and all(c.passed for _, c in checks) and wall < 300
    ratios = ", ".join(f"{r:.2f}" for r in lad.ratios)
    convex = ", ".join(f"delta={d:g}: {c.residual:.3g} <= {c.tolerance:.3g}" for d, c in checks)
    verdict(7, ok, f"ladder ratios {ratios} (>= 1.5); {convex} on eps=1e-4; {wall:.0f}s (< 300s)")
    assert ok


def test_criterion_08_skorohod_defect(sweeps, verdict):
    runs, _ = sweeps
    parts, ok = [], True
    for name, (res, _) in runs.items():
        e = entries(res.report)
        gap = e["skorohod_identity_gap"]["value"]
        noninc = e["skorohod_defect_nonincreasing"]["passed"]
        ok &= gap <= 1e-9 and noninc
        parts.append(f"{name}: identity gap {gap:.1e} (<= 1e-9), defect {'nonincreasing' if noninc else 'INCREASES'}")
    verdict(8, ok, "; ".join(parts))
    assert ok


# }}}

# {{{ 5: comparison


def _random_model(rng):
    modes = tuple(
        NoiseMode(
            float(rng.uniform(0.05, 0.3)),
            str(rng.choice(["linear", "sine", "tanh", "constant"])),
            str(rng.choice(["cos", "sin", "const"])),
            (int(rng.integers(1, 3)),),
        )
        for _ in range(int(rng.integers(1, 3)))
    )
    # the obstacle rises through the data at t_on, so the penalty is active
    obstacle = make_obstacle(
        "ramp",
        {
            "level": float(rng.uniform(0.2, 0.35)),
            "amplitude": float(rng.uniform(0, 0.1)),
            "jump": float(rng.uniform(0.2, 0.5)),
            "t_on": float(rng.uniform(0.005, 0.02)),
            "width": 1e-3,
        },
    )
    reaction = make_reaction("sine", {"amplitude": float(rng.uniform(0, 1)), "shift": float(rng.uniform(0, math.pi))})
    return ModelSpec(PowerNonlinearity(float(rng.choice([2.0, 3.0]))), reaction, obstacle, NoiseModel(modes))


def test_criterion_05_comparison(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    grid = TorusGrid(1, 32)
    (x,) = grid.coordinates()
    T = 0.05
    worst = {"eps": -math.inf, "reaction": -math.inf}
    spread = {"eps": 0.0, "reaction": 0.0}
    for draw in range(8):
        model = _random_model(rng)
        level = [None, 16][draw % 2]
        shifted = ModelSpec(model.nonlinearity, ShiftedReaction(model.reaction, float(rng.uniform(0.05, 0.5))), model.obstacle, model.noise)
        xi = grid.field(0.6 + float(rng.uniform(0, 0.15)) * np.cos(2 * math.pi * (x - rng.uniform())))
        bound = default_state_bound(model, grid, xi.values, T) + 0.5
        probe = SolverConfig(grid, T, T, 1e-3, level=level, state_bound=bound)
        steps = math.ceil(T / (0.5 * stable_dt(probe, shifted, bound)))
        cfg = probe.with_(dt=T / steps)
        specs = [NoisePathSpec(100 + draw, model.noise.mode_count, steps, cfg.dt, i) for i in range(4)]
        ics = [xi] * 4
        hi = solve_ensemble(cfg.with_(eps=1e-2), model, ics, specs)
        lo = solve_ensemble(cfg, model, ics, specs)
        up = solve_ensemble(cfg, shifted, ics, specs)
        for a, b, c in zip(hi, lo, up):
            worst["eps"] = max(worst["eps"], float(np.max(a.states - b.states)))
            worst["reaction"] = max(worst["reaction"], float(np.max(b.states - c.states)))
            spread["eps"] = max(spread["eps"], float(np.max(b.states - a.states)))
            spread["reaction"] = max(spread["reaction"], float(np.max(c.states - b.states)))
    wall = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-8 and wall < 180
    verdict(
        5,
        ok,
        f"max(u_eps1 - u_eps2) {worst['eps']:.1e}, max(u_f - u_f~) {worst['reaction']:.1e} (<= 1e-8) "
        f"while the pairs differ by up to {spread['eps']:.2f} and {spread['reaction']:.2f}; "
        f"8 draws x 4 members, {wall:.0f}s (< 180s)",
    )
    assert ok


# }}}

# {{{ 6: stability


def test_criterion_06_stability(tmp_path, verdict):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("stability_pair", "stability_lipschitz"):
        res = run_experiment(load(name), tmp_path / name)
        e = entries(res.report)["contraction_ratio"]
        ok &= e["passed"]
        parts.append(f"{name}: ratio {e['value']:.4f} <= {e['tolerance']:.4f}")
    wall = time.perf_counter() - t0
    ok &= wall < 300
    verdict(6, ok, "; ".join(parts) + f", {wall:.0f}s (< 300s)")
    assert ok


# }}}

# {{{ 9: initial attainment


def test_criterion_09_initial_attainment(verdict):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("single", "entropy_suite"):
        d = load(name).to_dict()
        d["model"]["noise"] = []
        d["solver"].update(T=0.128, record_stride=25)
        cfg = cfgmod.from_dict(d)
        model = cfg.model_spec()
        spec = noise_spec(cfg, model, 0)
        tr = solve(cfg.solver_config(), model, initial_field(cfg, spec), spec)
        T = cfg.solver.T
        A = initial_attainment(tr, tr.xi, [T / 4, T / 16, T / 64])
        good = A[0] > A[1] > A[2] and A[2] <= A[0] / 4
        ok &= good
        parts.append(f"{name}: A = {A[0]:.2e}, {A[1]:.2e}, {A[2]:.2e}")
    wall = time.perf_counter() - t0
    ok &= wall < 60
    verdict(9, ok, "; ".join(parts) + f" (decreasing, A(T/64) <= A(T/4)/4), {wall:.1f}s (< 60s)")
    assert ok


# }}}

# {{{ 10: validation


def test_criterion_10_validation(sweeps, tmp_path, verdict):
    t0 = time.perf_counter()
    res = run_experiment(load("convergence"), tmp_path / "conv")
    e = entries(res.report)
    errs = [v for k, v in res.summary if k.startswith("error_N")]
    conv_ok = e["errors_decreasing"]["passed"] and e["fitted_order"]["passed"]
    fine = oio.load_trajectory(sweeps[0]["refine_eps"][1] / "eps_03")
    rep = DiagnosticsReport()
    rows = vi_block(rep, fine, fine.model)
    vi_ok = len(rows) == 5 and rep.passed
    wall = time.perf_counter() - t0
    ok = conv_ok and vi_ok and wall < 300
    worst = min(r[1] for r in rows)
    verdict(
        10,
        ok,
        f"Barenblatt L1 errors {', '.join(f'{x:.2e}' for x in errs)}, order {e['fitted_order']['value']:.2f} (>= 0.5); "
        f"VI min over 5 comparisons {worst:.2e} >= -{rows[0][2]:.2e}; {wall:.0f}s (< 300s)",
    )
    assert ok


# }}}

# {{{ 11: reproducibility


def test_criterion_11_reproducibility(tmp_path, verdict):
    def run(out, workers):
        cmd = [sys.executable, "-m", "obstaclespde", "run", "--config", str(CONFIGS / "ensemble.toml"), "--out", str(out), "--workers", str(workers)]
        subprocess.run(cmd, check=True, cwd=ROOT, capture_output=True)
        return (out / "summary.csv").read_bytes()

    a = run(tmp_path / "a", 1)
    b = run(tmp_path / "b", 1)
    c = run(tmp_path / "c", 4)
    ok = a == b == c
    verdict(11, ok, f"ensemble summary.csv byte-identical across two invocations and workers 1/4: {ok}")
    assert ok


# }}}

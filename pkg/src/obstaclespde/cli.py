"""
Command line runner.

    obstaclespde run --config exp.toml [--out DIR] [--workers N] [--seed S] [--strict]
    obstaclespde sweep --config exp.toml --axis solver.eps --values 1e-1,1e-2,1e-3
    obstaclespde validate-config --config exp.toml
    obstaclespde replay --run DIR

The output directory is ``--out``, else ``$OBSTACLESPDE_OUT``, else the
config's ``experiment.output``.  Exit codes: 0 all diagnostics pass, 1 a
diagnostic failed, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context
from pathlib import Path

import numpy as np
import tomli_w

from . import __version__
from . import config as cfgmod
from . import io as oio
from . import plotting
from .diagnostics import DiagnosticsReport, apriori_monitor
from .errors import ConfigurationError, IntegrationError
from .experiments import entropy_block, run_experiment, trajectory_scalars
from .sde_driver import RNG_ALGORITHM

OUT_ENV = "OBSTACLESPDE_OUT"

EXIT_OK, EXIT_DIAGNOSTIC, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("obstaclespde")


def resolve_out(cli_out, cfg) -> Path:
    return Path(cli_out or os.environ.get(OUT_ENV) or cfg.experiment.output)


# {{{ artifacts


def _undetermined(report: DiagnosticsReport) -> list[str]:
    """Entries that could not be judged: non-finite values or flagged metadata."""
    out = [e["name"] for e in report.entries if e["passed"] is None and not math.isfinite(e["value"])]
    if report.metadata.get("flags"):
        out.append("flags")
    if report.metadata.get("attainment_skipped_taus"):
        out.append("attainment_skipped_taus")
    return out


def write_artifact(cfg, result, out: Path, wall: float, workers: int) -> list[str]:
    """Everything but the trajectory stores; returns the manifest entries."""
    h = cfg.hash()
    files = []

    def add(name, kind):
        files.append((name, kind))

    oio.write_text(out / "config.toml", cfg.dumps())
    add("config.toml", "config")
    oio.write_table(out / "summary.csv", ["name", "value"], result.summary, h)
    add("summary.csv", "summary")
    oio.write_text(out / "report.json", result.report.to_json() + "\n")
    add("report.json", "report")
    oio.write_text(out / "report.csv", f"# config_hash={h}\n" + result.report.to_csv())
    add("report.csv", "report")
    for name, (header, rows) in sorted(result.tables.items()):
        oio.write_table(out / name, header, rows, h)
        add(name, "table")
    for fig in result.figures:
        fig.render(out / fig.filename)
        add(fig.filename, "figure")
    for s in result.stores:
        add(s, "store")
    prov = {
        "config_hash": h,
        "seed": cfg.experiment.seed,
        "code_version": __version__,
        "rng": RNG_ALGORITHM,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "workers": workers,
        "wall_time_s": wall,
    }
    oio.write_text(out / "provenance.toml", tomli_w.dumps(prov))
    add("provenance.toml", "provenance")
    missing = [f for f, _ in files if not (out / f).exists()]
    if missing:
        raise RuntimeError(f"artifact files missing: {missing}")
    oio.write_table(out / "manifest.csv", ["file", "kind"], files, h)
    return [f for f, _ in files]


def _exit_for(report: DiagnosticsReport, strict: bool) -> int:
    fails = report.failures()
    for e in fails:
        tol = "" if e["tolerance"] is None else f" (tolerance {e['tolerance']:.3g})"
        print(f"FAIL {e['name']} = {e['value']:.6g}{tol}", file=sys.stderr)
    if fails:
        return EXIT_DIAGNOSTIC
    if strict:
        und = _undetermined(report)
        if und:
            print(f"FAIL undetermined diagnostics under --strict: {', '.join(und)}", file=sys.stderr)
            return EXIT_DIAGNOSTIC
    return EXIT_OK


def execute(cfg, out: Path, workers: int = 1):
    t0 = time.perf_counter()
    result = run_experiment(cfg, out, workers)
    write_artifact(cfg, result, out, time.perf_counter() - t0, workers)
    return result


# }}}

# {{{ verbs


def _load(args):
    cfg = cfgmod.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfgmod.override_seed(cfg, args.seed)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out = resolve_out(args.out, cfg)
    log.info("running %s experiment into %s", cfg.experiment.kind, out)
    result = execute(cfg, out, args.workers)
    status = "PASS" if result.report.passed else "FAIL"
    print(f"{status} {cfg.experiment.kind} -> {out}")
    return _exit_for(result.report, args.strict)


def _parse_values(text: str):
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            vals.append(int(tok))
        except ValueError:
            try:
                vals.append(float(tok))
            except ValueError:
                raise ConfigurationError(f"--values: {tok!r} is not a number") from None
    if not vals:
        raise ConfigurationError("--values: need at least one value")
    return vals


def _sweep_one(job):
    cfg, out = job
    res = execute(cfg, Path(out), 1)
    # figures hold closures; only picklable parts cross the process boundary
    return res.summary, res.report


def cmd_sweep(args) -> int:
    base = _load(args)
    values = _parse_values(args.values)
    out = resolve_out(args.out, base)
    field_default = _lookup(base.to_dict(), args.axis)
    if isinstance(field_default, float) or (isinstance(field_default, list) and field_default and isinstance(field_default[0], float)):
        values = [float(v) for v in values]
    cfgs = [base.with_value(args.axis, v) for v in values]
    jobs = [(c, str(out / f"value_{i:03d}")) for i, c in enumerate(cfgs)]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(args.workers, len(jobs)), mp_context=get_context("spawn")) as ex:
            results = list(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    names = []
    for summary, _ in results:
        for n, _ in summary:
            if n not in names:
                names.append(n)
    rows = []
    for v, (summary, report) in zip(values, results):
        d = dict(summary)
        rows.append([v] + [d.get(n) for n in names] + [report.passed])
    header = [args.axis] + names + ["passed"]
    if "violation_norm" in names:
        col = [row[1 + names.index("violation_norm")] for row in rows]
        slopes = [None]
        for (a, ya), (b, yb) in zip(zip(values, col), zip(values[1:], col[1:])):
            ok = ya and yb and ya > 0 and yb > 0 and a > 0 and b > 0 and a != b
            slopes.append(math.log(yb / ya) / math.log(b / a) if ok else None)
        header.append("violation_norm_slope")
        for row, s in zip(rows, slopes):
            row.append(s)
    h = base.hash()
    out.mkdir(parents=True, exist_ok=True)
    oio.write_table(out / "aggregate.csv", header, rows, h)
    for key in ("violation_norm", "entropy_equality_plus"):
        if key in names:
            col = [row[1 + names.index(key)] for row in rows]
            if all(c is not None for c in col):
                plotting.sweep(out / f"sweep_{key}.png", values, np.abs(col), args.axis, key)
    failed = [v for v, (_, report) in zip(values, results) if not report.passed]
    print(f"{'PASS' if not failed else 'FAIL'} sweep over {args.axis} ({len(values)} runs) -> {out}")
    codes = [_exit_for(report, args.strict) for _, report in results]
    return max(codes)


def _lookup(d, path):
    cur = d
    for p in path.split("."):
        if not isinstance(cur, dict) or p not in cur:
            return None
        cur = cur[p]
    return cur


def cmd_validate(args) -> int:
    cfg = _load(args)
    print(f"OK {args.config} (kind={cfg.experiment.kind}, config_hash={cfg.hash()})")
    return EXIT_OK


def cmd_replay(args) -> int:
    run = Path(args.run)
    cfg = cfgmod.load(run / "config.toml")
    _, rows, h = oio.read_table(run / "manifest.csv")
    stores = [r["file"] for r in rows if r["kind"] == "store"]
    if not stores:
        raise ConfigurationError(f"{run}: no trajectory stores to replay")
    rep = DiagnosticsReport(metadata={"config_hash": h, "kind": "replay", "stores": stores})
    table = []
    for s in stores:
        traj = oio.load_trajectory(run / s)
        sc = trajectory_scalars(traj)
        dg = cfg.diagnostics
        rep.add(f"{s}:mass_residual_max", sc["mass_residual_max"], dg.mass_tol, sc["mass_residual_max"] <= dg.mass_tol)
        rep.add(f"{s}:skorohod_identity_gap", sc["skorohod_identity_gap"], 1e-9, sc["skorohod_identity_gap"] <= 1e-9)
        rep.add(f"{s}:violation_norm", sc["violation_norm"])
        for e in apriori_monitor(traj).entries:
            rep.add(f"{s}:apriori_{e['name']}", e["value"])
        if traj.config.steps > 0:
            sub = DiagnosticsReport()
            entropy_block(sub, traj, cfg)
            for e in sub.entries:
                rep.add(f"{s}:{e['name']}", e["value"], e["tolerance"], e["passed"])
        table.append([s] + [sc[k] for k in sorted(sc)])
    oio.write_text(run / "replay.json", rep.to_json() + "\n")
    oio.write_text(run / "replay.csv", f"# config_hash={h}\n" + rep.to_csv())
    print(f"{'PASS' if rep.passed else 'FAIL'} replay of {len(stores)} store(s) in {run}")
    return _exit_for(rep, args.strict)


# }}}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obstaclespde", description="Penalized stochastic obstacle problem experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, with_out=True):
        sp.add_argument("--config", required=True, metavar="PATH", help="experiment config (TOML)")
        if with_out:
            sp.add_argument("--out", metavar="DIR", help=f"output directory (overrides ${OUT_ENV})")
            sp.add_argument("--workers", type=int, default=1, metavar="N", help="worker processes")
            sp.add_argument("--seed", type=int, metavar="S", help="override experiment.seed")
            sp.add_argument("--strict", action="store_true", help="also fail on undetermined diagnostics")

    common(sub.add_parser("run", help="run one experiment"))
    sw = sub.add_parser("sweep", help="one run per value of a numeric config field")
    common(sw)
    sw.add_argument("--axis", required=True, help="dotted field name, e.g. solver.eps")
    sw.add_argument("--values", required=True, help="comma separated values")
    common(sub.add_parser("validate-config", help="parse and check a config"), with_out=False)
    rp = sub.add_parser("replay", help="recompute diagnostics on stored trajectories")
    rp.add_argument("--run", required=True, metavar="DIR", help="artifact directory of an earlier run")
    rp.add_argument("--strict", action="store_true")
    return p


VERBS = {"run": cmd_run, "sweep": cmd_sweep, "validate-config": cmd_validate, "replay": cmd_replay}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return VERBS[args.verb](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

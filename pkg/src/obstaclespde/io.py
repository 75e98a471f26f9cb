"""
On-disk formats: field files, trajectory stores and summary tables.

Byte layouts are documented in docs/FORMATS.md.  Floats are written with
``repr`` (shortest round-tripping form), so text files reload bit-exactly.
"""

from __future__ import annotations

import csv
import io
import os
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .config import model_from_dict, model_to_dict
from .grid import Field, TorusGrid
from .sde_driver import NoisePathSpec, load_increments, save_increments
from .solver import SolverConfig, Trajectory

FIELD_MAGIC = b"OSFD"
FIELD_VERSION = 1
_FIELD_HEADER = "<4sHHQ16s"

# {{{ fields


def _hash_bytes(config_hash: str) -> bytes:
    return config_hash.encode("ascii")[:16].ljust(16, b"\0")


def write_field_binary(path, field: Field, config_hash: str = ""):
    """Header ``magic, version, dim, N, hash[16]`` then ``N^d`` little-endian float64, row-major."""
    grid = field.grid
    header = struct.pack(_FIELD_HEADER, FIELD_MAGIC, FIELD_VERSION, grid.dim, grid.points_per_dim, _hash_bytes(config_hash))
    data = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    _atomic_write(path, header + data)


def read_field_binary(path) -> tuple[Field, str]:
    data = Path(path).read_bytes()
    size = struct.calcsize(_FIELD_HEADER)
    if len(data) < size:
        raise ValueError(f"{path}: truncated field header")
    magic, version, dim, N, h = struct.unpack(_FIELD_HEADER, data[:size])
    if magic != FIELD_MAGIC:
        raise ValueError(f"{path}: not a field file")
    if version != FIELD_VERSION:
        raise ValueError(f"{path}: unsupported field version {version}")
    grid = TorusGrid(dim, N)
    body = data[size:]
    if len(body) != 8 * grid.total_points:
        raise ValueError(f"{path}: expected {grid.total_points} values, found {len(body) // 8}")
    vals = np.frombuffer(body, dtype="<f8").reshape(grid.shape).astype(float)
    return Field(grid, vals), h.rstrip(b"\0").decode("ascii")


def write_field_csv(path, field: Field, config_hash: str = ""):
    """One comment header line, then one value per line in row-major order."""
    grid = field.grid
    lines = [f"# field dim={grid.dim} N={grid.points_per_dim} config_hash={config_hash}"]
    lines.extend(repr(float(v)) for v in np.ravel(field.values))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def read_field_csv(path) -> tuple[Field, str]:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# field"):
        raise ValueError(f"{path}: missing field header")
    meta = dict(tok.split("=", 1) for tok in text[0][2:].split()[1:])
    grid = TorusGrid(int(meta["dim"]), int(meta["N"]))
    vals = np.array([float(s) for s in text[1:] if s.strip()])
    if vals.size != grid.total_points:
        raise ValueError(f"{path}: expected {grid.total_points} values, found {vals.size}")
    return Field(grid, vals.reshape(grid.shape)), meta.get("config_hash", "")


# }}}

# {{{ tables


def _atomic_write(path, data: bytes):
    """Write to a sibling temp file and rename, so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def format_value(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_table(path, header: list[str], rows, config_hash: str = ""):
    """CSV with a ``# config_hash=...`` comment line first."""
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    _atomic_write(path, buf.getvalue().encode())


def read_table(path) -> tuple[list[str], list[dict], str]:
    lines = Path(path).read_text().splitlines()
    h = ""
    if lines and lines[0].startswith("# config_hash="):
        h = lines[0].split("=", 1)[1]
        lines = lines[1:]
    rd = csv.DictReader(lines)
    rows = list(rd)
    return list(rd.fieldnames or []), rows, h


def write_text(path, text: str):
    _atomic_write(path, text.encode())


# }}}

# {{{ trajectory stores


def _solver_dict(cfg: SolverConfig) -> dict:
    d = {
        "dim": cfg.grid.dim,
        "N": cfg.grid.points_per_dim,
        "T": float(cfg.T),
        "dt": float(cfg.dt),
        "eps": float(cfg.eps),
        "scheme": cfg.scheme,
        "cfl_safety": float(cfg.cfl_safety),
        "record_stride": int(cfg.record_stride),
        "cg_tol": float(cfg.cg_tol),
    }
    if cfg.level is not None:
        d["level"] = int(cfg.level)
    if cfg.state_bound is not None:
        d["state_bound"] = float(cfg.state_bound)
    return d


def save_trajectory(traj: Trajectory, directory, config_hash: str = "") -> Path:
    """Directory with ``run.toml``, ``index.csv``, ``fields/*.bin`` and ``increments.bin``.

    ``index.csv`` is written last, so its presence marks a complete store.
    """
    directory = Path(directory)
    (directory / "fields").mkdir(parents=True, exist_ok=True)
    echo = {
        "config_hash": config_hash,
        "solver": _solver_dict(traj.config),
        "model": model_to_dict(traj.model),
        "noise": asdict(traj.noise_spec),
        "running": {k: float(v) for k, v in sorted(traj.running.items())},
    }
    write_text(directory / "run.toml", tomli_w.dumps(echo))
    grid = traj.grid
    write_field_binary(directory / "fields" / "initial.bin", Field(grid, traj.xi), config_hash)
    rows = []
    for i, t in enumerate(traj.times):
        sname = f"fields/state_{i:06d}.bin"
        pname = f"fields/penalty_{i:06d}.bin"
        write_field_binary(directory / sname, traj.state(i), config_hash)
        write_field_binary(directory / pname, traj.penalty_field(i), config_hash)
        rows.append([i, float(t), sname, pname])
    save_increments(directory / "increments.bin", traj.noise_spec, traj.increments)
    write_table(directory / "index.csv", ["record", "time", "state_file", "penalty_file"], rows, config_hash)
    return directory


def is_complete_store(directory) -> bool:
    return (Path(directory) / "index.csv").is_file()


def load_trajectory(directory) -> Trajectory:
    directory = Path(directory)
    echo = tomli.loads((directory / "run.toml").read_text())
    s = echo["solver"]
    grid = TorusGrid(s["dim"], s["N"])
    cfg = SolverConfig(
        grid=grid,
        T=s["T"],
        dt=s["dt"],
        eps=s["eps"],
        level=s.get("level"),
        cfl_safety=s["cfl_safety"],
        scheme=s["scheme"],
        record_stride=s["record_stride"],
        state_bound=s.get("state_bound"),
        cg_tol=s["cg_tol"],
    )
    model = model_from_dict(echo["model"], grid.dim)
    noise = NoisePathSpec(**echo["noise"])
    _, rows, _ = read_table(directory / "index.csv")
    times = np.array([float(r["time"]) for r in rows])
    states = np.stack([read_field_binary(directory / r["state_file"])[0].values for r in rows])
    pens = np.stack([read_field_binary(directory / r["penalty_file"])[0].values for r in rows])
    xi = read_field_binary(directory / "fields" / "initial.bin")[0].values
    _, incs = load_increments(directory / "increments.bin")
    return Trajectory(cfg, model, noise, times, states, pens, xi, incs, dict(echo.get("running", {})))


# }}}

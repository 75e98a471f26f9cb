import math

import numpy as np

from obstaclespde.grid import TorusGrid
from obstaclespde.model import ModelSpec, NoiseMode, NoiseModel, PowerNonlinearity, make_obstacle, make_reaction
from obstaclespde.sde_driver import NoisePathSpec
from obstaclespde.solver import SolverConfig, default_state_bound, stable_dt


def build(
    N=16, dim=1, T=0.02, eps=1e-2, noise=0.2, obstacle=0.35, reaction=0.0, level=None, stride=1, seed=0, scheme="explicit-EM"
):
    grid = TorusGrid(dim, N)
    modes = ()
    if noise:
        e = (1.0,) if dim == 1 else (0.6, 0.8)
        w = (1,) * dim
        modes = (NoiseMode(noise, "sine", "cos", w, 0.0, e), NoiseMode(0.5 * noise, "tanh", "const", w, 0.0, e))
    ob = make_obstacle("cosine", {"level": obstacle, "amplitude": 0.1, "drift": 0.5, "wavenumber": [1] * dim}) if obstacle is not None else make_obstacle("none")
    re = make_reaction("sine", {"amplitude": reaction}) if reaction else make_reaction("zero")
    model = ModelSpec(PowerNonlinearity(2.0), re, ob, NoiseModel(modes, dim))
    coords = grid.coordinates()
    xi = grid.field(0.6 + 0.15 * np.cos(2 * math.pi * coords[0]))
    bound = default_state_bound(model, grid, xi.values, T)
    probe = SolverConfig(grid, T, 1e-4, eps, level=level, scheme=scheme) if T == 0 else None
    limit = stable_dt(SolverConfig(grid, 1.0, 1.0, eps, level=level, scheme=scheme), model, bound)
    dt = T / (20 * math.ceil(T / (10 * min(limit, 1e-3)))) if T > 0 else 1e-4
    cfg = probe or SolverConfig(grid, T, dt, eps, level=level, scheme=scheme, record_stride=stride)
    spec = NoisePathSpec(seed, model.noise.mode_count, cfg.steps, cfg.dt)
    return cfg, model, xi, spec

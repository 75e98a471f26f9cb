"""
Experiment configuration: TOML text <-> typed, validated sections.

The schema lives in ``SCHEMA`` below (and in docs/CONFIG.md).  Parsing rejects
unknown keys, wrong types and non-monotone schedules with a
:class:`ConfigurationError` naming the offending field.  ``dumps(loads(s))``
is a fixed point, so configs round-trip.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli
import tomli_w

from .errors import ConfigurationError
from .grid import TorusGrid
from .model import (
    INITIAL_CONDITIONS,
    OBSTACLES,
    REACTIONS,
    ModelSpec,
    NoiseMode,
    NoiseModel,
    PowerNonlinearity,
    make_initial_condition,
    make_obstacle,
    make_reaction,
)
from .model.noise import R_PROFILES, X_PROFILES
from .solver import SCHEMES, SolverConfig

EXPERIMENT_KINDS = (
    "single",
    "refine-eps",
    "ensemble",
    "stability-pair",
    "comparison-pair",
    "convergence-study",
    "entropy-suite",
)

CALIBRATED = "calibrated"


# {{{ sections


@dataclass(frozen=True)
class Family:
    """A registered coefficient family and its keyword parameters."""

    family: str
    params: dict = field(default_factory=dict)

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.params.items()))))


@dataclass(frozen=True)
class ModelSection:
    m: float = 2.0
    K: float = 3.0
    kappa: float = 1.0
    obstacle: Family = Family("none")
    reaction: Family = Family("zero")
    initial: Family = Family("cosine")
    noise: tuple = ()  # tuple of NoiseMode keyword dicts


@dataclass(frozen=True)
class SolverSection:
    dim: int = 1
    N: int = 64
    T: float = 0.5
    dt: float = 5e-5
    eps: tuple = (1e-2,)
    levels: tuple = ()
    scheme: str = "explicit-EM"
    cfl_safety: float = 0.9
    record_stride: int = 1
    state_bound: float = 0.0  # 0 selects the data-derived bound


@dataclass(frozen=True)
class ExperimentSection:
    kind: str = "single"
    name: str = "run"
    seed: int = 0
    ensemble_size: int = 1
    output: str = "out"
    # stability-pair: second initial condition; comparison-pair: shifted reaction
    partner_initial: Family = Family("none")
    reaction_shift: float = 0.1
    # convergence-study
    grids: tuple = (32, 64, 128, 256)
    oracle: str = "barenblatt"
    barenblatt_C: float = 0.1
    barenblatt_t0: float = 1e-3


@dataclass(frozen=True)
class DiagnosticsSection:
    deltas: tuple = (1.0, 0.1)
    center: float = 0.6
    taus: tuple = (0.25, 0.0625, 0.015625)  # fractions of T
    entropy_tol: object = CALIBRATED
    contraction_tol: float = 1e-6
    mass_tol: float = 1e-12
    comparison_tol: float = 1e-8
    # entropy-suite: equality residuals over this many (dt, h^2) halvings; 0 skips
    ladder_levels: int = 0
    ladder_ratio: float = 1.5


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSection = ModelSection()
    solver: SolverSection = SolverSection()
    experiment: ExperimentSection = ExperimentSection()
    diagnostics: DiagnosticsSection = DiagnosticsSection()

    # {{{ derived objects

    def grid(self) -> TorusGrid:
        return TorusGrid(self.solver.dim, self.solver.N)

    def model_spec(self) -> ModelSpec:
        return build_model(self.model, self.solver.dim)

    def initial_condition(self, family: Family | None = None):
        fam = family or self.model.initial
        return make_initial_condition(fam.family, fam.params)

    def solver_config(self, eps: float | None = None, level=...) -> SolverConfig:
        s = self.solver
        if level is ...:
            level = s.levels[-1] if s.levels else None
        return SolverConfig(
            grid=self.grid(),
            T=s.T,
            dt=s.dt,
            eps=s.eps[-1] if eps is None else eps,
            level=level,
            cfl_safety=s.cfl_safety,
            scheme=s.scheme,
            record_stride=s.record_stride,
            state_bound=s.state_bound or None,
        )

    # }}}

    def to_dict(self) -> dict:
        return to_dict(self)

    def dumps(self) -> str:
        return dumps(self)

    def hash(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    def with_value(self, path: str, value) -> "ExperimentConfig":
        """Copy with the dotted numeric field ``path`` (e.g. ``solver.dt``) replaced."""
        d = self.to_dict()
        section, _, key = path.partition(".")
        if section not in d or not key:
            raise ConfigurationError(f"{path}: not a config field")
        sub = d[section]
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(sub.get(p), dict):
                raise ConfigurationError(f"{path}: not a config field")
            sub = sub[p]
        leaf = parts[-1]
        if leaf not in sub and not (section == "model" and parts[0] in ("obstacle", "reaction", "initial")):
            raise ConfigurationError(f"{path}: not a config field")
        old = sub.get(leaf)
        if isinstance(old, bool) or not (old is None or isinstance(old, (int, float, list))):
            raise ConfigurationError(f"{path}: sweeps need a numeric field")
        if isinstance(old, list):
            value = [value]
        sub[leaf] = value
        return from_dict(d)


# }}}

# {{{ model construction


def build_model(sec: ModelSection, dim: int) -> ModelSpec:
    modes = tuple(NoiseMode(**_tuplify(md)) for md in sec.noise)
    return ModelSpec(
        nonlinearity=PowerNonlinearity(sec.m, sec.K, sec.kappa),
        reaction=make_reaction(sec.reaction.family, sec.reaction.params),
        obstacle=make_obstacle(sec.obstacle.family, sec.obstacle.params),
        noise=NoiseModel(modes, dim),
        K=sec.K,
        kappa=sec.kappa,
    )


def model_to_dict(model: ModelSpec) -> dict:
    """Inverse of :func:`build_model` for power nonlinearities (initial data excluded)."""
    nl = model.nonlinearity
    if not isinstance(nl, PowerNonlinearity):
        raise ConfigurationError("only power nonlinearities are serializable")
    return {
        "m": float(nl.m),
        "K": float(model.K),
        "kappa": float(model.kappa),
        "obstacle": {"family": model.obstacle.name, "params": _listify(model.obstacle.params())},
        "reaction": {"family": model.reaction.name, "params": _listify(model.reaction.params())},
        "noise": [_listify(asdict(md)) for md in model.noise.modes],
    }


def model_from_dict(d: dict, dim: int) -> ModelSpec:
    d = dict(d)
    d.setdefault("initial", {"family": "constant"})
    return build_model(_model_section(d, "model"), dim)


def _tuplify(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def _listify(d):
    if isinstance(d, dict):
        return {k: _listify(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_listify(v) for v in d]
    return d


# }}}

# {{{ parsing and validation


def _fail(path, reason):
    raise ConfigurationError(f"{path}: {reason}")


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(path, value, default):
    """Type-check ``value`` against the type of the section default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            _fail(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            _fail(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not _is_number(value):
            _fail(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            _fail(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            _fail(path, f"expected a list, got {value!r}")
        return tuple(value)
    return value


def _family(path, raw, registry) -> Family:
    if not isinstance(raw, dict):
        _fail(path, "expected a table with 'family' and optional 'params'")
    extra = set(raw) - {"family", "params"}
    if extra:
        _fail(f"{path}.{sorted(extra)[0]}", "unknown key")
    name = raw.get("family")
    if not isinstance(name, str):
        _fail(f"{path}.family", "missing or not a string")
    if name not in registry:
        _fail(f"{path}.family", f"unknown family {name!r}; registered: {sorted(registry)}")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        _fail(f"{path}.params", "expected a table")
    return Family(name, dict(params))


def _section(cls, raw, path, special=None):
    special = special or {}
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        _fail(path, "expected a table")
    names = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(names)
    if unknown:
        _fail(f"{path}.{sorted(unknown)[0]}", "unknown key")
    kw = {}
    default = cls()
    for name, value in raw.items():
        p = f"{path}.{name}"
        if name in special:
            kw[name] = special[name](p, value)
        else:
            kw[name] = _coerce(p, value, getattr(default, name))
    return cls(**kw)


def _noise_modes(path, raw):
    if not isinstance(raw, list):
        _fail(path, "expected an array of tables")
    known = {f.name for f in fields(NoiseMode)}
    out = []
    for i, md in enumerate(raw):
        p = f"{path}[{i}]"
        if not isinstance(md, dict):
            _fail(p, "expected a table")
        unknown = set(md) - known
        if unknown:
            _fail(f"{p}.{sorted(unknown)[0]}", "unknown key")
        if "amplitude" not in md:
            _fail(f"{p}.amplitude", "required")
        if md.get("r_profile", "sine") not in R_PROFILES:
            _fail(f"{p}.r_profile", f"unknown profile; choose from {sorted(R_PROFILES)}")
        if md.get("x_profile", "const") not in X_PROFILES:
            _fail(f"{p}.x_profile", f"unknown profile; choose from {list(X_PROFILES)}")
        out.append(dict(md))
    return tuple(out)


def _model_section(raw, path):
    return _section(
        ModelSection,
        raw,
        path,
        {
            "obstacle": lambda p, v: _family(p, v, OBSTACLES),
            "reaction": lambda p, v: _family(p, v, REACTIONS),
            "initial": lambda p, v: _family(p, v, INITIAL_CONDITIONS),
            "noise": _noise_modes,
        },
    )


def _tolerance(path, v):
    if v == CALIBRATED or (_is_number(v) and v >= 0):
        return float(v) if _is_number(v) else v
    _fail(path, f"expected a nonnegative number or {CALIBRATED!r}")


def _strictly_monotone(path, seq, decreasing):
    for a, b in zip(seq, seq[1:]):
        if (decreasing and not b < a) or (not decreasing and not b > a):
            _fail(path, f"schedule must be strictly {'decreasing' if decreasing else 'increasing'}")


def from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigurationError("config: expected a table at top level")
    unknown = set(d) - {"model", "solver", "experiment", "diagnostics"}
    if unknown:
        _fail(sorted(unknown)[0], "unknown section")
    model = _model_section(d.get("model"), "model")
    solver = _section(SolverSection, d.get("solver"), "solver")
    experiment = _section(
        ExperimentSection,
        d.get("experiment"),
        "experiment",
        {"partner_initial": lambda p, v: _family(p, v, {"none": None, **INITIAL_CONDITIONS})},
    )
    diagnostics = _section(DiagnosticsSection, d.get("diagnostics"), "diagnostics", {"entropy_tol": _tolerance})
    cfg = ExperimentConfig(model, solver, experiment, diagnostics)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig):
    """Semantic checks beyond types; raises :class:`ConfigurationError`."""
    m, s, e, dg = cfg.model, cfg.solver, cfg.experiment, cfg.diagnostics
    if not m.m > 1:
        _fail("model.m", "must exceed 1")
    if m.K < 1:
        _fail("model.K", "must be >= 1")
    if not 0 < m.kappa <= 1:
        _fail("model.kappa", "must lie in (0, 1]")
    if s.dim not in (1, 2):
        _fail("solver.dim", "must be 1 or 2")
    if s.N < 3:
        _fail("solver.N", "must be >= 3")
    if not s.eps:
        _fail("solver.eps", "schedule must not be empty")
    if any(not _is_number(v) or v <= 0 for v in s.eps):
        _fail("solver.eps", "entries must be positive numbers")
    _strictly_monotone("solver.eps", s.eps, decreasing=True)
    if any(not isinstance(v, int) or v < 1 for v in s.levels):
        _fail("solver.levels", "entries must be integers >= 1")
    _strictly_monotone("solver.levels", s.levels, decreasing=False)
    if s.scheme not in SCHEMES:
        _fail("solver.scheme", f"must be one of {list(SCHEMES)}")
    if s.state_bound < 0:
        _fail("solver.state_bound", "must be >= 0 (0 selects the data-derived bound)")
    if e.kind not in EXPERIMENT_KINDS:
        _fail("experiment.kind", f"must be one of {list(EXPERIMENT_KINDS)}")
    if e.ensemble_size < 1:
        _fail("experiment.ensemble_size", "must be >= 1")
    if not 0 <= e.seed < 2**63:
        _fail("experiment.seed", "must lie in [0, 2^63)")
    if e.kind == "convergence-study":
        if m.noise:
            _fail("model.noise", "convergence studies need a deterministic model")
        if e.oracle not in ("barenblatt", "self"):
            _fail("experiment.oracle", "must be 'barenblatt' or 'self'")
        _strictly_monotone("experiment.grids", e.grids, decreasing=False)
    if e.kind == "stability-pair" and e.partner_initial.family == "none":
        _fail("experiment.partner_initial", "stability pairs need a second initial condition")
    if e.kind == "refine-eps" and len(s.eps) < 2:
        _fail("solver.eps", "refine-eps needs at least two entries")
    for p, seq in (("diagnostics.deltas", dg.deltas), ("diagnostics.taus", dg.taus)):
        if any(not _is_number(v) or v <= 0 for v in seq):
            _fail(p, "entries must be positive numbers")
    _strictly_monotone("diagnostics.taus", dg.taus, decreasing=True)
    if dg.ladder_levels == 1 or dg.ladder_levels < 0:
        _fail("diagnostics.ladder_levels", "must be 0 (off) or >= 2")
    if not dg.ladder_ratio > 1:
        _fail("diagnostics.ladder_ratio", "must exceed 1")
    try:
        cfg.model_spec()
        cfg.initial_condition()
        if e.partner_initial.family != "none":
            cfg.initial_condition(e.partner_initial)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigurationError(f"model: {exc}") from None
    if not e.kind == "convergence-study":
        try:
            cfg.solver_config()
        except ConfigurationError as exc:
            raise ConfigurationError(f"solver: {exc}") from None


# }}}

# {{{ serialization


def _section_dict(sec) -> dict:
    out = {}
    for f in fields(sec):
        v = getattr(sec, f.name)
        if isinstance(v, Family):
            v = {"family": v.family, "params": _listify(v.params)}
        out[f.name] = _listify(v)
    return out


def to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "model": _section_dict(cfg.model),
        "solver": _section_dict(cfg.solver),
        "experiment": _section_dict(cfg.experiment),
        "diagnostics": _section_dict(cfg.diagnostics),
    }


def dumps(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def loads(text: str) -> ExperimentConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"config: not valid TOML ({exc})") from None
    return from_dict(raw)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"config: cannot read {path} ({exc.strerror})") from None
    return loads(text)


def override_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, experiment=replace(cfg.experiment, seed=int(seed)))


# }}}

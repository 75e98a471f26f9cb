"""
Registered families for the obstacle ``psi(t, x)``, the reaction ``f(t, x, r)``
and initial data ``xi(x)``.

Every family is a frozen dataclass built from a name and keyword parameters
through :func:`make_obstacle`, :func:`make_reaction` and
:func:`make_initial_condition`; these are the names used in config files.
Obstacles carry an analytic ``psi_t`` so comparison functions built on them
have exact time derivatives.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# an obstacle this low is never active for bounded data
NO_OBSTACLE_LEVEL = -1.0e9


def _phase(coords, wavenumber, phase=0.0):
    th = phase
    for w, x in zip(wavenumber, coords):
        th = th + TWO_PI * w * np.asarray(x, dtype=float)
    return th


def _wave(coords, wavenumber):
    wn = tuple(wavenumber)
    if len(wn) < len(coords):
        wn = wn + (0,) * (len(coords) - len(wn))
    return wn


def smoothstep(s):
    """Quintic ramp: 0 for s <= 0, 1 for s >= 1, C^2 in between."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


def smoothstep_prime(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    sc = np.clip(s, 0.0, 1.0)
    return np.where(inside, 30.0 * sc * sc * (1.0 - sc) ** 2, 0.0)


def _bump_profile(coords, center, radius):
    """``cos^2`` bump of the given radius around ``center`` (periodic distance)."""
    r2 = 0.0
    for x, c in zip(coords, center):
        dx = np.asarray(x, dtype=float) - c
        dx = dx - np.round(dx)
        r2 = r2 + dx * dx
    r = np.sqrt(r2)
    return np.where(r < radius, np.cos(0.5 * math.pi * r / radius) ** 2, 0.0)


# {{{ obstacles


class Obstacle:
    name = "obstacle"
    smoothness = "C2x"

    def psi(self, t, coords):
        raise NotImplementedError

    def psi_t(self, t, coords):
        raise NotImplementedError

    def params(self) -> dict:
        return asdict(self)

    @property
    def is_inactive(self) -> bool:
        return False


@dataclass(frozen=True)
class NoObstacle(Obstacle):
    """Constant far below any bounded state; the unconstrained equation."""

    level: float = NO_OBSTACLE_LEVEL
    name = "none"

    def psi(self, t, coords):
        return np.full(np.shape(coords[0]), self.level)

    def psi_t(self, t, coords):
        return np.zeros(np.shape(coords[0]))

    @property
    def is_inactive(self) -> bool:
        return True


@dataclass(frozen=True)
class ConstantObstacle(Obstacle):
    level: float = 0.0
    name = "constant"

    def psi(self, t, coords):
        return np.full(np.shape(coords[0]), self.level)

    def psi_t(self, t, coords):
        return np.zeros(np.shape(coords[0]))


@dataclass(frozen=True)
class CosineObstacle(Obstacle):
    """``level + amplitude*cos(2 pi w.x + phase) + drift*t``."""

    level: float = 0.0
    amplitude: float = 0.1
    wavenumber: tuple = (1,)
    phase: float = 0.0
    drift: float = 0.0
    name = "cosine"

    def psi(self, t, coords):
        th = _phase(coords, _wave(coords, self.wavenumber), self.phase)
        return self.level + self.amplitude * np.cos(th) + self.drift * t

    def psi_t(self, t, coords):
        return np.full(np.shape(coords[0]), float(self.drift))


@dataclass(frozen=True)
class RampObstacle(Obstacle):
    """Cosine base that rises by ``jump*(1 + cos)/2`` over ``[t_on, t_on + width]``.

    A width comparable to the time step makes the obstacle overtake the state
    almost instantaneously, the regime where the penalized violation scales
    like ``sqrt(eps)``.
    """

    level: float = 0.0
    amplitude: float = 0.1
    wavenumber: tuple = (1,)
    phase: float = 0.0
    jump: float = 0.5
    t_on: float = 0.1
    width: float = 1e-6
    name = "ramp"

    def _profile(self, coords):
        th = _phase(coords, _wave(coords, self.wavenumber), self.phase)
        return np.cos(th), 0.5 * (1.0 + np.cos(th))

    def psi(self, t, coords):
        base, prof = self._profile(coords)
        return self.level + self.amplitude * base + self.jump * prof * smoothstep((t - self.t_on) / self.width)

    def psi_t(self, t, coords):
        _, prof = self._profile(coords)
        return self.jump * prof * smoothstep_prime((t - self.t_on) / self.width) / self.width


@dataclass(frozen=True)
class BumpObstacle(Obstacle):
    """``level + height * cos^2`` bump, optionally growing linearly in time."""

    level: float = 0.0
    height: float = 0.5
    center: tuple = (0.5,)
    radius: float = 0.25
    growth: float = 0.0
    name = "bump"

    def psi(self, t, coords):
        return self.level + (self.height + self.growth * t) * _bump_profile(coords, self.center, self.radius)

    def psi_t(self, t, coords):
        return self.growth * _bump_profile(coords, self.center, self.radius)


OBSTACLES = {
    cls.name: cls for cls in (NoObstacle, ConstantObstacle, CosineObstacle, RampObstacle, BumpObstacle)
}


# }}}

# {{{ reactions


class Reaction:
    name = "reaction"

    def f(self, t, coords, r):
        raise NotImplementedError

    def f_r(self, t, coords, r):
        raise NotImplementedError

    def lipschitz(self) -> float:
        """Analytic bound on ``|f_r|``."""
        raise NotImplementedError

    def params(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ZeroReaction(Reaction):
    name = "zero"

    def f(self, t, coords, r):
        return np.zeros(np.broadcast(np.asarray(r), coords[0]).shape)

    def f_r(self, t, coords, r):
        return self.f(t, coords, r)

    def lipschitz(self) -> float:
        return 0.0


@dataclass(frozen=True)
class LinearReaction(Reaction):
    """``slope*r + offset + x_amplitude*cos(2 pi x_1)``."""

    slope: float = 0.0
    offset: float = 0.0
    x_amplitude: float = 0.0
    name = "linear"

    def f(self, t, coords, r):
        r = np.asarray(r, dtype=float)
        return self.slope * r + self.offset + self.x_amplitude * np.cos(TWO_PI * np.asarray(coords[0]))

    def f_r(self, t, coords, r):
        return np.full(np.broadcast(np.asarray(r), coords[0]).shape, float(self.slope))

    def lipschitz(self) -> float:
        return abs(self.slope)


@dataclass(frozen=True)
class SineReaction(Reaction):
    """``amplitude*sin(r + shift) + offset + x_amplitude*cos(2 pi x_1)``."""

    amplitude: float = 1.0
    shift: float = 0.0
    offset: float = 0.0
    x_amplitude: float = 0.0
    name = "sine"

    def f(self, t, coords, r):
        r = np.asarray(r, dtype=float)
        return (
            self.amplitude * np.sin(r + self.shift)
            + self.offset
            + self.x_amplitude * np.cos(TWO_PI * np.asarray(coords[0]))
        )

    def f_r(self, t, coords, r):
        return self.amplitude * np.cos(np.asarray(r, dtype=float) + self.shift) + 0.0 * np.asarray(coords[0])

    def lipschitz(self) -> float:
        return abs(self.amplitude)


REACTIONS = {cls.name: cls for cls in (ZeroReaction, LinearReaction, SineReaction)}


# }}}

# {{{ initial conditions


class InitialCondition:
    name = "ic"

    def sample(self, coords, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ConstantIC(InitialCondition):
    value: float = 0.0
    name = "constant"

    def sample(self, coords, rng=None):
        return np.full(np.shape(coords[0]), float(self.value))


@dataclass(frozen=True)
class CosineIC(InitialCondition):
    mean: float = 0.5
    amplitude: float = 0.25
    wavenumber: tuple = (1,)
    phase: float = 0.0
    name = "cosine"

    def sample(self, coords, rng=None):
        th = _phase(coords, _wave(coords, self.wavenumber), self.phase)
        return self.mean + self.amplitude * np.cos(th)


@dataclass(frozen=True)
class BumpIC(InitialCondition):
    level: float = 0.0
    height: float = 1.0
    center: tuple = (0.5,)
    radius: float = 0.25
    name = "bump"

    def sample(self, coords, rng=None):
        return self.level + self.height * _bump_profile(coords, self.center, self.radius)


@dataclass(frozen=True)
class RandomFourierIC(InitialCondition):
    """``mean + sum_k c_k cos(2 pi k.x + phi_k)`` with random ``c_k, phi_k``.

    The coefficients are drawn from ``rng`` (derived from the noise spec's
    variant tag), so coupled runs may differ only in their initial data.
    """

    mean: float = 0.5
    amplitude: float = 0.2
    modes: int = 3
    name = "random_fourier"

    def sample(self, coords, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        out = np.full(np.shape(coords[0]), float(self.mean))
        d = len(coords)
        for k in range(1, self.modes + 1):
            c = self.amplitude * rng.uniform(-1.0, 1.0) / k
            ph = rng.uniform(0.0, TWO_PI)
            wn = (k,) + tuple(int(v) for v in rng.integers(0, k + 1, size=d - 1))
            out = out + c * np.cos(_phase(coords, wn, ph))
        return out


@dataclass(frozen=True)
class BarenblattIC(InitialCondition):
    """Barenblatt profile at ``t = 0`` (time offset ``t0``) centred at ``center``."""

    m: float = 2.0
    C: float = 0.1
    t0: float = 1e-3
    center: tuple = (0.5,)
    name = "barenblatt"

    def sample(self, coords, rng=None):
        from ..validation import BarenblattParams, barenblatt

        p = BarenblattParams.from_constant(self.m, len(coords), self.C, self.t0, self.center)
        return barenblatt(coords, 0.0, p)


INITIAL_CONDITIONS = {
    cls.name: cls for cls in (ConstantIC, CosineIC, BumpIC, RandomFourierIC, BarenblattIC)
}


# }}}


def _make(registry, kind, name, params):
    if name not in registry:
        raise KeyError(f"unknown {kind} family {name!r}; registered: {sorted(registry)}")
    params = dict(params or {})
    for key, val in params.items():
        if isinstance(val, list):
            params[key] = tuple(val)
    try:
        return registry[name](**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind} family {name!r}: {exc}") from None


def make_obstacle(name: str, params: dict | None = None) -> Obstacle:
    return _make(OBSTACLES, "obstacle", name, params)


def make_reaction(name: str, params: dict | None = None) -> Reaction:
    return _make(REACTIONS, "reaction", name, params)


def make_initial_condition(name: str, params: dict | None = None) -> InitialCondition:
    return _make(INITIAL_CONDITIONS, "initial-condition", name, params)

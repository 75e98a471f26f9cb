"""
The full coefficient set of the obstacle problem and the assumption checker.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from .coefficients import NoObstacle, Obstacle, Reaction, ZeroReaction
from .noise import NoiseModel
from .nonlinearity import Nonlinearity, PowerNonlinearity, SmoothedNonlinearity


def penalty(r, b, eps: float):
    """``P_eps(r, b) = (r - b)^- / eps`` with ``(x)^- = max(-x, 0)``."""
    if not eps > 0:
        raise ConfigurationError(f"penalty parameter eps must be positive, got {eps}")
    return np.maximum(np.asarray(b, dtype=float) - np.asarray(r, dtype=float), 0.0) / eps


def negative_part(x):
    return np.maximum(-np.asarray(x, dtype=float), 0.0)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """``(Phi, f, psi, sigma, K)``; immutable, shareable between workers."""

    nonlinearity: Nonlinearity
    reaction: Reaction = field(default_factory=ZeroReaction)
    obstacle: Obstacle = field(default_factory=NoObstacle)
    noise: NoiseModel = field(default_factory=NoiseModel)
    K: float = 3.0
    kappa: float = 1.0
    _smoothed: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.K < 1:
            raise ConfigurationError("structure constant K must be >= 1")
        if not 0 < self.kappa <= 1:
            raise ConfigurationError("Hoelder exponent kappa must lie in (0, 1]")

    @property
    def m(self) -> float:
        return self.nonlinearity.m

    @property
    def dim(self) -> int:
        return self.noise.dim

    @property
    def deterministic(self) -> bool:
        return self.noise.mode_count == 0

    def smoothed(self, n: int | None) -> Nonlinearity:
        """``Phi_n``; ``None`` returns the unsmoothed ``Phi``."""
        if n is None:
            return self.nonlinearity
        if not isinstance(self.nonlinearity, PowerNonlinearity):
            raise ConfigurationError("smoothing is implemented for power nonlinearities only")
        if n not in self._smoothed:
            self._smoothed[n] = SmoothedNonlinearity(self.nonlinearity, n)
        return self._smoothed[n]

    def __getstate__(self):
        # smoothed tables are rebuilt lazily in each worker
        state = dict(self.__dict__)
        state["_smoothed"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)


# {{{ assumption checks


@dataclass
class CheckEntry:
    name: str
    passed: bool
    worst: float
    witness: tuple
    detail: str = ""


@dataclass
class AssumptionReport:
    entries: list[CheckEntry]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def __getitem__(self, name: str) -> CheckEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def failures(self) -> list[CheckEntry]:
        return [e for e in self.entries if not e.passed]


def _entry(name, slack, witness, detail=""):
    """``slack >= 0`` everywhere means pass; the worst (smallest) slack is reported."""
    k = int(np.argmin(slack))
    wit = tuple(float(np.asarray(w).ravel()[k]) for w in witness)
    return CheckEntry(name, bool(slack[k] >= 0), float(slack[k]), wit, detail)


def _sqrt_phi_prime_derivative(nl: Nonlinearity, r):
    if hasattr(nl, "sqrt_phi_prime_derivative"):
        return nl.sqrt_phi_prime_derivative(r)
    h = 1e-6 * np.maximum(1.0, np.abs(r))
    return (nl.sqrt_phi_prime(r + h) - nl.sqrt_phi_prime(r - h)) / (2 * h)


def validate_assumptions(
    model: ModelSpec, sample_budget: int = 2000, r_bound: float = 4.0, T: float = 1.0, seed: int = 0
) -> AssumptionReport:
    """Sample ``r, s, x, t`` and test each structural inequality on ``Phi``, ``sigma`` and ``f``.

    Failures are report entries, never exceptions.
    """
    rng = np.random.default_rng(seed)
    nl, K, m = model.nonlinearity, model.K, model.m
    entries = []
    r = rng.uniform(-r_bound, r_bound, sample_budget)
    s = rng.uniform(-r_bound, r_bound, sample_budget)
    # also probe the small-argument regime densely
    r[: sample_budget // 4] *= 1.0 / r_bound
    s[: sample_budget // 4] *= 1.0 / r_bound

    phi_r, phi_mr = nl.phi(r), nl.phi(-r)
    scale = 1e-12 * (1.0 + np.abs(phi_r))
    entries.append(_entry("phi_odd", scale - np.abs(phi_r + phi_mr), (r,)))

    lo, hi = np.minimum(r, s), np.maximum(r, s)
    distinct = hi > lo
    inc = np.where(distinct, nl.phi(hi) - nl.phi(lo), 1.0)
    entries.append(_entry("phi_strictly_increasing", np.where(inc > 0, 0.0, inc - 1e-300), (lo, hi)))

    sq0 = float(nl.sqrt_phi_prime(np.array(0.0)))
    entries.append(CheckEntry("sqrt_phi_prime_at_zero", sq0 <= K, K - sq0, (0.0,)))

    rr = np.where(r == 0, 1e-3, r)
    deriv = np.abs(_sqrt_phi_prime_derivative(nl, rr))
    bound = K * np.abs(rr) ** ((m - 3.0) / 2.0)
    entries.append(_entry("sqrt_phi_prime_derivative", bound - deriv, (rr,)))

    big = np.abs(r) >= 1
    floor_slack = np.where(big, nl.sqrt_phi_prime(r) - 1.0 / K, 0.0)
    entries.append(_entry("sqrt_phi_prime_floor", floor_slack, (r,)))

    br, bs = nl.bracket_sqrt(r), nl.bracket_sqrt(s)
    lhs = m * K * np.abs(br - bs)
    large = np.maximum(np.abs(r), np.abs(s)) >= 1
    rhs = np.where(large, np.abs(r - s), np.abs(r - s) ** ((m + 1.0) / 2.0))
    entries.append(_entry("bracket_lower_bound", lhs - rhs * (1 - 1e-12), (r, s)))

    budget = model.noise.c3_budget(r_bound)
    entries.append(CheckEntry("sigma_c3_budget", budget <= K, K - budget, (r_bound,)))

    d = model.dim
    t = rng.uniform(0, T, sample_budget)
    x = tuple(rng.uniform(0, 1, sample_budget) for _ in range(d))
    f_r = model.reaction.f(t, x, r)
    f_s = model.reaction.f(t, x, s)
    quot = np.where(distinct, np.abs(f_r - f_s) / np.where(distinct, np.abs(r - s), 1.0), 0.0)
    entries.append(_entry("reaction_lipschitz", K - quot, (r, s)))

    y = tuple(rng.uniform(0, 1, sample_budget) for _ in range(d))
    f_y = model.reaction.f(t, y, r)
    dist = np.sqrt(sum(((a - b + 0.5) % 1.0 - 0.5) ** 2 for a, b in zip(x, y)))
    dist = np.maximum(dist, 1e-12)
    holder = np.abs(f_r - f_y) / dist**model.kappa
    sup_f = float(np.max(np.abs(np.concatenate([f_r, f_y]))))
    entries.append(
        _entry("reaction_holder", K - (sup_f + holder), (t, r), "sup|f| + sampled C^kappa quotient")
    )
    return AssumptionReport(entries)


# }}}

"""
Reproducible Wiener increments for finitely many noise modes.

Increments are addressed by a counter: the 64-bit word at position
``step * mode_count + mode`` of a Philox4x64 stream keyed by
``(seed, traj_id)`` is turned into a uniform and then into a Gaussian by the
AS241 rational approximation of the normal quantile.  Any block of steps can
therefore be generated independently, and extending ``step_count`` does not
change earlier increments.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.random import Philox

RNG_ALGORITHM = "philox4x64-as241-v1"
_WORDS_PER_COUNTER = 4
_MAGIC = b"OSWN"


@dataclass(frozen=True)
class NoisePathSpec:
    """Everything that determines a noise path."""

    seed: int
    mode_count: int
    step_count: int
    dt: float
    traj_id: int = 0
    variant_tag: str = ""

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.mode_count < 0 or self.step_count < 0:
            raise ValueError("mode_count and step_count must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    def with_steps(self, step_count: int, dt: float | None = None) -> "NoisePathSpec":
        return replace(self, step_count=step_count, dt=self.dt if dt is None else dt)

    def member(self, traj_id: int) -> "NoisePathSpec":
        return replace(self, traj_id=traj_id)

    def ic_rng(self) -> np.random.Generator:
        """Generator for non-noise randomness; depends on the variant tag."""
        digest = hashlib.sha256(f"{self.seed}:{self.traj_id}:{self.variant_tag}".encode()).digest()
        return np.random.Generator(Philox(key=np.frombuffer(digest[:16], dtype=np.uint64)))


def couple(spec: NoisePathSpec, variant_tag) -> NoisePathSpec:
    """Same increment stream, different tag for initial-condition randomness."""
    return replace(spec, variant_tag=str(variant_tag))


# {{{ AS241 (PPND16)

_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coef, x):
    out = np.full_like(x, coef[-1])
    for c in coef[-2::-1]:
        out = out * x + c
    return out


def normal_quantile(p):
    """Inverse standard normal CDF for ``p`` in (0, 1), relative accuracy ~1e-16."""
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0) & (p < 1)):
        raise ValueError("normal_quantile needs 0 < p < 1")
    q = p - 0.5
    out = np.empty_like(p)
    central = np.abs(q) <= 0.425
    qc = q[central]
    r = 0.180625 - qc * qc
    out[central] = qc * _poly(_A, r) / _poly(_B, r)
    tail = ~central
    pt = np.where(q[tail] < 0, p[tail], 1.0 - p[tail])
    r = np.sqrt(-np.log(pt))
    near = r <= 5.0
    val = np.where(
        near,
        _poly(_C, r - 1.6) / _poly(_D, r - 1.6),
        _poly(_E, r - 5.0) / _poly(_F, r - 5.0),
    )
    out[tail] = np.where(q[tail] < 0, -val, val)
    return out


# }}}


def _words(spec: NoisePathSpec, start: int, count: int) -> np.ndarray:
    gen = Philox(key=np.array([spec.seed, spec.traj_id], dtype=np.uint64))
    first, skip = divmod(start, _WORDS_PER_COUNTER)
    if first:
        gen.advance(first)
    raw = gen.random_raw(skip + count)
    return np.asarray(raw, dtype=np.uint64)[skip:]


def words_to_uniform(words: np.ndarray) -> np.ndarray:
    """Map 64-bit words to the open interval (0, 1) using their top 53 bits."""
    return ((words >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53


def wiener_increments(spec: NoisePathSpec, start_step: int = 0, stop_step: int | None = None) -> np.ndarray:
    """Increments ``dW[j, k] ~ N(0, dt)`` for steps ``start_step <= j < stop_step``.

    Shape ``(steps, mode_count)``.  Any sub-range equals the corresponding
    slice of the full block bit for bit.
    """
    stop = spec.step_count if stop_step is None else stop_step
    if not 0 <= start_step <= stop:
        raise ValueError("need 0 <= start_step <= stop_step")
    K = spec.mode_count
    steps = stop - start_step
    if K == 0 or steps == 0:
        return np.zeros((steps, K))
    words = _words(spec, start_step * K, steps * K)
    z = normal_quantile(words_to_uniform(words))
    return (np.sqrt(spec.dt) * z).reshape(steps, K)


def coarsen(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` increments (same path, coarser step)."""
    steps = increments.shape[0]
    if steps % factor:
        raise ValueError(f"{steps} steps are not divisible by {factor}")
    return increments.reshape(steps // factor, factor, -1).sum(axis=1)


def fine_spec(spec: NoisePathSpec, factor: int) -> NoisePathSpec:
    """Spec of the finer path whose :func:`coarsen` by ``factor`` is a path at ``spec.dt``."""
    return replace(spec, step_count=spec.step_count * factor, dt=spec.dt / factor)


# {{{ persistence


def save_increments(path, spec: NoisePathSpec, increments: np.ndarray):
    """Binary block: magic, header (seed, traj_id, steps, modes, dt), float64 data."""
    increments = np.ascontiguousarray(increments, dtype="<f8")
    header = struct.pack("<4sQQQQd", _MAGIC, spec.seed, spec.traj_id, *increments.shape, spec.dt)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(increments.tobytes())


def load_increments(path) -> tuple[dict, np.ndarray]:
    data = Path(path).read_bytes()
    size = struct.calcsize("<4sQQQQd")
    magic, seed, traj, steps, modes, dt = struct.unpack("<4sQQQQd", data[:size])
    if magic != _MAGIC:
        raise ValueError(f"{path} is not a noise block")
    arr = np.frombuffer(data[size:], dtype="<f8").reshape(steps, modes)
    return {"seed": seed, "traj_id": traj, "dt": dt}, arr.copy()


# }}}

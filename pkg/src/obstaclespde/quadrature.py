"""
Quadrature for primitives of the form ``[[g]](r) = int_0^r g(s) ds``.

Two routes are provided and tested against each other:

* :func:`bracket` -- adaptive composite Gauss--Legendre with local dyadic
  panel refinement, used for one-off evaluations;
* :class:`AntiderivativeTable` -- a tabulated primitive on an adaptively
  refined node set, evaluated by cubic Hermite interpolation.  Used wherever
  primitives are needed on whole space-time arrays.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

GAUSS_ORDER = 10
_GX, _GW = np.polynomial.legendre.leggauss(GAUSS_ORDER)

DEFAULT_TOL = 1e-10


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (achieved error estimate {estimate:.3e})")
        self.estimate = estimate


def _gauss(g, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gauss--Legendre rule on each panel ``[a_i, b_i]``."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    s = mid[:, None] + half[:, None] * _GX[None, :]
    return half * (np.asarray(g(s), dtype=float) @ _GW)


def _integrate(g, lo: float, hi: float, tol: float, breakpoints=(), max_panels=200_000):
    if lo == hi:
        return 0.0, 0.0
    cuts = sorted({lo, hi, *(p for p in breakpoints if lo < p < hi)})
    a = np.array(cuts[:-1])
    b = np.array(cuts[1:])
    length = hi - lo
    total = 0.0
    err_total = 0.0
    while a.size:
        m = 0.5 * (a + b)
        coarse = _gauss(g, a, b)
        fine = _gauss(g, a, m) + _gauss(g, m, b)
        err = np.abs(fine - coarse)
        ok = err <= tol * (b - a) / length
        # panels shrunk to rounding level are accepted as-is
        ok |= (b - a) <= 64 * np.finfo(float).eps * max(abs(lo), abs(hi), 1.0)
        total += float(np.sum(fine[ok]))
        err_total += float(np.sum(err[ok]))
        if a.size > max_panels:
            raise QuadratureError("panel budget exhausted", err_total + float(np.sum(err[~ok])))
        a, b = np.concatenate([a[~ok], m[~ok]]), np.concatenate([m[~ok], b[~ok]])
    return total, err_total


def bracket(g: Callable, r, tol: float = DEFAULT_TOL, breakpoints: Iterable[float] = ()):
    """``int_0^r g(s) ds`` with absolute error at most ``tol``.

    ``g`` must accept arrays.  For ``r < 0`` the result is ``-int_r^0 g``.
    Known kinks of ``g`` may be passed as ``breakpoints``.
    """
    bps = tuple(breakpoints) + (0.0,)
    r_arr = np.asarray(r, dtype=float)
    out = np.empty(r_arr.shape)
    for idx, rv in np.ndenumerate(r_arr):
        lo, hi = (0.0, rv) if rv >= 0 else (rv, 0.0)
        val, err = _integrate(g, lo, hi, tol, bps)
        if err > tol:
            raise QuadratureError(f"bracket did not converge at r={rv}", err)
        out[idx] = val if rv >= 0 else -val
    return float(out) if out.ndim == 0 else out


class AntiderivativeTable:
    """Tabulated primitive ``F(r) = int_anchor^r h(s) ds`` on ``[lo, hi]``.

    Nodes are refined until (i) each panel's Gauss estimate is stable under
    bisection, (ii) the Hermite interpolant of ``F`` matches quadrature at
    panel midpoints, and (iii) linear interpolation of ``h`` matches ``h`` at
    midpoints within ``lin_tol`` (when given).  Outside ``[lo, hi]`` both ``h``
    and ``F`` are continued with the boundary value of ``h``.

    With ``fixed_nodes`` the refinement loop is skipped and one Gauss rule is
    applied per interval of the given node set.
    """

    def __init__(
        self,
        h: Callable,
        lo: float,
        hi: float,
        *,
        anchor: float = 0.0,
        tol: float = DEFAULT_TOL,
        lin_tol: float | None = None,
        breakpoints: Iterable[float] = (),
        initial_nodes: int = 129,
        max_nodes: int = 400_000,
        extra_nodes: np.ndarray | None = None,
        fixed_nodes: np.ndarray | None = None,
    ):
        if not lo < hi:
            raise ValueError("need lo < hi")
        if not lo <= anchor <= hi:
            raise ValueError("anchor must lie in [lo, hi]")
        self.h = h
        if fixed_nodes is not None:
            nodes = np.unique(np.concatenate([np.asarray(fixed_nodes, dtype=float), [lo, hi, anchor]]))
            nodes = nodes[(nodes >= lo) & (nodes <= hi)]
            self._finish(h, nodes, _gauss(h, nodes[:-1], nodes[1:]), anchor)
            return
        length = hi - lo
        nodes = np.linspace(lo, hi, initial_nodes)
        extra = [p for p in (*breakpoints, anchor) if lo < p < hi]
        if extra_nodes is not None:
            extra.extend(np.asarray(extra_nodes)[(extra_nodes > lo) & (extra_nodes < hi)])
        nodes = np.unique(np.concatenate([nodes, np.asarray(extra, dtype=float)]))

        eps_len = 64 * np.finfo(float).eps * max(abs(lo), abs(hi), 1.0)
        a, b = nodes[:-1], nodes[1:]
        done_a, done_b, done_I = [], [], []
        total = a.size + 1
        while a.size:
            m = 0.5 * (a + b)
            ha, hb, hm = (np.asarray(h(v), dtype=float) for v in (a, b, m))
            coarse = _gauss(h, a, b)
            left = _gauss(h, a, m)
            right = _gauss(h, m, b)
            fine = left + right
            dx = b - a
            budget = tol * dx / length
            herm_mid = 0.5 * fine + dx * (ha - hb) / 8.0
            bad = (np.abs(fine - coarse) > budget) | (np.abs(herm_mid - left) > budget)
            if lin_tol is not None:
                bad |= np.abs(0.5 * (ha + hb) - hm) > lin_tol
            bad &= dx > eps_len
            done_a.append(a[~bad])
            done_b.append(b[~bad])
            done_I.append(fine[~bad])
            total += int(bad.sum())
            if total > max_nodes:
                raise QuadratureError(
                    "table node budget exhausted", float(np.max(np.abs(fine - coarse)))
                )
            a = np.concatenate([a[bad], m[bad]])
            b = np.concatenate([m[bad], b[bad]])

        a = np.concatenate(done_a)
        order = np.argsort(a)
        fine = np.concatenate(done_I)[order]
        nodes = np.concatenate([a[order], [np.concatenate(done_b)[order][-1]]])
        self._finish(h, nodes, fine, anchor)

    def _finish(self, h, nodes, fine, anchor):
        self.nodes = nodes
        self.values_h = np.asarray(h(nodes), dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(fine)])
        k = np.searchsorted(nodes, anchor)
        if nodes[k] != anchor:  # anchor is always a node by construction
            raise AssertionError("anchor not on node set")
        self.values_F = cum - cum[k]
        self.lo, self.hi = float(nodes[0]), float(nodes[-1])
        # cubic Hermite coefficients per interval in the local variable t in [0, 1]
        dx = np.diff(nodes)
        f0, f1 = self.values_F[:-1], self.values_F[1:]
        d0, d1 = self.values_h[:-1] * dx, self.values_h[1:] * dx
        self._coef = np.stack([f0, d0, 3 * (f1 - f0) - 2 * d0 - d1, 2 * (f0 - f1) + d0 + d1], axis=1)
        self._inv_dx = 1.0 / dx

    def integrand(self, r) -> np.ndarray:
        """Piecewise-linear interpolant of ``h``, constant beyond the table."""
        return np.interp(r, self.nodes, self.values_h)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        rc = np.clip(r, self.lo, self.hi)
        idx = np.searchsorted(self.nodes, rc, side="right") - 1
        idx = np.clip(idx, 0, self.nodes.size - 2)
        t = (rc - self.nodes[idx]) * self._inv_dx[idx]
        c = self._coef[idx]
        out = ((c[..., 3] * t + c[..., 2]) * t + c[..., 1]) * t + c[..., 0]
        over = r - rc
        if np.any(over):
            out = out + np.where(over > 0, over * self.values_h[-1], over * self.values_h[0])
        return out

"""Chebyshev calculus for smooth functions on a closed interval.

An :class:`IntervalFunction` stores first-kind Chebyshev coefficients of a
polynomial on ``[a, b]``. Construction samples at Chebyshev extreme points
and doubles the degree until the coefficient tail drops below tolerance.
"""
from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as npcheb

__all__ = [
    "FunspaceError",
    "DegreeCapError",
    "ConstructionError",
    "OutOfIntervalError",
    "IntervalFunction",
    "DEFAULT_TOL",
    "DEFAULT_MAX_DEGREE",
    "build",
    "from_coeffs",
    "constant",
    "chebpts",
    "coeffs_from_values",
    "evaluate",
    "differentiate",
    "deflate_root",
    "sup_norm",
    "extrema",
    "roots",
    "add",
    "sub",
    "scale",
    "mul",
    "divide",
    "compose",
    "to_csv",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_DEGREE = 2**14
_MIN_POINTS = 17
_LEAF_DEGREE = 64


class FunspaceError(Exception):
    pass


class DegreeCapError(FunspaceError):
    """Coefficients failed to decay before the degree cap."""


class ConstructionError(FunspaceError):
    pass


class OutOfIntervalError(FunspaceError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class IntervalFunction:
    coeffs: np.ndarray
    a: float
    b: float
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        if c.size == 0:
            c = np.zeros(1)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if not self.a < self.b:
            raise ValueError(f"empty interval [{self.a}, {self.b}]")

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def domain(self) -> tuple[float, float]:
        return (self.a, self.b)

    def __call__(self, x):
        return evaluate(self, x)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"IntervalFunction(degree={self.degree}, interval=[{self.a:g}, {self.b:g}])"

    def to_unit(self, x):
        return (2.0 * np.asarray(x, dtype=float) - (self.a + self.b)) / (self.b - self.a)

    def from_unit(self, t):
        return 0.5 * (self.b - self.a) * np.asarray(t, dtype=float) + 0.5 * (self.a + self.b)


# --------------------------------------------------------------------------
# construction


def chebpts(n: int, a: float = -1.0, b: float = 1.0) -> np.ndarray:
    """``n`` Chebyshev extreme points on ``[a, b]`` in increasing order."""
    if n == 1:
        return np.array([0.5 * (a + b)])
    t = -np.cos(np.pi * np.arange(n) / (n - 1))
    return 0.5 * (b - a) * t + 0.5 * (a + b)


def coeffs_from_values(values: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients interpolating ``values`` at :func:`chebpts`."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 1:
        return v.copy()
    # chebpts are increasing, i.e. t_j = cos(pi*(n-1-j)/(n-1)); flip to the DCT ordering
    v = v[::-1]
    ext = np.concatenate([v, v[-2:0:-1]])
    c = np.real(np.fft.fft(ext)) / (n - 1)
    c = c[:n]
    c[0] /= 2.0
    c[-1] /= 2.0
    return c


def _tail_resolved(c: np.ndarray, threshold: float) -> bool:
    k = max(2, c.size // 8)
    return bool(np.all(np.abs(c[-k:]) <= threshold))


def _chop(c: np.ndarray, threshold: float) -> np.ndarray:
    big = np.nonzero(np.abs(c) > threshold)[0]
    if big.size == 0:
        return c[:1].copy() if abs(c[0]) > 0 else np.zeros(1)
    # keep two trailing sub-threshold coefficients as the resolution witness
    return c[: min(c.size, big[-1] + 3)].copy()


def build(
    f: Callable[[np.ndarray], np.ndarray],
    interval: tuple[float, float],
    tol: float = DEFAULT_TOL,
    *,
    scale: float | None = None,
    max_degree: int = DEFAULT_MAX_DEGREE,
) -> IntervalFunction:
    """Adaptive Chebyshev interpolant of the vectorized evaluator ``f``.

    The tail test is relative to ``max(max|c|, scale)``; pass ``scale`` when
    ``f`` is a residual whose rounding noise sits at the level of terms much
    larger than the result.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError(f"empty interval [{a}, {b}]")
    if not (1e-15 < tol <= 1e-3):
        raise ValueError(f"tolerance {tol} outside (1e-15, 1e-3]")
    n = _MIN_POINTS
    while True:
        x = chebpts(n, a, b)
        v = np.asarray(f(x), dtype=float)
        if v.shape != x.shape:
            v = np.broadcast_to(v, x.shape)
        if not np.all(np.isfinite(v)):
            raise ConstructionError("evaluator returned a non-finite value")
        c = coeffs_from_values(v)
        vscale = max(float(np.max(np.abs(c))), float(scale or 0.0))
        threshold = tol * vscale
        if vscale == 0.0 or _tail_resolved(c, threshold):
            return IntervalFunction(_chop(c, threshold), a, b, tol)
        if n - 1 >= max_degree:
            raise DegreeCapError(f"no convergence up to degree {max_degree} on [{a:g}, {b:g}]")
        n = 2 * (n - 1) + 1


def from_coeffs(coeffs, interval, tol: float = DEFAULT_TOL) -> IntervalFunction:
    return IntervalFunction(np.asarray(coeffs, dtype=float), interval[0], interval[1], tol)


def constant(value: float, interval, tol: float = DEFAULT_TOL) -> IntervalFunction:
    return IntervalFunction(np.array([float(value)]), interval[0], interval[1], tol)


# --------------------------------------------------------------------------
# evaluation and calculus


def _clenshaw(c: np.ndarray, t):
    t = np.asarray(t, dtype=float)
    if c.size == 1:
        return np.full_like(t, c[0])
    b1 = np.zeros_like(t)
    b2 = np.zeros_like(t)
    t2 = 2.0 * t
    for ck in c[:0:-1]:
        b1, b2 = ck + t2 * b1 - b2, b1
    return c[0] + t * b1 - b2


def evaluate(g: IntervalFunction, x):
    """Value of ``g`` at ``x`` (scalar or array) by Clenshaw recurrence."""
    x_arr = np.asarray(x, dtype=float)
    slack = 1e-12 * (g.b - g.a)
    if np.any(x_arr < g.a - slack) or np.any(x_arr > g.b + slack):
        raise OutOfIntervalError(f"point outside [{g.a:g}, {g.b:g}]")
    t = np.clip(g.to_unit(x_arr), -1.0, 1.0)
    out = _clenshaw(g.coeffs, t)
    return float(out) if out.ndim == 0 else out


def differentiate(g: IntervalFunction) -> IntervalFunction:
    c = g.coeffs
    n = c.size - 1
    if n == 0:
        return IntervalFunction(np.zeros(1), g.a, g.b, g.tol)
    d = np.zeros(n + 1)
    for k in range(n, 0, -1):
        d[k - 1] = d[k + 1] + 2.0 * k * c[k] if k + 1 <= n else 2.0 * k * c[k]
    d[0] *= 0.5
    return IntervalFunction(d[:n] * (2.0 / (g.b - g.a)), g.a, g.b, g.tol)


def deflate_root(g: IntervalFunction, x0: float) -> IntervalFunction:
    """``h`` with ``(x - x0) h(x) = g(x) - g(x0)``, by synthetic division.

    Uses ``t T_k = (T_{k+1} + T_{k-1}) / 2`` and runs the quotient
    recurrence from the top coefficient down, which is stable for ``x0``
    inside the interval.
    """
    c = g.coeffs
    n = c.size - 1
    if n == 0:
        return IntervalFunction(np.zeros(1), g.a, g.b, g.tol)
    t0 = float(g.to_unit(x0))
    q = np.zeros(n + 1)  # q[n] stays 0 as the recurrence's upper boundary
    if n >= 2:
        q[n - 1] = 2.0 * c[n]
        for m in range(n - 1, 1, -1):
            q[m - 1] = 2.0 * (c[m] + t0 * q[m]) - q[m + 1]
        q[0] = c[1] + t0 * q[1] - 0.5 * q[2]
    else:
        q[0] = c[1]
    return IntervalFunction(q[:n] * (2.0 / (g.b - g.a)), g.a, g.b, g.tol)


def _trim(c: np.ndarray, rel: float = 1e-14) -> np.ndarray:
    amax = np.max(np.abs(c)) if c.size else 0.0
    if amax == 0.0:
        return c[:1]
    big = np.nonzero(np.abs(c) > rel * amax)[0]
    return c[: big[-1] + 1]


def _leaf_roots(c: np.ndarray) -> np.ndarray:
    """Real roots in [-1, 1] of a modest-degree series via the colleague matrix."""
    c = _trim(c)
    if c.size <= 1:
        return np.empty(0)
    r = npcheb.chebroots(c)
    scale_im = 1e-8
    r = r[np.abs(np.imag(r)) <= scale_im * np.maximum(1.0, np.abs(r))]
    r = np.real(r)
    return np.sort(r[(r >= -1.0 - 1e-8) & (r <= 1.0 + 1e-8)])


def _restrict(c: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Coefficients of the series restricted to ``[lo, hi]`` ⊂ [-1, 1]."""
    n = c.size
    t = chebpts(n, lo, hi)
    return coeffs_from_values(_clenshaw(c, t))


def _unit_roots(c: np.ndarray, lo: float, hi: float, depth: int = 0) -> list[float]:
    c = _trim(c)
    if c.size - 1 <= _LEAF_DEGREE or depth > 40:
        r = _leaf_roots(c)
        return list(0.5 * (hi - lo) * r + 0.5 * (hi + lo))
    # off-centre split avoids landing exactly on a root at a symmetric point
    split = -0.004849834917525
    mid_t = 0.5 * (hi - lo) * split + 0.5 * (hi + lo)
    left = _restrict(c, -1.0, split)
    right = _restrict(c, split, 1.0)
    return _unit_roots(left, lo, mid_t, depth + 1) + _unit_roots(right, mid_t, hi, depth + 1)


def _polish(g: IntervalFunction, dg: IntervalFunction, r: float) -> float:
    x = r
    for _ in range(8):
        d = evaluate(dg, x)
        if d == 0.0:
            break
        step = evaluate(g, x) / d
        xn = min(max(x - step, g.a), g.b)
        if abs(xn - x) <= 4e-16 * max(1.0, abs(x)):
            x = xn
            break
        if abs(evaluate(g, xn)) > abs(evaluate(g, x)):
            break
        x = xn
    return x


def roots(g: IntervalFunction) -> list[float]:
    """All real roots of ``g`` in ``[a, b]``, sorted."""
    c = g.coeffs
    if c.size <= 1 or np.max(np.abs(c[1:])) == 0.0:
        return []
    t_roots = _unit_roots(c, -1.0, 1.0)
    if not t_roots:
        return []
    dg = differentiate(g)
    xs = sorted(_polish(g, dg, float(g.from_unit(min(max(t, -1.0), 1.0)))) for t in t_roots)
    merged: list[float] = []
    gap = 1e-10 * (g.b - g.a)
    for x in xs:
        if merged and abs(x - merged[-1]) <= gap:
            continue
        merged.append(x)
    return merged


def extrema(g: IntervalFunction) -> np.ndarray:
    """Candidate extremum locations: critical points plus endpoints."""
    pts = [g.a, g.b]
    if g.degree >= 2:
        pts.extend(roots(differentiate(g)))
    return np.array(sorted(pts))


def sup_norm(g: IntervalFunction) -> float:
    if g.degree == 0:
        return abs(float(g.coeffs[0]))
    return float(np.max(np.abs(evaluate(g, extrema(g)))))


# --------------------------------------------------------------------------
# combinators


def _same_interval(f: IntervalFunction, g: IntervalFunction):
    if f.a != g.a or f.b != g.b:
        raise ValueError("functions live on different intervals")


def _as_function(v, like: IntervalFunction) -> IntervalFunction:
    if isinstance(v, IntervalFunction):
        return v
    return constant(float(v), like.domain, like.tol)


def add(f: IntervalFunction, g) -> IntervalFunction:
    g = _as_function(g, f)
    _same_interval(f, g)
    n = max(f.coeffs.size, g.coeffs.size)
    c = np.zeros(n)
    c[: f.coeffs.size] += f.coeffs
    c[: g.coeffs.size] += g.coeffs
    return IntervalFunction(c, f.a, f.b, max(f.tol, g.tol))


def sub(f: IntervalFunction, g) -> IntervalFunction:
    return add(f, scale(_as_function(g, f), -1.0))


def scale(f: IntervalFunction, s: float) -> IntervalFunction:
    return IntervalFunction(f.coeffs * float(s), f.a, f.b, f.tol)


def mul(f: IntervalFunction, g: IntervalFunction, tol: float | None = None) -> IntervalFunction:
    _same_interval(f, g)
    return build(lambda x: evaluate(f, x) * evaluate(g, x), f.domain, tol or max(f.tol, g.tol))


def divide(f: IntervalFunction, g: IntervalFunction, tol: float | None = None) -> IntervalFunction:
    _same_interval(f, g)
    return build(lambda x: evaluate(f, x) / evaluate(g, x), f.domain, tol or max(f.tol, g.tol))


def compose(op: Callable[[np.ndarray], np.ndarray], f: IntervalFunction, tol: float | None = None) -> IntervalFunction:
    """``op(f(x))`` rebuilt as a new interpolant."""
    return build(lambda x: op(evaluate(f, x)), f.domain, tol or f.tol)


# --------------------------------------------------------------------------
# output


def to_csv(g: IntervalFunction, path, n: int = 1001) -> None:
    """Write ``x,value`` on a uniform grid; the file appears atomically."""
    xs = np.linspace(g.a, g.b, n)
    vs = evaluate(g, xs)
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "value"])
            for x, v in zip(xs, vs):
                w.writerow([repr(float(x)), repr(float(v))])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

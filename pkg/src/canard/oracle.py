"""Simulation ground truth for canard explosion points.

Integrates the planar system with a Dormand-Prince 5(4) pair under PI step
control, measures the peak-to-peak amplitude of the attracting limit set,
and bisects on the amplitude jump. The integrator loop is compiled with
numba against a right-hand side generated from the expression trees.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .algorithm import _atomic_write
from .expr import SystemDef, to_source

__all__ = [
    "OracleError",
    "StepUnderflowError",
    "NonFiniteStateError",
    "NoRecurrenceError",
    "NoSignChangeError",
    "Trajectory",
    "CycleMeasurement",
    "OracleResult",
    "compile_rhs",
    "integrate",
    "measure_cycle",
    "limit_cycle_amplitude",
    "locate_explosion",
    "write_trajectory_csv",
]

log = logging.getLogger(__name__)


class OracleError(Exception):
    pass


class StepUnderflowError(OracleError):
    pass


class NonFiniteStateError(OracleError):
    pass


class NoRecurrenceError(OracleError):
    pass


class NoSignChangeError(OracleError):
    pass


# --------------------------------------------------------------------------
# right-hand side

_RHS_CACHE: dict[str, object] = {}


def compile_rhs(sys: SystemDef):
    """numba-compiled ``rhs(x, y, z) -> (F, G)`` with constants inlined."""
    f_src = to_source(sys.F, sys.constants)
    g_src = to_source(sys.G, sys.constants)
    src = f"def rhs(x, y, z):\n    return {f_src}, {g_src}\n"
    fn = _RHS_CACHE.get(src)
    if fn is None:
        ns = {"math": math}
        exec(compile(src, "<canard-rhs>", "exec"), ns)
        fn = numba.njit(ns["rhs"])
        _RHS_CACHE[src] = fn
    return fn


# --------------------------------------------------------------------------
# Dormand-Prince 5(4)

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_A71, _A73, _A74, _A75, _A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
# continuous extension (Hairer, Norsett & Wanner, dopri5)
_D1 = -12715105075 / 11282082432
_D3 = 87487479700 / 32700410799
_D4 = -10690763975 / 1880347072
_D5 = 701980252875 / 199316789632
_D6 = -1453857185 / 822651844
_D7 = 69997945 / 29380423

_OK, _UNDERFLOW, _NONFINITE, _MAXSTEPS = 0, 1, 2, 3


@numba.njit(cache=False)
def _grow(arr, n):
    out = np.empty(max(2 * arr.shape[0], n + 1))
    out[: arr.shape[0]] = arr
    return out


@numba.njit(cache=False)
def _dense(r1, r2, r3, r4, r5, th):
    th1 = 1.0 - th
    return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)))


@numba.njit(cache=False)
def _dopri(rhs, z, t0, x0, y0, t_end, rtol, atol, h_init, h_fixed, max_steps, store):
    """Integrate to ``t_end``; returns end state, statistics, samples and x-extrema."""
    beta = 0.04
    expo1 = 0.2 - 0.75 * beta
    safe = 0.9
    facc1 = 5.0  # h may shrink by at most 5x per step
    facc2 = 0.1  # ... and grow by at most 10x
    facold = 1e-4

    cap = 1024
    ts = np.empty(cap)
    xs = np.empty(cap)
    ys = np.empty(cap)
    n_st = 0
    et = np.empty(64)
    ex = np.empty(64)
    ek = np.empty(64)
    n_ex = 0
    if store:
        ts[0] = t0
        xs[0] = x0
        ys[0] = y0
        n_st = 1

    t, x, y = t0, x0, y0
    k1x, k1y = rhs(x, y, z)
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(k1x) and math.isfinite(k1y)):
        return _NONFINITE, t, x, y, 0, 0, ts[:n_st], xs[:n_st], ys[:n_st], et[:0], ex[:0], ek[:0]
    span = t_end - t0
    if h_fixed > 0.0:
        h = h_fixed
    elif h_init > 0.0:
        h = h_init
    else:
        sx = atol + rtol * abs(x)
        sy = atol + rtol * abs(y)
        d0 = math.sqrt(0.5 * ((x / sx) ** 2 + (y / sy) ** 2))
        d1 = math.sqrt(0.5 * ((k1x / sx) ** 2 + (k1y / sy) ** 2))
        h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h = min(h, span)
    nsteps = 0
    nrej = 0
    status = _OK
    while t < t_end:
        if nsteps + nrej >= max_steps:
            status = _MAXSTEPS
            break
        if h < 1e-14 * max(abs(t), 1.0):
            status = _UNDERFLOW
            break
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True
        k2x, k2y = rhs(x + h * _A21 * k1x, y + h * _A21 * k1y, z)
        k3x, k3y = rhs(x + h * (_A31 * k1x + _A32 * k2x), y + h * (_A31 * k1y + _A32 * k2y), z)
        k4x, k4y = rhs(
            x + h * (_A41 * k1x + _A42 * k2x + _A43 * k3x),
            y + h * (_A41 * k1y + _A42 * k2y + _A43 * k3y),
            z,
        )
        k5x, k5y = rhs(
            x + h * (_A51 * k1x + _A52 * k2x + _A53 * k3x + _A54 * k4x),
            y + h * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y),
            z,
        )
        k6x, k6y = rhs(
            x + h * (_A61 * k1x + _A62 * k2x + _A63 * k3x + _A64 * k4x + _A65 * k5x),
            y + h * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y),
            z,
        )
        xn = x + h * (_A71 * k1x + _A73 * k3x + _A74 * k4x + _A75 * k5x + _A76 * k6x)
        yn = y + h * (_A71 * k1y + _A73 * k3y + _A74 * k4y + _A75 * k5y + _A76 * k6y)
        k7x, k7y = rhs(xn, yn, z)
        if not (math.isfinite(xn) and math.isfinite(yn) and math.isfinite(k7x) and math.isfinite(k7y)):
            if h_fixed > 0.0:
                status = _NONFINITE
                break
            nrej += 1
            h *= 0.25
            continue

        if h_fixed > 0.0:
            err = 0.0
        else:
            errx = h * (_E1 * k1x + _E3 * k3x + _E4 * k4x + _E5 * k5x + _E6 * k6x + _E7 * k7x)
            erry = h * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
            sx = atol + rtol * max(abs(x), abs(xn))
            sy = atol + rtol * max(abs(y), abs(yn))
            err = math.sqrt(0.5 * ((errx / sx) ** 2 + (erry / sy) ** 2))

        if err <= 1.0:
            # extremum of x inside the step: dx/dt changes sign
            if (k1x > 0.0 and k7x <= 0.0) or (k1x < 0.0 and k7x >= 0.0):
                r1x, r2x = x, xn - x
                r3x = h * k1x - r2x
                r4x = r2x - h * k7x - r3x
                r5x = h * (_D1 * k1x + _D3 * k3x + _D4 * k4x + _D5 * k5x + _D6 * k6x + _D7 * k7x)
                r1y, r2y = y, yn - y
                r3y = h * k1y - r2y
                r4y = r2y - h * k7y - r3y
                r5y = h * (_D1 * k1y + _D3 * k3y + _D4 * k4y + _D5 * k5y + _D6 * k6y + _D7 * k7y)
                lo, hi = 0.0, 1.0
                s_lo = k1x
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    fx, _fy = rhs(_dense(r1x, r2x, r3x, r4x, r5x, mid), _dense(r1y, r2y, r3y, r4y, r5y, mid), z)
                    if (fx > 0.0) == (s_lo > 0.0) and fx != 0.0:
                        lo = mid
                    else:
                        hi = mid
                th = 0.5 * (lo + hi)
                if n_ex >= et.shape[0]:
                    et = _grow(et, n_ex)
                    ex = _grow(ex, n_ex)
                    ek = _grow(ek, n_ex)
                et[n_ex] = t + th * h
                ex[n_ex] = _dense(r1x, r2x, r3x, r4x, r5x, th)
                ek[n_ex] = 1.0 if k1x > 0.0 else -1.0
                n_ex += 1
            t = t_end if last else t + h
            x, y = xn, yn
            k1x, k1y = k7x, k7y
            nsteps += 1
            if store:
                if n_st >= ts.shape[0]:
                    ts = _grow(ts, n_st)
                    xs = _grow(xs, n_st)
                    ys = _grow(ys, n_st)
                ts[n_st] = t
                xs[n_st] = x
                ys[n_st] = y
                n_st += 1
            if h_fixed <= 0.0:
                fac11 = err ** expo1 if err > 0.0 else 0.0
                fac = fac11 / facold**beta
                fac = max(facc2, min(facc1, fac / safe))
                facold = max(err, 1e-4)
                h = h / fac
        else:
            nrej += 1
            fac11 = err**expo1
            h = h / min(facc1, fac11 / safe)
    return (status, t, x, y, nsteps, nrej, ts[:n_st], xs[:n_st], ys[:n_st], et[:n_ex], ex[:n_ex], ek[:n_ex])


# --------------------------------------------------------------------------
# public integration API


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    steps: int
    rejected: int
    extrema_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    extrema_x: np.ndarray = field(default_factory=lambda: np.empty(0))
    extrema_kind: np.ndarray = field(default_factory=lambda: np.empty(0))  # +1 max, -1 min

    @property
    def end(self) -> tuple[float, float, float]:
        return float(self.t[-1]), float(self.x[-1]), float(self.y[-1])

    @property
    def maxima_t(self) -> np.ndarray:
        return self.extrema_t[self.extrema_kind > 0]


def _run(rhs, z, t0, x0, y0, t_end, rtol, atol, store, h_fixed=0.0, h_init=0.0, max_steps=50_000_000):
    out = _dopri(rhs, float(z), float(t0), float(x0), float(y0), float(t_end), float(rtol), float(atol),
                 float(h_init), float(h_fixed), int(max_steps), bool(store))
    status = out[0]
    if status == _UNDERFLOW:
        raise StepUnderflowError(f"step size underflow at t={out[1]:.6g} (z={z})")
    if status == _NONFINITE:
        raise NonFiniteStateError(f"non-finite state at t={out[1]:.6g} (z={z})")
    if status == _MAXSTEPS:
        raise OracleError(f"step budget exhausted at t={out[1]:.6g} (z={z})")
    return out


def integrate(
    sys: SystemDef,
    z: float,
    start: Sequence[float],
    t_end: float,
    rtol: float = 1e-9,
    atol: Optional[float] = None,
    *,
    t0: float = 0.0,
    h_fixed: float = 0.0,
) -> Trajectory:
    """Adaptive DP5(4) trajectory from ``start`` over ``[t0, t_end]``.

    ``h_fixed > 0`` switches off error control (used for convergence checks).
    """
    if not (1e-12 <= rtol <= 1e-3):
        raise ValueError(f"rtol {rtol} outside [1e-12, 1e-3]")
    atol = rtol if atol is None else atol
    rhs = compile_rhs(sys)
    out = _run(rhs, z, t0, start[0], start[1], t_end, rtol, atol, True, h_fixed=h_fixed)
    _, _, _, _, nsteps, nrej, ts, xs, ys, et, ex, ek = out
    return Trajectory(ts.copy(), xs.copy(), ys.copy(), int(nsteps), int(nrej), et.copy(), ex.copy(), ek.copy())


# --------------------------------------------------------------------------
# amplitude


@dataclass(frozen=True)
class CycleMeasurement:
    amplitude: float
    period: float  # nan when no oscillation was detected
    n_maxima: int
    settle_time: float
    window: float


def measure_cycle(
    sys: SystemDef,
    z: float,
    seed: Sequence[float],
    settle_time: Optional[float] = None,
    window: Optional[float] = None,
    *,
    rtol: float = 1e-9,
    atol: Optional[float] = None,
    chunk: float = 100.0,
    max_pilot: float = 2e4,
    settle_periods: float = 50.0,
    max_settle: float = 2e5,
    fixed_point_tol: float = 1e-6,
) -> CycleMeasurement:
    """Settle onto the attractor, then measure peak-to-peak ``x`` over a window.

    Without an explicit ``settle_time`` a pilot run estimates the period from
    maxima spacing and settles for ``settle_periods`` periods.
    """
    atol = rtol if atol is None else atol
    rhs = compile_rhs(sys)
    t, x, y = 0.0, float(seed[0]), float(seed[1])

    period = math.nan
    if settle_time is None:
        maxima: list[float] = []
        xlo, xhi = math.inf, -math.inf
        while t < max_pilot:
            out = _run(rhs, z, t, x, y, t + chunk, rtol, atol, False)
            t, x, y = out[1], out[2], out[3]
            et, ek = out[9], out[11]
            maxima.extend(et[ek > 0].tolist())
            if len(maxima) >= 6:
                break
            # no oscillation: check whether the state has come to rest
            probe = _run(rhs, z, t, x, y, t + chunk, rtol, atol, True)
            xs = probe[7]
            t, x, y = probe[1], probe[2], probe[3]
            maxima.extend(probe[9][probe[11] > 0].tolist())
            xlo, xhi = float(xs.min()), float(xs.max())
            if len(maxima) >= 6:
                break
            if len(maxima) < 2 and xhi - xlo < fixed_point_tol:
                return CycleMeasurement(0.0, math.nan, 0, t, 0.0)
        if len(maxima) >= 2:
            period = float(np.median(np.diff(maxima[-5:])))
            settle_time = min(settle_periods * period, max_settle)
        else:
            settle_time = max_settle
        if window is None:
            window = 5.0 * period if math.isfinite(period) else 10 * chunk
    elif window is None:
        window = 10 * chunk

    out = _run(rhs, z, t, x, y, t + settle_time, rtol, atol, False)
    t, x, y = out[1], out[2], out[3]
    for _ in range(4):
        out = _run(rhs, z, t, x, y, t + window, rtol, atol, True)
        xs, ex, ek = out[7], out[10], out[11]
        lo = min(float(xs.min()), float(ex.min()) if ex.size else math.inf)
        hi = max(float(xs.max()), float(ex.max()) if ex.size else -math.inf)
        amp = hi - lo
        n_max = int(np.count_nonzero(ek > 0))
        if amp < fixed_point_tol:
            return CycleMeasurement(0.0, period, n_max, settle_time, window)
        if n_max >= 3:
            mt = out[9][ek > 0]
            period = float(np.median(np.diff(mt)))
            return CycleMeasurement(amp, period, n_max, settle_time, window)
        window *= 2.0
    raise NoRecurrenceError(f"fewer than 3 maxima in the measurement window at z={z}")


def limit_cycle_amplitude(sys: SystemDef, z: float, seed: Sequence[float], settle_time=None, window=None, **kw) -> float:
    """Peak-to-peak ``x`` on the attractor at parameter ``z`` (0 at a rest point)."""
    return measure_cycle(sys, z, seed, settle_time, window, **kw).amplitude


# --------------------------------------------------------------------------
# bisection


@dataclass
class OracleResult:
    z_star: float
    bracket: tuple[float, float]
    samples: list[tuple[float, float]]
    small_amp: float
    large_amp: float

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]

    @property
    def level(self) -> float:
        return 0.5 * (self.small_amp + self.large_amp)

    def report(self) -> str:
        rows = [
            ("z_star", f"{self.z_star:.10f}"),
            ("bracket", f"[{self.bracket[0]:.12f}, {self.bracket[1]:.12f}]"),
            ("bracket_width", f"{self.width:.3e}"),
            ("small_amp", f"{self.small_amp:.6f}"),
            ("large_amp", f"{self.large_amp:.6f}"),
            ("evaluations", str(len(self.samples))),
        ]
        return "\n".join(f"{k:<14} {v}" for k, v in rows)

    def sweep_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["z", "amplitude"])
        for z, a in sorted(self.samples):
            w.writerow([repr(float(z)), repr(float(a))])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        _atomic_write(path, self.sweep_csv())


def locate_explosion(
    sys: SystemDef,
    z_lo: float,
    z_hi: float,
    n_bisect: int = 30,
    *,
    seed: Sequence[float] = (0.0, 0.0),
    jump_ratio: float = 0.5,
    **amp_kw,
) -> OracleResult:
    """Bisect on the amplitude crossing the midpoint of the bracket's two levels.

    The bracket must straddle the explosion: the smaller end amplitude has to
    be below ``jump_ratio`` times the larger one.
    """
    if not z_lo < z_hi:
        raise ValueError("z_lo must be below z_hi")
    samples = []

    def amp(z):
        a = limit_cycle_amplitude(sys, z, seed, **amp_kw)
        samples.append((z, a))
        log.debug("amplitude(z=%.12f) = %.6g", z, a)
        return a

    a_lo, a_hi = amp(z_lo), amp(z_hi)
    small, large = min(a_lo, a_hi), max(a_lo, a_hi)
    if large <= 0.0 or small > jump_ratio * large:
        raise NoSignChangeError(
            f"no amplitude jump in [{z_lo}, {z_hi}]: amplitudes {a_lo:.6g} and {a_hi:.6g}"
        )
    level = 0.5 * (small + large)
    lo_above = a_lo > level
    lo, hi = float(z_lo), float(z_hi)
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if (amp(mid) > level) == lo_above:
            lo = mid
        else:
            hi = mid
    return OracleResult(0.5 * (lo + hi), (lo, hi), samples, small, large)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "y"])
    for t, x, y in zip(traj.t, traj.x, traj.y):
        w.writerow([repr(float(t)), repr(float(x)), repr(float(y))])
    _atomic_write(path, buf.getvalue())

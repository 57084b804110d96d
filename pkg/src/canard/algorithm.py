"""Fold location, assumption diagnostics and the iterative canard-point scheme.

Given ``x' = F(x, y, z)``, ``y' = G(x, y, z)`` with ``F_y != 0`` along a
branch, the graph ``y = zeta0(x, z)`` of ``F = 0`` loses normal hyperbolicity
where ``Lambda = -zeta0' F_y + G_y`` vanishes. The scheme removes the
resulting ``1/(x - x0)`` singularity one order at a time by adjusting the
parameter, producing partial sums ``zeta^n`` and ``mu^n``.
"""
from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import funspace as fs
from .expr import ExprDomainError, SystemDef, evaluate_magnitude
from .funspace import IntervalFunction

__all__ = [
    "CanardError",
    "BranchLostError",
    "FoldNotFoundError",
    "LambdaTildeZeroError",
    "FoldData",
    "Diagnostics",
    "CanardStep",
    "CanardRun",
    "solve_manifold_points",
    "critical_manifold",
    "lambda_fn",
    "phi_fn",
    "e0_fn",
    "fold_residuals",
    "auto_domain",
    "find_fold",
    "check_assumptions",
    "iterate",
    "CASE_B_THRESHOLD",
    "CASE_A_MARGIN",
]

log = logging.getLogger(__name__)

# "much smaller than" in the case test means at least this factor
CASE_A_MARGIN = 10.0
# reported alongside the case label; see check_assumptions
CASE_B_THRESHOLD = 0.05


class CanardError(Exception):
    pass


class BranchLostError(CanardError):
    pass


class FoldNotFoundError(CanardError):
    pass


class LambdaTildeZeroError(CanardError):
    pass


class IterationError(CanardError):
    def __init__(self, message: str, run: "CanardRun"):
        super().__init__(message)
        self.run = run


# --------------------------------------------------------------------------
# critical manifold


def solve_manifold_points(sys: SystemDef, x, z: float, y_guess, max_iter: int = 50):
    """Vectorized Newton for ``F(x, y, z) = 0`` in ``y``; returns ``(y, F_y)``."""
    x = np.asarray(x, dtype=float)
    y = np.array(np.broadcast_to(np.asarray(y_guess, dtype=float), x.shape), dtype=float)
    done = False
    for _ in range(max_iter):
        try:
            v, (_, fy, _) = sys.grad_F(x, y, z)
        except ExprDomainError as exc:
            raise BranchLostError(f"manifold Newton left the domain of F: {exc}") from None
        fy = np.broadcast_to(fy, x.shape)
        if np.any(fy == 0) or not np.all(np.isfinite(fy)):
            raise BranchLostError("F_y vanishes on the tracked branch")
        dy = v / fy
        y = y - dy
        if not np.all(np.isfinite(y)):
            raise BranchLostError("manifold Newton produced a non-finite value")
        if done:
            break
        if np.all(np.abs(dy) <= 1e-14 * (1.0 + np.abs(y))):
            done = True  # one more sweep to settle the last bit
    else:
        raise BranchLostError("manifold Newton did not converge")
    _, (_, fy, _) = sys.grad_F(x, y, z)
    return y, np.broadcast_to(fy, x.shape)


def _continuation(sys: SystemDef, xs: np.ndarray, z: float, y_start: float) -> np.ndarray:
    """Sequential warm-started solves along ``xs`` starting from ``y_start``."""
    ys = np.empty_like(xs)
    y = y_start
    for i, x in enumerate(xs):
        y = float(solve_manifold_points(sys, x, z, y)[0])
        ys[i] = y
    return ys


def critical_manifold(
    sys: SystemDef,
    z: float,
    domain: tuple[float, float],
    y_seed: float,
    tol: float = fs.DEFAULT_TOL,
    *,
    x_seed: Optional[float] = None,
    n_coarse: int = 129,
) -> IntervalFunction:
    """Chebyshev fit of the branch ``y = zeta0(x)`` of ``F(x, y, z) = 0``.

    ``y_seed`` is a guess for the branch at ``x_seed`` (default: the left
    endpoint). A coarse continuation sweep fixes the branch; each Chebyshev
    level is then solved by Newton warm-started from that sweep.
    """
    a, b = map(float, domain)
    x_seed = a if x_seed is None else float(x_seed)
    y_at_seed = float(solve_manifold_points(sys, x_seed, z, y_seed)[0])
    grid = np.linspace(a, b, n_coarse)
    left = grid[grid < x_seed][::-1]
    right = grid[grid > x_seed]
    ys_left = _continuation(sys, left, z, y_at_seed)[::-1]
    ys_right = _continuation(sys, right, z, y_at_seed)
    gx = np.concatenate([left[::-1], [x_seed], right])
    gy = np.concatenate([ys_left, [y_at_seed], ys_right])

    def solve(xs):
        return solve_manifold_points(sys, xs, z, np.interp(xs, gx, gy))[0]

    zeta = fs.build(solve, (a, b), tol)
    probe = np.linspace(a, b, 200)
    yp = fs.evaluate(zeta, probe)
    v, (_, fy, _) = sys.grad_F(probe, yp, z)
    scale = float(np.max(np.abs(fy)) * max(np.max(np.abs(yp)), 1e-300))
    if np.max(np.abs(v)) > 1e-10 * max(scale, 1e-300):
        raise BranchLostError("fitted manifold does not satisfy F = 0 to tolerance")
    return zeta


def _on_manifold(sys: SystemDef, zeta0: IntervalFunction, z: float, xs):
    y = fs.evaluate(zeta0, xs)
    dz = fs.evaluate(fs.differentiate(zeta0), xs)
    _, (_, fy, fz) = sys.grad_F(xs, y, z)
    _, (_, gy, gz) = sys.grad_G(xs, y, z)
    shape = np.shape(xs)
    return y, dz, np.broadcast_to(fy, shape), np.broadcast_to(fz, shape), np.broadcast_to(gy, shape), np.broadcast_to(gz, shape)


def lambda_fn(sys: SystemDef, z: float, zeta0: IntervalFunction, tol: float = fs.DEFAULT_TOL) -> IntervalFunction:
    """``Lambda(x) = -zeta0'(x) F_y + G_y`` along the manifold."""

    def f(xs):
        _, dz, fy, _, gy, _ = _on_manifold(sys, zeta0, z, xs)
        return -dz * fy + gy

    def mag(xs):
        _, dz, fy, _, gy, _ = _on_manifold(sys, zeta0, z, xs)
        return float(np.max(np.abs(dz * fy) + np.abs(gy)))

    return fs.build(f, zeta0.domain, tol, scale=mag(fs.chebpts(65, *zeta0.domain)))


def phi_fn(sys: SystemDef, z: float, zeta0: IntervalFunction, tol: float = fs.DEFAULT_TOL) -> IntervalFunction:
    """``Phi(x) = -zeta0'(x) F_z + G_z`` along the manifold."""

    def f(xs):
        _, dz, _, fz, _, gz = _on_manifold(sys, zeta0, z, xs)
        return -dz * fz + gz

    def mag(xs):
        _, dz, _, fz, _, gz = _on_manifold(sys, zeta0, z, xs)
        return float(np.max(np.abs(dz * fz) + np.abs(gz)))

    return fs.build(f, zeta0.domain, tol, scale=mag(fs.chebpts(65, *zeta0.domain)))


def e0_fn(sys: SystemDef, z: float, zeta0: IntervalFunction, tol: float = fs.DEFAULT_TOL) -> IntervalFunction:
    """``e0(x) = G(x, zeta0(x), z)``."""

    def f(xs):
        return sys.eval_G(xs, fs.evaluate(zeta0, xs), z)

    xs = fs.chebpts(65, *zeta0.domain)
    mag = float(np.max(evaluate_magnitude(sys.G, sys.env(xs, fs.evaluate(zeta0, xs), z))))
    return fs.build(f, zeta0.domain, tol, scale=mag)


# --------------------------------------------------------------------------
# fold


def fold_residuals(sys: SystemDef, x: float, m: float, y_guess: float):
    """Pointwise ``(Lambda(x), G(x, zeta0(x), m))`` and the manifold value ``y``.

    ``zeta0'`` comes from the implicit-function formula ``-F_x / F_y`` so no
    global interpolant is needed.
    """
    y, _ = solve_manifold_points(sys, x, m, y_guess)
    y = float(y)
    _, (fx, fy, _) = sys.grad_F(x, y, m)
    g, (_, gy, _) = sys.grad_G(x, y, m)
    dz = -fx / fy
    lam = -dz * fy + gy
    scales = (max(abs(fx), abs(fy), abs(gy), 1e-300), max(float(evaluate_magnitude(sys.G, sys.env(x, y, m))), 1e-300))
    return np.array([lam, g], dtype=float), y, scales


@dataclass(frozen=True, eq=False)
class FoldData:
    x0: float
    mu0: float
    y0: float
    zeta0: IntervalFunction
    lam: IntervalFunction
    lam_tilde: IntervalFunction
    phi: IntervalFunction
    e0: IntervalFunction
    domain: tuple[float, float]
    system: SystemDef = field(repr=False)
    newton_steps: int = 0


def auto_domain(
    sys: SystemDef,
    x0: float,
    mu0: float,
    y0: float,
    scan_radius: float = 1.0,
    n_scan: int = 400,
    hyperbolicity_drop: float = 0.2,
) -> tuple[float, float]:
    """``[x0 - r, x0 + r]`` with ``r`` 0.8 times the distance to the nearest obstacle.

    Obstacles: another zero of ``Lambda``, loss of the manifold branch, or
    ``|F_y|`` dropping below ``hyperbolicity_drop`` of its fold value.
    Nothing found within ``scan_radius`` gives ``r = 0.8 * scan_radius``.
    """
    _, fy0 = solve_manifold_points(sys, x0, mu0, y0)
    fy0 = float(abs(fy0))

    def probe(x, y_guess):
        try:
            res, y, _ = fold_residuals(sys, x, mu0, y_guess)
            _, fy = solve_manifold_points(sys, x, mu0, y)
        except (CanardError, ExprDomainError, ZeroDivisionError, FloatingPointError):
            return None
        if not np.all(np.isfinite(res)) or abs(float(fy)) < hyperbolicity_drop * fy0:
            return None
        return y, float(res[0])

    def scan(direction: float) -> float:
        h = scan_radius / n_scan
        y_prev, sign0 = y0, None
        d_prev = 0.0
        for k in range(1, n_scan + 1):
            d = k * h
            out = probe(x0 + direction * d, y_prev)
            bad = out is None
            if not bad:
                s = np.sign(out[1])
                if sign0 is None:
                    sign0 = s
                bad = s != 0 and s != sign0
            if bad:
                lo, hi, y_lo = d_prev, d, y_prev
                for _ in range(40):
                    mid = 0.5 * (lo + hi)
                    o = probe(x0 + direction * mid, y_lo)
                    if o is None or (sign0 is not None and np.sign(o[1]) not in (0, sign0)):
                        hi = mid
                    else:
                        lo, y_lo = mid, o[0]
                return 0.5 * (lo + hi)
            y_prev, d_prev = out[0], d
        return scan_radius

    r = 0.8 * min(scan(-1.0), scan(1.0))
    return (x0 - r, x0 + r)


def find_fold(
    sys: SystemDef,
    x_guess: float,
    z_guess: float,
    domain=None,
    y_seed: float = 0.0,
    *,
    tol: float = fs.DEFAULT_TOL,
    max_steps: int = 50,
    scan_radius: float = 1.0,
) -> FoldData:
    """Solve ``Lambda(x0) = 0``, ``G(x0, zeta0(x0), mu0) = 0`` by damped Newton.

    ``y_seed`` guesses the manifold branch near ``x_guess``. ``domain=None``
    selects the interval with :func:`auto_domain`.
    """
    v = np.array([x_guess, z_guess], dtype=float)
    y = float(y_seed)

    def scaled(res, scales):
        return float(np.max(np.abs(res) / np.asarray(scales)))

    try:
        res, y, scales = fold_residuals(sys, v[0], v[1], y)
    except (CanardError, ExprDomainError) as exc:
        raise FoldNotFoundError(f"manifold not found at the initial guess: {exc}") from None
    norm = scaled(res, scales)
    steps = 0
    converged = norm == 0.0
    while not converged and steps < max_steps:
        steps += 1
        J = np.empty((2, 2))
        try:
            for j in range(2):
                h = 1e-6 * max(abs(v[j]), 1e-2)
                vp, vm = v.copy(), v.copy()
                vp[j] += h
                vm[j] -= h
                rp = fold_residuals(sys, vp[0], vp[1], y)[0]
                rm = fold_residuals(sys, vm[0], vm[1], y)[0]
                J[:, j] = (rp - rm) / (2 * h)
            delta = np.linalg.solve(J, -res)
        except (CanardError, ExprDomainError, np.linalg.LinAlgError) as exc:
            raise FoldNotFoundError(f"fold Newton failed at step {steps}: {exc}") from None
        lam_step = 1.0
        while True:
            trial = v + lam_step * delta
            try:
                r_t, y_t, s_t = fold_residuals(sys, trial[0], trial[1], y)
                n_t = scaled(r_t, s_t)
            except (CanardError, ExprDomainError):
                n_t = np.inf
            if n_t < norm or lam_step < 1e-6:
                break
            lam_step *= 0.5
        if not np.isfinite(n_t):
            raise FoldNotFoundError(f"fold Newton left the manifold at step {steps}")
        small_step = np.all(np.abs(trial - v) <= 1e-14 * np.maximum(np.abs(v), 1e-2))
        v, res, y, norm = trial, r_t, y_t, n_t
        converged = norm <= 1e-13 or small_step
    if not converged or norm > 1e-8:
        raise FoldNotFoundError(f"fold Newton did not converge in {max_steps} steps (residual {norm:.3g})")
    x0, mu0 = float(v[0]), float(v[1])
    log.debug("fold at x0=%.12g mu0=%.12g after %d steps", x0, mu0, steps)

    if domain is None:
        domain = auto_domain(sys, x0, mu0, y, scan_radius)
    a, b = map(float, domain)
    if not a < x0 < b:
        raise FoldNotFoundError(f"fold x0={x0:.6g} lies outside the domain [{a:g}, {b:g}]")
    zeta0 = critical_manifold(sys, mu0, (a, b), y, tol, x_seed=x0)
    lam = lambda_fn(sys, mu0, zeta0, tol)
    lam_tilde = fs.deflate_root(lam, x0)
    zs = fs.roots(lam_tilde)
    if zs:
        raise LambdaTildeZeroError(f"deflated Lambda vanishes at x={zs[0]:.6g}; shrink the domain")
    return FoldData(
        x0=x0,
        mu0=mu0,
        y0=y,
        zeta0=zeta0,
        lam=lam,
        lam_tilde=lam_tilde,
        phi=phi_fn(sys, mu0, zeta0, tol),
        e0=e0_fn(sys, mu0, zeta0, tol),
        domain=(a, b),
        system=sys,
        newton_steps=steps,
    )


# --------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class Diagnostics:
    delta0: float
    K: float
    ratio: float
    lambda_tilde_at_fold: float
    e0_tilde_at_fold: float
    phi_at_fold: float
    phi_sup: float
    eps_eff: float
    case_label: str
    Fy_sup: float
    Fz_sup: float

    def rows(self) -> list[tuple[str, float | str]]:
        return [
            ("lambda_tilde(x0)", self.lambda_tilde_at_fold),
            ("e0_tilde(x0)", self.e0_tilde_at_fold),
            ("ratio", self.ratio),
            ("delta0", self.delta0),
            ("K", self.K),
            ("eps_eff", self.eps_eff),
            ("phi(x0)", self.phi_at_fold),
            ("sup|phi|", self.phi_sup),
            ("sup|F_y|", self.Fy_sup),
            ("sup|F_z|", self.Fz_sup),
            ("case", self.case_label),
        ]


def _box_partials(sys: SystemDef, fold: FoldData, nx: int = 41, ny: int = 11):
    xs = np.linspace(*fold.domain, nx)
    ys = fs.evaluate(fold.zeta0, xs)
    width = 0.1 * max(float(np.max(np.abs(ys))), 1e-3)
    fy_sup = fz_sup = 0.0
    for x, yc in zip(xs, ys):
        for y in np.linspace(yc - width, yc + width, ny):
            try:
                _, (_, fy, fz) = sys.grad_F(x, y, fold.mu0)
            except ExprDomainError:
                continue
            fy_sup = max(fy_sup, abs(float(fy)))
            fz_sup = max(fz_sup, abs(float(fz)))
    return fy_sup, fz_sup


def check_assumptions(fold: FoldData) -> Diagnostics:
    """Evaluate the non-degeneracy and smallness quantities at a fold.

    With ``eps_eff = K * delta0`` (the smallest admissible small
    parameter), case ``a`` holds when both ``|Phi(x0)|/K`` and
    ``1/(K sup|Phi|)`` exceed ``eps_eff`` by :data:`CASE_A_MARGIN`; case
    ``b`` when some ``eps >= max(eps_eff, K sup|Phi|)`` also satisfies
    ``eps <= |Phi(x0)|/K``; otherwise ``inconclusive``.
    """
    x0 = fold.x0
    e_t = fs.deflate_root(fold.e0, x0)
    delta0 = fs.sup_norm(e_t)
    lt = fold.lam_tilde
    min_lt = float(np.min(np.abs(fs.evaluate(lt, fs.extrema(lt)))))
    K = np.inf if min_lt == 0.0 else 1.0 / min_lt
    lt0 = fs.evaluate(lt, x0)
    et0 = fs.evaluate(e_t, x0)
    phi0 = fs.evaluate(fold.phi, x0)
    phi_sup = fs.sup_norm(fold.phi)
    eps_eff = K * delta0
    ratio = abs(et0 / lt0) if lt0 != 0 else np.inf

    with np.errstate(divide="ignore"):
        a_room = min(abs(phi0) / K, 1.0 / (K * phi_sup) if phi_sup > 0 else np.inf)
    if np.isfinite(eps_eff) and eps_eff * CASE_A_MARGIN <= a_room:
        case = "a"
    elif np.isfinite(eps_eff) and max(eps_eff, K * phi_sup) <= abs(phi0) / K * (1 + 1e-12):
        case = "b"
    else:
        case = "inconclusive"
    fy_sup, fz_sup = _box_partials(fold.system, fold)
    return Diagnostics(
        delta0=float(delta0),
        K=float(K),
        ratio=float(ratio),
        lambda_tilde_at_fold=float(lt0),
        e0_tilde_at_fold=float(et0),
        phi_at_fold=float(phi0),
        phi_sup=float(phi_sup),
        eps_eff=float(eps_eff),
        case_label=case,
        Fy_sup=fy_sup,
        Fz_sup=fz_sup,
    )


# --------------------------------------------------------------------------
# iteration


@dataclass(frozen=True, eq=False)
class CanardStep:
    n: int
    zeta_n: IntervalFunction
    zeta: IntervalFunction  # partial sum zeta^n
    mu_n: float
    mu: float  # partial sum mu^n
    e_tilde: IntervalFunction
    delta: float
    rho_at_fold: float = 0.0
    rho_scale: float = 1.0


@dataclass
class CanardRun:
    x0: float
    steps: list[CanardStep] = field(default_factory=list)
    termination: str = "max_iterations"

    @property
    def final(self) -> CanardStep:
        return self.steps[-1]

    @property
    def best(self) -> CanardStep:
        return min(self.steps, key=lambda s: s.delta)

    @property
    def mu(self) -> float:
        return self.final.mu

    def mus(self) -> list[float]:
        return [s.mu for s in self.steps]

    def deltas(self) -> list[float]:
        return [s.delta for s in self.steps]

    def table(self) -> str:
        lines = [f"{'n':>3}  {'mu_n':>22}  {'mu^n':>20}  {'delta_n':>12}"]
        for s in self.steps:
            lines.append(f"{s.n:>3d}  {s.mu_n:>22.14e}  {s.mu:>20.15f}  {s.delta:>12.5e}")
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "mu_n", "mu", "delta"])
        for s in self.steps:
            w.writerow([s.n, repr(s.mu_n), repr(s.mu), repr(s.delta)])
        _atomic_write(path, buf.getvalue())


def _atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _solve_mu_increment(sys: SystemDef, x0: float, y: float, yp: float, mu_prev: float, hint: float):
    """Root ``m`` of ``rho(m) = -yp F(x0, y, mu_prev + m) + G(x0, y, mu_prev + m)``."""

    def rho(m):
        f, (_, _, fz) = sys.grad_F(x0, y, mu_prev + m)
        g, (_, _, gz) = sys.grad_G(x0, y, mu_prev + m)
        return float(-yp * f + g), float(-yp * fz + gz)

    m = 0.0
    try:
        r, d = rho(m)
        for _ in range(50):
            if d == 0.0 or not np.isfinite(d):
                break
            step = r / d
            m -= step
            r, d = rho(m)
            if abs(step) <= 1e-15 * (1.0 + abs(mu_prev + m)):
                return m
    except ExprDomainError:
        pass
    # bisection fallback on a symmetric bracket
    width = 10.0 * abs(hint) if hint != 0.0 else 1e-3 * (1.0 + abs(mu_prev))
    lo, hi = -width, width
    try:
        rlo, rhi = rho(lo)[0], rho(hi)[0]
    except ExprDomainError:
        return None
    if np.sign(rlo) == np.sign(rhi):
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        rm = rho(mid)[0]
        if rm == 0.0 or hi - lo <= 4e-16 * (1.0 + abs(mu_prev)):
            return mid
        if np.sign(rm) == np.sign(rlo):
            lo, rlo = mid, rm
        else:
            hi = mid
    return 0.5 * (lo + hi)


RHO_TOL_FLOOR = 1e-14


def _rho_function(sys: SystemDef, zeta: IntervalFunction, dzeta: IntervalFunction, mu: float, tol: float):
    def f(xs):
        y = fs.evaluate(zeta, xs)
        yp = fs.evaluate(dzeta, xs)
        return -yp * sys.eval_F(xs, y, mu) + sys.eval_G(xs, y, mu)

    xs = fs.chebpts(129, *zeta.domain)
    y = fs.evaluate(zeta, xs)
    env = sys.env(xs, y, mu)
    scale = float(np.max(np.abs(fs.evaluate(dzeta, xs)) * evaluate_magnitude(sys.F, env) + evaluate_magnitude(sys.G, env)))
    # rho is a small difference of O(scale) terms; fit it close to the rounding floor
    return fs.build(f, zeta.domain, max(1e-2 * tol, RHO_TOL_FLOOR), scale=scale), scale


def iterate(
    fold: FoldData,
    sys: Optional[SystemDef] = None,
    max_iter: int = 8,
    tol: float = 1e-12,
    *,
    fit_tol: float = fs.DEFAULT_TOL,
) -> CanardRun:
    """Run the fold-removal iteration from ``fold``.

    Step ``n``: ``zeta_n = -e~_{n-1} / Lambda~``; ``mu_n`` zeroes
    ``rho_n(x0, mu^{n-1} + mu_n)``; ``e~_n`` is ``rho_n(., mu^n)`` with the
    factor ``x - x0`` divided out. Stops when ``sup|e~_n| <= tol``, after
    ``max_iter`` steps, or as soon as ``sup|e~_n|`` grows.
    """
    sys = sys or fold.system
    x0 = fold.x0
    lt = fold.lam_tilde
    e_t = fs.deflate_root(fold.e0, x0)
    run = CanardRun(x0=x0)
    run.steps.append(
        CanardStep(0, fold.zeta0, fold.zeta0, fold.mu0, fold.mu0, e_t, fs.sup_norm(e_t), fs.evaluate(fold.e0, x0))
    )
    if run.steps[0].delta <= tol:
        run.termination = "tolerance_met"
        return run
    zeta, mu, hint = fold.zeta0, fold.mu0, 0.0
    for n in range(1, max_iter + 1):
        try:
            zeta_n = fs.build(lambda xs, e=e_t: -fs.evaluate(e, xs) / fs.evaluate(lt, xs), fold.domain, fit_tol)
            zeta = fs.add(zeta, zeta_n)
            dzeta = fs.differentiate(zeta)
            mu_n = _solve_mu_increment(sys, x0, fs.evaluate(zeta, x0), fs.evaluate(dzeta, x0), mu, hint)
            if mu_n is None:
                run.termination = "newton_failure"
                return run
            mu = mu + mu_n
            rho, rho_scale = _rho_function(sys, zeta, dzeta, mu, fit_tol)
        except fs.DegreeCapError as exc:
            raise IterationError(f"step {n}: {exc}", run) from None
        e_t = fs.deflate_root(rho, x0)
        delta = fs.sup_norm(e_t)
        run.steps.append(CanardStep(n, zeta_n, zeta, mu_n, mu, e_t, delta, fs.evaluate(rho, x0), rho_scale))
        hint = mu_n
        if delta <= tol:
            run.termination = "tolerance_met"
            return run
        if delta > run.steps[-2].delta:
            run.termination = "diverged"
            return run
    run.termination = "max_iterations"
    return run

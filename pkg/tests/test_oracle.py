import csv
import math

import numpy as np
import pytest

from canard.expr import SystemDef
from canard.oracle import (
    NoRecurrenceError,
    NoSignChangeError,
    NonFiniteStateError,
    StepUnderflowError,
    integrate,
    limit_cycle_amplitude,
    locate_explosion,
    measure_cycle,
    write_trajectory_csv,
)

from conftest import rotated_vdp, templator, vdp

ROTATION = SystemDef.from_strings("y", "-x")


def test_rotation_returns_after_one_period():
    tr = integrate(ROTATION, 0.0, (1.0, 0.0), 2 * math.pi, rtol=1e-9)
    assert tr.t[-1] == pytest.approx(2 * math.pi)
    assert abs(tr.x[-1] - 1.0) < 1e-6
    assert np.all(np.diff(tr.t) > 0)


def test_rotation_energy_conserved():
    tr = integrate(ROTATION, 0.0, (1.0, 0.0), 20 * math.pi, rtol=1e-9)
    assert np.max(np.abs(tr.x**2 + tr.y**2 - 1.0)) < 1e-6


def test_extrema_capture_on_rotation():
    tr = integrate(ROTATION, 0.0, (1.0, 0.0), 10.5 * math.pi, rtol=1e-9)
    # x = cos t has maxima at 2 pi k
    np.testing.assert_allclose(tr.maxima_t, 2 * math.pi * np.arange(1, 6), atol=1e-6)


def test_integrator_order_fixed_step():
    errs, hs = [], []
    for n in (25, 50, 100, 200):
        h = 2 * math.pi / n
        tr = integrate(ROTATION, 0.0, (1.0, 0.0), 2 * math.pi, h_fixed=h)
        errs.append(math.hypot(tr.x[-1] - 1.0, tr.y[-1]))
        hs.append(h)
    orders = np.diff(np.log(errs)) / np.diff(np.log(hs))
    assert np.all(orders >= 4.5), orders


def test_integrator_order_under_tolerance_decades():
    # global error against the number of accepted steps as rtol drops decade by decade
    errs, steps = [], []
    for rtol in (1e-5, 1e-6, 1e-7, 1e-8, 1e-9):
        tr = integrate(ROTATION, 0.0, (1.0, 0.0), 20 * math.pi, rtol=rtol)
        errs.append(math.hypot(tr.x[-1] - 1.0, tr.y[-1]))
        steps.append(tr.steps)
    order = -np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert order >= 4.5, order


def test_rtol_range():
    with pytest.raises(ValueError):
        integrate(ROTATION, 0.0, (1.0, 0.0), 1.0, rtol=1e-2)


def test_finite_time_blow_up_underflows():
    blow = SystemDef.from_strings("x^2", "0")
    with pytest.raises(StepUnderflowError):
        integrate(blow, 0.0, (1.0, 0.0), 2.0)


def test_non_finite_state():
    nan_rhs = SystemDef.from_strings("1 + 0*exp(1000*x)", "0")
    with pytest.raises(NonFiniteStateError):
        integrate(nan_rhs, 0.0, (1.0, 0.0), 2.0)


def test_vdp_relaxation_range():
    tr = integrate(vdp(0.05), 0.9, (0.0, 0.0), 400.0)
    late = tr.x[tr.t > 200]
    # finite eps shifts the jump points slightly inside [-2, 2]
    assert late.min() == pytest.approx(-2.0, abs=0.2)
    assert late.max() == pytest.approx(2.0, abs=0.2)


def test_vdp_amplitudes():
    assert limit_cycle_amplitude(vdp(0.05), 0.9, (0.0, 0.0)) == pytest.approx(4.0, rel=0.1)
    assert limit_cycle_amplitude(vdp(0.05), 1.05, (0.0, 0.0)) == 0.0


def test_templator_large_amplitude_reference():
    m = measure_cycle(templator(), 0.5, (0.1, 1.0))
    assert m.amplitude > 0.5
    assert m.n_maxima >= 3 and math.isfinite(m.period)


def test_no_recurrence():
    with pytest.raises(NoRecurrenceError):
        limit_cycle_amplitude(ROTATION, 0.0, (1.0, 0.0), settle_time=1.0, window=0.1)


@pytest.mark.parametrize(
    "sys,z,seed",
    [(vdp(0.05), 0.9, (0.0, 0.0)), (rotated_vdp(0.05), 0.9, (0.0, 0.0)), (templator(), 0.5, (0.1, 1.0))],
    ids=["vdp", "rotated", "templator"],
)
def test_amplitude_tolerance_stable(sys, z, seed):
    a1 = limit_cycle_amplitude(sys, z, seed, rtol=1e-8)
    a2 = limit_cycle_amplitude(sys, z, seed, rtol=5e-9)
    assert abs(a1 - a2) < 0.01 * a1


@pytest.fixture(scope="module")
def vdp_explosion():
    return locate_explosion(vdp(0.05), 0.98, 1.0, 30)


def test_bisection_halves_bracket(vdp_explosion):
    res = vdp_explosion
    assert res.width == pytest.approx(0.02 * 2.0**-30, rel=1e-6)
    assert res.bracket[0] <= res.z_star <= res.bracket[1]
    assert len(res.samples) == 32


def test_explosion_matches_canard_iteration(vdp_explosion):
    from canard.algorithm import find_fold, iterate

    mu3 = iterate(find_fold(vdp(0.05), 0.9, 0.9, (0.5, 1.5), -0.6), max_iter=3).mu
    assert abs(vdp_explosion.z_star - mu3) < 2e-3


def test_bracket_endpoints_straddle(vdp_explosion):
    res = vdp_explosion
    amps = dict(res.samples)
    assert amps[0.98] > res.level > amps[1.0]


def test_no_sign_change():
    with pytest.raises(NoSignChangeError):
        locate_explosion(vdp(0.05), 1.2, 1.3, 5)


def test_sweep_csv(tmp_path, vdp_explosion):
    p = tmp_path / "sweep.csv"
    vdp_explosion.to_csv(p)
    rows = list(csv.reader(p.read_text().splitlines()))
    assert rows[0] == ["z", "amplitude"]
    zs = [float(r[0]) for r in rows[1:]]
    assert zs == sorted(zs)


def test_trajectory_csv(tmp_path):
    tr = integrate(ROTATION, 0.0, (1.0, 0.0), 1.0)
    p = tmp_path / "traj.csv"
    write_trajectory_csv(tr, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,x,y"
    assert len(lines) == tr.t.size + 1

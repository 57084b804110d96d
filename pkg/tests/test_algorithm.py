from functools import lru_cache

import numpy as np
import pytest

from canard import funspace as fs
from canard.algorithm import (
    BranchLostError,
    FoldNotFoundError,
    LambdaTildeZeroError,
    check_assumptions,
    critical_manifold,
    find_fold,
    fold_residuals,
    iterate,
    lambda_fn,
)
from canard.expr import SystemDef

from conftest import rotated_vdp, templator, vdp

FOLD_ARGS = {
    "vdp": (lambda: vdp(0.05), 0.9, 0.9, (0.5, 1.5), -0.6),
    "rotated": (lambda: rotated_vdp(0.05), 1 / 6, 1.0, None, -5 / 6),
    "templator": (templator, 0.0145, 0.42, None, 4.1),
    "templator2": (templator, 0.6, 0.97, None, 1.3),
}


@lru_cache(maxsize=None)
def fold_for(name):
    make, xg, zg, dom, ys = FOLD_ARGS[name]
    return find_fold(make(), xg, zg, dom, ys)


@lru_cache(maxsize=None)
def run_for(name, max_iter=3):
    return iterate(fold_for(name), max_iter=max_iter)


def zeta0_closed_form(x, K=0.02):
    # positive branch of F = 0 for the Templator: y^2 = q x / ((K + x)(k_u + k_T x))
    return np.sqrt(x / ((K + x) * (0.01 + x)))


def test_vdp_critical_manifold():
    z = critical_manifold(vdp(0.05), 1.0, (0.5, 1.5), -0.6)
    xs = np.linspace(0.5, 1.5, 50)
    np.testing.assert_allclose(fs.evaluate(z, xs), xs**3 / 3 - xs, atol=1e-12)
    assert fs.evaluate(z, 1.0) == pytest.approx(-2 / 3, abs=1e-12)


def test_linear_manifold():
    sys = SystemDef.from_strings("y - x", "z")
    z = critical_manifold(sys, 0.3, (-1, 2), 0.0)
    np.testing.assert_allclose(fs.evaluate(z, np.linspace(-1, 2, 9)), np.linspace(-1, 2, 9), atol=1e-13)


def test_templator_manifold_matches_closed_form():
    z = critical_manifold(templator(), 0.417681, (0.005, 0.03), 4.0, x_seed=0.0141421)
    assert fs.evaluate(z, 0.0141421) == pytest.approx(4.1421, abs=1e-3)
    xs = np.linspace(0.005, 0.03, 40)
    np.testing.assert_allclose(fs.evaluate(z, xs), zeta0_closed_form(xs), rtol=1e-10)


def test_branch_lost():
    sys = SystemDef.from_strings("y^2 - x", "z")
    with pytest.raises(BranchLostError):
        critical_manifold(sys, 0.0, (-1.0, 1.0), 1.0, x_seed=0.5)


def test_vdp_lambda():
    zeta = critical_manifold(vdp(0.05), 1.0, (0.5, 1.5), -0.6)
    lam = lambda_fn(vdp(0.05), 1.0, zeta)
    xs = np.linspace(0.5, 1.5, 30)
    np.testing.assert_allclose(fs.evaluate(lam, xs), 1 - xs**2, atol=1e-11)
    np.testing.assert_allclose(fs.roots(lam), [1.0], atol=1e-10)


@pytest.mark.parametrize("name", list(FOLD_ARGS))
def test_lambda_two_form_equivalence(name):
    fold = fold_for(name)
    sys = fold.system
    xs = np.linspace(*fold.domain, 200)
    ys = fs.evaluate(fold.zeta0, xs)
    _, (fx, fy, _) = sys.grad_F(xs, ys, fold.mu0)
    _, (_, gy, _) = sys.grad_G(xs, ys, fold.mu0)
    other = fx + gy
    mask = np.abs(fy) > 0.1 * np.max(np.abs(fy))
    lam = fs.evaluate(fold.lam, xs)
    scale = np.max(np.abs(lam))
    assert np.max(np.abs(lam - other)[mask]) <= 1e-8 * scale


@pytest.mark.parametrize("name", list(FOLD_ARGS))
def test_fold_residuals_small(name):
    fold = fold_for(name)
    lam_sup = fs.sup_norm(fold.lam)
    assert abs(fs.evaluate(fold.lam, fold.x0)) <= 1e-8 * lam_sup
    res, _, scales = fold_residuals(fold.system, fold.x0, fold.mu0, fold.y0)
    assert np.all(np.abs(res) <= 1e-8 * np.asarray(scales))
    assert fs.roots(fold.lam_tilde) == []
    assert fold.domain[0] < fold.x0 < fold.domain[1]


def test_vdp_fold_location():
    fold = fold_for("vdp")
    assert fold.x0 == pytest.approx(1.0, abs=1e-12)
    assert fold.mu0 == pytest.approx(1.0, abs=1e-12)
    assert fs.evaluate(fold.lam_tilde, 1.0) == pytest.approx(-2.0, abs=1e-10)


def test_rotated_fold_location():
    fold = fold_for("rotated")
    assert fold.x0 == pytest.approx(1 / 6, abs=1e-10)
    assert fold.mu0 == pytest.approx(1.0, abs=1e-10)


def test_fold_not_found():
    with pytest.raises(FoldNotFoundError):
        find_fold(SystemDef.from_strings("y - x", "z - x"), 0.0, 0.0, (-1, 1), 0.0)


def test_lambda_tilde_zero_in_domain():
    # Lambda = 1 - x^2 also vanishes at x = -1
    with pytest.raises(LambdaTildeZeroError):
        find_fold(vdp(0.05), 0.9, 0.9, (-1.5, 1.5), -0.6)


def test_auto_domain_excludes_second_zero():
    a, b = fold_for("templator2").domain
    # Lambda has another zero near the first fold; the domain must stop short of it
    assert a > fold_for("templator").x0


def test_vdp_case_b():
    d = check_assumptions(fold_for("vdp"))
    assert d.case_label == "b"
    assert d.phi_at_fold == pytest.approx(0.05, abs=1e-12)
    assert d.phi_sup == pytest.approx(0.05, abs=1e-12)
    assert d.ratio == pytest.approx(0.025, abs=1e-10)
    assert all(np.isfinite(v) for k, v in d.rows() if k != "case")


def test_templator_case_a():
    d = check_assumptions(fold_for("templator"))
    assert d.case_label == "a"
    assert d.phi_at_fold == pytest.approx(1.0, abs=1e-12)
    # e0 = z - k_u y^2 - k_T x y^2 = mu0 - q x/(K + x) on the manifold
    assert d.e0_tilde_at_fold == pytest.approx(-0.02 / (0.02 + fold_for("templator").x0) ** 2, rel=1e-8)


@pytest.mark.parametrize("name", ["vdp", "templator", "templator2", "rotated"])
def test_per_step_exactness_and_partial_sums(name):
    run = run_for(name)
    total = 0.0
    for s in run.steps:
        total += s.mu_n
        assert s.mu == total
        assert abs(s.rho_at_fold) <= 1e-9 * s.rho_scale


@pytest.mark.parametrize("name", ["vdp", "templator", "templator2", "rotated"])
def test_deflation_consistency(name):
    fold = fold_for(name)
    sys = fold.system
    run = run_for(name)
    xs = np.linspace(*fold.domain, 200)
    for s in run.steps[1:]:
        dz = fs.differentiate(s.zeta)
        y = fs.evaluate(s.zeta, xs)
        rho = -fs.evaluate(dz, xs) * sys.eval_F(xs, y, s.mu) + sys.eval_G(xs, y, s.mu)
        y0 = fs.evaluate(s.zeta, fold.x0)
        rho0 = -fs.evaluate(dz, fold.x0) * sys.eval_F(fold.x0, y0, s.mu) + sys.eval_G(fold.x0, y0, s.mu)
        recon = (xs - fold.x0) * fs.evaluate(s.e_tilde, xs) + rho0
        # rho cancels terms of size rho_scale, so pointwise rounding sets a floor
        assert np.max(np.abs(recon - rho)) <= 1e-9 * np.max(np.abs(rho)) + 1e-13 * s.rho_scale


@pytest.mark.parametrize("eps", [0.02, 0.05, 0.1])
def test_vdp_first_step_exact(eps):
    run = iterate(find_fold(vdp(eps), 0.9, 0.9, (0.5, 1.5), -0.6), max_iter=1)
    assert run.mus()[1] == pytest.approx(1 - eps / 8, abs=1e-12)


@pytest.mark.parametrize("eps", [0.02, 0.05, 0.1])
def test_vdp_decay(eps):
    run = iterate(find_fold(vdp(eps), 0.9, 0.9, (0.5, 1.5), -0.6), max_iter=3)
    d = run.deltas()
    assert len(d) == 4
    for n in range(3):
        assert d[n + 1] / d[n] <= 10 * eps


def test_vdp_second_order_series():
    # mu^2 agrees with 1 - eps/8 - 3 eps^2/32 to third order
    for eps in (0.02, 0.05):
        mu2 = iterate(find_fold(vdp(eps), 0.9, 0.9, (0.5, 1.5), -0.6), max_iter=2).mus()[2]
        assert abs(mu2 - (1 - eps / 8 - 3 * eps**2 / 32)) <= 2 * eps**3


def test_parameter_shift_covariance():
    c = 0.37
    base = vdp(0.05)
    shifted = base.shifted(c)
    r0 = iterate(find_fold(base, 0.9, 0.9, (0.5, 1.5), -0.6), max_iter=3)
    r1 = iterate(find_fold(shifted, 0.9, 0.9 - c, (0.5, 1.5), -0.6), max_iter=3)
    xs = np.linspace(0.5, 1.5, 50)
    for a, b in zip(r0.steps, r1.steps):
        assert b.mu == pytest.approx(a.mu - c, abs=1e-10)
        np.testing.assert_allclose(fs.evaluate(b.zeta_n, xs), fs.evaluate(a.zeta_n, xs), atol=1e-10)


def test_divergence_keeps_best():
    run = iterate(fold_for("templator"), max_iter=8)
    assert run.termination == "diverged"
    d = run.deltas()
    assert d[-1] > d[-2]
    assert run.best.delta == min(d)


def test_tolerance_met():
    run = iterate(fold_for("vdp"), max_iter=8, tol=1e-3)
    assert run.termination == "tolerance_met"
    assert run.final.delta <= 1e-3


def test_table_and_csv(tmp_path):
    run = run_for("vdp")
    lines = run.table().splitlines()
    assert lines[0].split() == ["n", "mu_n", "mu^n", "delta_n"]
    assert len(lines) == 1 + len(run.steps)
    run.to_csv(tmp_path / "e.csv")
    text = (tmp_path / "e.csv").read_text()
    assert text.splitlines()[0] == "n,mu_n,mu,delta"
    assert float(text.splitlines()[2].split(",")[2]) == run.mus()[1]

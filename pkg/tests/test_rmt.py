import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from robust_glrt.errors import DegenerateDenominator, RhoOutOfRange
from robust_glrt.estimators import rho_grid
from robust_glrt.model import (CovarianceModel, build_toeplitz_ar,
                               identity_model, uniform_steering)
from robust_glrt.rmt import (gamma_equation, rayleigh_cdf, rayleigh_tail,
                             rho_bar, solve_gamma, solve_stieltjes,
                             stieltjes_equation, theoretical_sigma2,
                             theory_context)

TOEPLITZ_100 = build_toeplitz_ar(0.7, 100)
TOEPLITZ_20 = build_toeplitz_ar(0.7, 20)


def _grid_scan_root(f, lo, hi, resolution=1e-10, points=2001):
    """Root of a monotone ``f`` by repeatedly scanning a uniform grid and
    keeping the cell where the sign changes."""
    sign_lo = np.sign(f(lo))
    while hi - lo > resolution:
        xs = np.linspace(lo, hi, points)
        vals = np.array([f(x) for x in xs])
        k = int(np.argmax(np.sign(vals) != sign_lo))
        lo, hi = xs[k - 1], xs[k]
    return 0.5 * (lo + hi)


def test_gamma_is_one_for_identity_at_every_grid_point():
    model = identity_model(30)
    for rho in rho_grid(0.5, 50, 0.01):
        assert solve_gamma(model, rho) == 1.0


def test_gamma_is_one_at_full_shrinkage():
    assert solve_gamma(TOEPLITZ_100, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_gamma_matches_grid_scan():
    lam = TOEPLITZ_20.eigenvalues
    oracle = _grid_scan_root(lambda g: gamma_equation(lam, 0.2, g), 1e-3, 10.0)
    assert solve_gamma(TOEPLITZ_20, 0.2) == pytest.approx(oracle, abs=1e-10)


def test_fixed_point_residuals_on_grid():
    p = uniform_steering(100)
    for rho in rho_grid(0.5, 50, 0.01):
        g = solve_gamma(TOEPLITZ_100, rho)
        assert abs(gamma_equation(TOEPLITZ_100.eigenvalues, rho, g)) <= 1e-12
        rb = rho_bar(rho, 0.5, g)
        m = solve_stieltjes(TOEPLITZ_100, rb, 0.5)
        assert m > 0
        assert abs(stieltjes_equation(TOEPLITZ_100.eigenvalues, rb, 0.5, m)) <= 1e-12
        assert theoretical_sigma2(TOEPLITZ_100, p, rb, m, 0.5) > 0


def test_rho_bar_identity_closed_form():
    assert rho_bar(0.2, 0.5, 1.0) == pytest.approx(0.2 / (0.2 + 0.8 / 0.6), abs=1e-15)
    assert rho_bar(0.2, 0.5, 1.0) == pytest.approx(3.0 / 23.0, abs=1e-15)
    assert rho_bar(1.0, 0.5, 1.7) == 1.0


def test_rho_bar_increasing_onto_unit_interval():
    for c in (0.5, 2.0):
        values = [rho_bar(r, c, solve_gamma(TOEPLITZ_20, r)) for r in rho_grid(c, 50, 0.01)]
        assert np.all(np.diff(values) > 0)
        assert 0 < values[0] and values[-1] == 1.0


def test_rho_bar_guards():
    with pytest.raises(ValueError):
        rho_bar(0.5, 0.5, 0.0)
    with pytest.raises(RhoOutOfRange):
        rho_bar(0.4, 2.0, 1.0)


def test_stieltjes_identity_quadratic():
    rb = 3.0 / 23.0
    c = 0.5
    roots = np.roots([rb * (1 - rb), rb + c * (1 - rb) - (1 - rb), -1.0])
    oracle = roots[roots > 0][0]
    assert oracle == pytest.approx(4.6, abs=1e-12)
    assert solve_stieltjes(identity_model(10), rb, c) == pytest.approx(4.6, abs=1e-9)


def test_stieltjes_at_full_shrinkage():
    assert solve_stieltjes(TOEPLITZ_100, 1.0, 0.5) == 1.0


def test_stieltjes_stable_under_doubled_bisection():
    rb = theory_context(TOEPLITZ_100, uniform_steering(100), 0.2, 0.5).rho_bar
    coarse = solve_stieltjes(TOEPLITZ_100, rb, 0.5, max_halvings=45)
    fine = solve_stieltjes(TOEPLITZ_100, rb, 0.5, max_halvings=90)
    assert abs(coarse - fine) <= 1e-10
    assert abs(solve_stieltjes(TOEPLITZ_100, rb, 0.5) - fine) <= 1e-12


def test_identity_chain_closed_form():
    ctx = theory_context(identity_model(50), uniform_steering(50), 0.2, 0.5)
    assert ctx.gamma == 1.0
    assert ctx.rho_bar == pytest.approx(3.0 / 23.0, abs=1e-12)
    assert ctx.m == pytest.approx(4.6, abs=1e-9)
    np.testing.assert_allclose(ctx.resolvent_diag, 0.2, atol=1e-9)
    assert ctx.sigma2 == pytest.approx(0.5 / 0.68, abs=1e-9)


def test_sigma2_at_full_shrinkage_is_half_steered_power():
    rng = np.random.default_rng(3)
    p = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    p /= np.linalg.norm(p)
    expected = 0.5 * np.vdot(p, TOEPLITZ_20.matrix @ p).real
    assert theoretical_sigma2(TOEPLITZ_20, p, 1.0, 1.0, 0.5) == pytest.approx(expected, rel=1e-12)


def test_sigma2_rejects_degenerate_bracket():
    with pytest.raises(DegenerateDenominator):
        theoretical_sigma2(identity_model(5), uniform_steering(5), 0.01, 100.0, 2.0)


def test_sigma2_continuous_over_grid():
    p = uniform_steering(100)
    grid = np.linspace(0.01, 1.0, 200)
    s2 = np.array([theory_context(TOEPLITZ_100, p, r, 0.5).sigma2 for r in grid])
    assert np.all(s2 > 0)
    assert np.max(np.abs(np.diff(s2))) < 0.05


# Reference theory values: false-alarm rate at gamma = 2 and 3, and the
# Rayleigh mean sigma * sqrt(pi / 2), for Toeplitz(0.7) at c = 1/2.
REFERENCE_FAR = [
    (20, 2.0, 0.01, 0.132470), (20, 2.0, 0.2, 0.109677), (20, 2.0, 0.5, 0.149055),
    (20, 2.0, 0.9, 0.359384), (20, 2.0, 1.0, 0.441279),
    (20, 3.0, 0.01, 0.010587), (20, 3.0, 0.2, 0.006922), (20, 3.0, 0.9, 0.100002),
    (100, 2.0, 0.01, 0.132556), (100, 2.0, 0.2, 0.111401), (100, 2.0, 0.5, 0.156136),
    (100, 2.0, 0.9, 0.392165), (100, 2.0, 1.0, 0.483934),
    (100, 3.0, 0.01, 0.010602), (100, 3.0, 0.2, 0.007170), (100, 3.0, 1.0, 0.195330),
]

REFERENCE_MEAN = [
    (20, 0.01, 1.246663), (20, 0.2, 1.192223), (20, 0.5, 1.284710), (20, 1.0, 1.959646),
    (100, 0.01, 1.246863), (100, 0.2, 1.196452), (100, 0.5, 1.300667), (100, 1.0, 2.080485),
]


@pytest.mark.parametrize("N, threshold, rho, reference", REFERENCE_FAR)
def test_far_theory_matches_reference_curve(N, threshold, rho, reference):
    model = TOEPLITZ_20 if N == 20 else TOEPLITZ_100
    ctx = theory_context(model, uniform_steering(N), rho, 0.5)
    assert float(ctx.far(threshold)) == pytest.approx(reference, abs=1.5e-6)


@pytest.mark.parametrize("N, rho, reference", REFERENCE_MEAN)
def test_rayleigh_mean_matches_reference_curve(N, rho, reference):
    model = TOEPLITZ_20 if N == 20 else TOEPLITZ_100
    s2 = theory_context(model, uniform_steering(N), rho, 0.5).sigma2
    # the reference curve drifts by up to 2e-6 from a tight solve at small rho
    assert np.sqrt(s2 * np.pi / 2) == pytest.approx(reference, abs=5e-6)


def test_unshrunk_bracket_variant_would_miss_the_reference_curve():
    # Using (1 - rho) instead of (1 - rho_bar) in the bracket is off by about 6%.
    ctx = theory_context(TOEPLITZ_100, uniform_steering(100), 0.2, 0.5)
    lam = TOEPLITZ_100.eigenvalues
    q = ctx.resolvent_diag
    u = TOEPLITZ_100.eigenvectors.conj().T @ uniform_steering(100)
    w = np.abs(u) ** 2
    bracket = 1 - 0.5 * (1 - 0.2) ** 2 * ctx.m ** 2 * np.mean(lam ** 2 * q ** 2)
    alt = 0.5 * np.sum(w * lam * q ** 2) / (np.sum(w * q) * np.mean(lam * q) * bracket)
    assert abs(np.sqrt(alt * np.pi / 2) - 1.196452) > 0.05


def test_rayleigh_tail_values():
    assert rayleigh_tail(0.0, 0.3) == 1.0
    assert rayleigh_tail(1.0, 0.5) == pytest.approx(np.exp(-1.0), abs=1e-15)
    assert rayleigh_tail(2.0, 0.5 / 0.68) == pytest.approx(np.exp(-2.72), abs=1e-12)
    assert rayleigh_tail(2.0, 0.5 / 0.68) == pytest.approx(0.0659, abs=5e-5)


@given(st.floats(0.0, 10.0), st.floats(0.05, 5.0))
@settings(max_examples=60)
def test_rayleigh_tail_matches_scipy(t, s2):
    reference = stats.rayleigh(scale=np.sqrt(s2)).sf(t)
    assert rayleigh_tail(t, s2) == pytest.approx(reference, rel=1e-12, abs=1e-300)
    assert rayleigh_cdf(t, s2) == pytest.approx(1 - reference, abs=1e-12)


@given(st.lists(st.floats(0.05, 5.0), min_size=2, max_size=12), st.floats(0.05, 0.95))
@settings(max_examples=40, deadline=None)
def test_gamma_solves_its_equation_for_random_spectra(raw, rho):
    model = CovarianceModel.from_matrix(np.diag(raw))
    g = solve_gamma(model, rho)
    assert g > 0
    assert abs(gamma_equation(model.eigenvalues, rho, g)) <= 1e-12


def test_theory_context_rejects_out_of_range():
    with pytest.raises(RhoOutOfRange):
        theory_context(TOEPLITZ_20, uniform_steering(20), 0.5, 2.0)
    with pytest.raises(RhoOutOfRange):
        theory_context(TOEPLITZ_20, uniform_steering(20), 0.0, 0.5)

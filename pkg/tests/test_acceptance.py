"""Exit criteria. Each test prints one ``CRITERION k: PASS|FAIL`` line, and
the lines are repeated in the terminal summary."""
import time

import numpy as np
import pytest
from scipy import stats

from robust_glrt.estimators import SolverConfig, robust_shrinkage_fit
from robust_glrt.detector import glrt_statistic
from robust_glrt.model import (TextureModel, build_toeplitz_ar, identity_model,
                               sample_dataset, uniform_steering)
from robust_glrt.montecarlo import (TrialPlan, convergence_probe,
                                    estimator_error_sweep,
                                    ks_distance_vs_rayleigh, run_far_sweep)
from robust_glrt.rmt import (rho_bar, solve_gamma, solve_stieltjes,
                             theoretical_sigma2)

pytestmark = pytest.mark.acceptance

ACCELERATED = SolverConfig(tolerance=1e-9, anderson_depth=5)
GRID_19 = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))


@pytest.fixture(scope="module")
def detector_run():
    """N = 100, Toeplitz(0.7), rho = 0.2, 80 x 500 = 4e4 H0 trials, plain
    fixed-point iteration."""
    plan = TrialPlan(N=100, n=200, rho_grid=(0.2,), gammas=(2.0, 3.0), outer_trials=80,
                     inner_trials=500, seed=2024, block_size=16)
    start = time.perf_counter()
    out = run_far_sweep(plan)
    return out, time.perf_counter() - start


@pytest.fixture(scope="module")
def grid_run():
    """N = 100, 19-point grid, 200 secondary-data draws x 200 observations."""
    plan = TrialPlan(N=100, n=200, rho_grid=GRID_19, gammas=(2.0, 3.0), outer_trials=200,
                     inner_trials=200, seed=77, solver=ACCELERATED, block_size=16)
    start = time.perf_counter()
    out = run_far_sweep(plan)
    return out, time.perf_counter() - start


def test_criterion_1_identity_chain(criterion):
    start = time.perf_counter()
    model, N, c, rho = identity_model(100), 100, 0.5, 0.2
    gamma = solve_gamma(model, rho)
    rb = rho_bar(rho, c, gamma)
    m = solve_stieltjes(model, rb, c)
    s2 = theoretical_sigma2(model, uniform_steering(N), rb, m, c)
    elapsed = time.perf_counter() - start
    errors = {"gamma": abs(gamma - 1.0), "rho_bar": abs(rb - 3.0 / 23.0),
              "m": abs(m - 4.6), "sigma2": abs(s2 - 0.5 / 0.68)}
    ok = gamma == 1.0 and max(errors.values()) <= 1e-9 and elapsed < 1.0
    criterion(1, ok, f"gamma={gamma!r} rho_bar={rb:.12f} m={m:.12f} sigma2={s2:.12f} "
                     f"max_err={max(errors.values()):.2e} time={elapsed:.3f}s")
    assert ok


def test_criterion_2_false_alarm_rate(detector_run, criterion):
    out, elapsed = detector_run
    curve = out.far_curve()
    p2, p3 = curve.at(0.2, 2.0), curve.at(0.2, 3.0)
    trials = int(curve.trials[0])
    ok = (trials >= 20_000 and abs(p2["empirical"] - 0.1114) <= 0.01
          and abs(p3["empirical"] - 0.00717) <= 0.003 and elapsed <= 600)
    criterion(2, ok, f"trials={trials} FAR(2)={p2['empirical']:.5f}+-{p2['stderr']:.5f} "
                     f"(theory {p2['theory']:.5f}) FAR(3)={p3['empirical']:.5f}+-{p3['stderr']:.5f} "
                     f"(theory {p3['theory']:.5f}) time={elapsed:.1f}s")
    assert ok


def test_criterion_3_rayleigh_fit(detector_run, criterion):
    out, _ = detector_run
    samples = out.scaled[:20, 0, :].ravel()
    diag = ks_distance_vs_rayleigh(samples, np.sqrt(out.theory_sigma2[0]))
    ok = samples.size == 10_000 and diag.ks <= 0.03
    criterion(3, ok, f"samples={samples.size} KS={diag.ks:.4f} p={diag.pvalue:.3f}")
    assert ok


def test_criterion_4_plug_in_accuracy(grid_run, criterion):
    out, elapsed = grid_run
    report = estimator_error_sweep(out)
    k = int(np.argmin(np.abs(report.rho - 0.2)))
    mean, std = report.plugin_far_mean[k, 0], report.plugin_far_std[k, 0]
    worst = float(np.max(report.median_rel_error))
    ok = (worst <= 0.10 and abs(mean - 0.1115) <= 0.01 and 0.004 / 2 <= std <= 0.004 * 2
          and elapsed <= 300)
    criterion(4, ok, f"max median rel err={worst:.4f} at rho={report.rho[np.argmax(report.median_rel_error)]:.2f}; "
                     f"plug-in FAR(0.2, 2)={mean:.5f}+-{std:.5f} time={elapsed:.1f}s")
    assert ok


def test_criterion_5_selected_shrinkage(grid_run, criterion):
    out, elapsed = grid_run
    selected = out.rho_star_far(Gammas=(2.0,), scaled=True)
    at_star = float(selected["empirical"][0])
    curve = out.far_curve(gammas=(2.0,))
    grid_min = float(np.min(curve.empirical[:, 0]))
    values, counts = np.unique(selected["rho_star"], return_counts=True)
    mode = float(values[np.argmax(counts)])
    share = float(np.mean((selected["rho_star"] >= 0.1) & (selected["rho_star"] <= 0.35)))
    ok = at_star - grid_min <= 0.01 and 0.1 <= mode <= 0.35 and elapsed <= 600
    criterion(5, ok, f"FAR at rho*={at_star:.5f} grid min={grid_min:.5f} "
                     f"(rho={curve.rho[np.argmin(curve.empirical[:, 0])]:.2f}) excess={at_star - grid_min:+.5f}; "
                     f"rho* mode={mode:.2f}, share in [0.1,0.35]={share:.2f}")
    assert ok


def test_criterion_6_convergence_rates(criterion):
    start = time.perf_counter()
    report = convergence_probe([50, 100, 200, 400], 0.5, seeds=range(20), solver=ACCELERATED)
    elapsed = time.perf_counter() - start
    norm = report.norm_slope
    bil = report.bilinear_slope[-1]
    ok = norm <= -0.25 and bil <= -0.75 and bil < norm and elapsed <= 300
    others = ", ".join(f"k={k}: {s:.3f}" for k, s in report.bilinear_slope.items())
    criterion(6, ok, f"norm slope={norm:.3f} bilinear slope (k=-1)={bil:.3f} [{others}] time={elapsed:.1f}s")
    assert ok


def test_criterion_7_invariance_suite(criterion):
    start = time.perf_counter()
    checks = {}
    model = build_toeplitz_ar(0.7, 20)
    unit = sample_dataset(model, 40, TextureModel("unit"), seed=3)
    heavy = sample_dataset(model, 40, TextureModel("inverse-gamma", 0.5), seed=3)
    C_unit = robust_shrinkage_fit(unit, 0.2)
    C_heavy = robust_shrinkage_fit(heavy, 0.2)
    checks["scatter texture"] = np.max(np.abs(C_unit.matrix - C_heavy.matrix)) <= 1e-10

    base = dict(N=20, n=40, rho_grid=(0.2,), outer_trials=20, inner_trials=500, solver=ACCELERATED)
    T_unit = run_far_sweep(TrialPlan(texture=TextureModel("unit"), seed=1, **base)).T.ravel()
    T_heavy = run_far_sweep(TrialPlan(texture=TextureModel("inverse-gamma", 0.5), seed=2, **base)).T.ravel()
    ks = stats.ks_2samp(T_unit, T_heavy)
    checks["statistic texture (KS)"] = ks.pvalue > 0.01

    p = uniform_steering(20)
    y = heavy.X[:, 0]
    t0 = glrt_statistic(y, p, C_heavy).value
    checks["statistic scaling"] = all(
        abs(glrt_statistic(a * y, b * p, s * C_heavy.matrix).value - t0) <= 1e-12
        for a, b, s in [(3.0, 1.0, 1.0), (1j, 0.5, 1.0), (1.0, 1.0, 40.0), (-2.0, 2.0, 1e-3)])

    checks["identity at rho=1"] = np.array_equal(robust_shrinkage_fit(heavy, 1.0).matrix, np.eye(20))

    plan = TrialPlan(N=10, n=20, rho_grid=(0.2, 0.6, 1.0), outer_trials=9, inner_trials=40,
                     block_size=2, seed=5, texture=TextureModel("inverse-gamma"))
    a, b = run_far_sweep(plan, threads=1), run_far_sweep(plan, threads=4)
    checks["thread determinism"] = a.T.tobytes() == b.T.tobytes() and a.sigma2_hat.tobytes() == b.sigma2_hat.tobytes()
    elapsed = time.perf_counter() - start
    ok = all(checks.values()) and elapsed < 60
    criterion(7, ok, ", ".join(f"{k}={'ok' if v else 'BROKEN'}" for k, v in checks.items())
              + f", KS p={ks.pvalue:.3f}, time={elapsed:.1f}s")
    assert ok


def test_criterion_8_small_dimension_full_redraw(criterion):
    plan = TrialPlan(N=20, n=40, rho_grid=(0.2,), gammas=(2.0,), outer_trials=100_000, inner_trials=1,
                     seed=8, block_size=512, solver=SolverConfig(tolerance=1e-8, anderson_depth=5))
    start = time.perf_counter()
    out = run_far_sweep(plan)
    elapsed = time.perf_counter() - start
    row = out.far_curve().at(0.2, 2.0)
    ok = 0.08 <= row["empirical"] <= 0.11 and elapsed <= 180 and not out.failures
    criterion(8, ok, f"trials={int(out.far_curve().trials[0])} FAR(2)={row['empirical']:.5f}+-{row['stderr']:.5f} "
                     f"(theory {row['theory']:.5f}) time={elapsed:.1f}s")
    assert ok

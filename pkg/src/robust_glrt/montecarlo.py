"""Nested Monte Carlo false-alarm experiments.

Each outer trial draws fresh secondary data, fits the robust estimator at
every grid point and records the plug-in variance; each inner trial draws a
fresh H0 observation and evaluates the detector at every grid point. Random
streams are keyed by ``(seed, outer index, stream id)`` and outer trials are
processed in fixed-size blocks, so results do not depend on the number of
worker threads.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .detector import _plugin_sigma2, normalized_samples, plugin_terms
from .estimators import (SolverConfig, check_rho, deterministic_equivalent_S,
                         fit_batch, robust_shrinkage_fit)
from .model import (CovarianceModel, TextureModel, build_toeplitz_ar,
                    circular_gaussian, identity_model, make_rng, sample_dataset,
                    uniform_steering)
from .rmt import rayleigh_pdf, solve_gamma, theory_context

log = logging.getLogger(__name__)

HIST_EDGES = np.round(np.arange(0.0, 5.0 + 1e-9, 0.1), 10)
_DATA_STREAM, _PROBE_STREAM = 0, 1


@dataclass(frozen=True)
class TrialPlan:
    """Experiment description.

    ``gammas`` are thresholds for ``sqrt(N) T_N``; ``Gammas`` are unscaled
    thresholds for ``T_N`` at the selected shrinkage (the ``rho_star`` mode).
    ``inner_trials = 1`` is the full-redraw scheme.
    """

    N: int = 100
    n: int = 200
    covariance: str = "toeplitz"
    ar_coefficient: float = 0.7
    texture: TextureModel = TextureModel()
    rho_grid: tuple = (0.2,)
    gammas: tuple = (2.0, 3.0)
    Gammas: tuple = ()
    outer_trials: int = 200
    inner_trials: int = 500
    seed: int = 0
    solver: SolverConfig = SolverConfig()
    block_size: int = 16
    histogram_rho: Optional[float] = None

    def __post_init__(self):
        if self.N < 1 or self.n < 1:
            raise ValueError("N and n must be positive")
        if self.covariance not in ("toeplitz", "identity"):
            raise ValueError(f"unknown covariance {self.covariance!r}")
        if self.outer_trials < 1 or self.inner_trials < 0:
            raise ValueError("need outer_trials >= 1 and inner_trials >= 0")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if len(self.rho_grid) == 0:
            raise ValueError("rho grid is empty")
        for r in self.rho_grid:
            check_rho(r, self.c)
        if any(g < 0 for g in self.gammas) or any(g < 0 for g in self.Gammas):
            raise ValueError("thresholds must be non-negative")

    @property
    def c(self) -> float:
        return self.N / self.n

    def model(self) -> CovarianceModel:
        if self.covariance == "identity":
            return identity_model(self.N)
        return build_toeplitz_ar(self.ar_coefficient, self.N)

    def steering(self) -> np.ndarray:
        return uniform_steering(self.N)

    def sorted_grid(self) -> np.ndarray:
        return np.sort(np.asarray(self.rho_grid, dtype=float))


def _outer_block(plan: TrialPlan, model: CovarianceModel, p: np.ndarray, outer_ids: Sequence[int]):
    """Process a block of outer trials. Returns per-trial arrays."""
    grid = plan.sorted_grid()
    G, B, N = grid.size, len(outer_ids), plan.N
    X = np.stack([sample_dataset(model, plan.n, plan.texture, plan.seed, key=(o, _DATA_STREAM)).X
                  for o in outer_ids])
    A = model.sqrt()
    Y = []
    for o in outer_ids:
        rng = make_rng(plan.seed, o, _PROBE_STREAM)
        W = circular_gaussian(rng, (N, plan.inner_trials))
        Y.append((A @ W) * np.sqrt(plan.texture.draw(rng, plan.inner_trials)))
    Y = np.stack(Y) if plan.inner_trials else np.zeros((B, N, 0), dtype=complex)

    s2 = np.full((B, G), np.nan)
    rbh = np.full((B, G), np.nan)
    T = np.full((B, G, plan.inner_trials), np.nan)
    ok = np.zeros((B, G), dtype=bool)
    iters = np.zeros((B, G), dtype=int)
    init = None
    for k in range(G - 1, -1, -1):
        rho = grid[k]
        if rho == 1.0:
            C = np.broadcast_to(np.eye(N, dtype=complex), (B, N, N)).copy()
            conv = np.ones(B, dtype=bool)
            Zh = normalized_samples(np.concatenate(list(X), axis=1)).reshape(N, B, plan.n)
            proj = np.einsum("i,ibj->bj", p.conj(), Zh)
            s2[:, k] = 0.5 * np.mean(proj.real ** 2 + proj.imag ** 2, axis=1)
            rbh[:, k] = 1.0
        else:
            C, it, _, conv = fit_batch(X, rho, plan.solver, init)
            iters[:, k] = it
            init = C
            terms = plugin_terms(C, p)
            rbh[:, k] = rho / terms[3]
            s2[:, k], den = _plugin_sigma2(*terms, rbh[:, k], plan.c)
            s2[den <= 0, k] = np.nan
        ok[:, k] = conv
        if plan.inner_trials:
            L = np.linalg.cholesky(C)
            U = np.linalg.solve(L, Y)
            v = np.linalg.solve(L, np.broadcast_to(p[:, None], (B, N, 1)))[..., 0]
            num = np.abs(np.einsum("bi,bij->bj", v.conj(), U))
            den = np.sqrt(np.sum(U.real ** 2 + U.imag ** 2, axis=1)
                          * np.sum(v.real ** 2 + v.imag ** 2, axis=1)[:, None])
            T[:, k, :] = np.minimum(num / den, 1.0)
        s2[~conv, k] = np.nan
        rbh[~conv, k] = np.nan
        T[~conv, k, :] = np.nan
    return s2, rbh, T, ok, iters


@dataclass(frozen=True)
class FarCurve:
    """Empirical vs predicted ``P(sqrt(N) T_N > gamma)`` on a (rho, gamma) grid.

    Array fields have shape ``(len(rho), len(gamma))``.
    """

    rho: np.ndarray
    gamma: np.ndarray
    empirical: np.ndarray
    stderr: np.ndarray
    theory: np.ndarray
    plugin_mean: np.ndarray
    plugin_std: np.ndarray
    trials: np.ndarray

    header = ("rho", "gamma", "empirical", "stderr", "theory", "plugin_mean", "plugin_std")

    def rows(self):
        for i, r in enumerate(self.rho):
            for j, g in enumerate(self.gamma):
                yield (float(r), float(g), float(self.empirical[i, j]), float(self.stderr[i, j]),
                       float(self.theory[i, j]), float(self.plugin_mean[i, j]), float(self.plugin_std[i, j]))

    def at(self, rho: float, gamma: float) -> dict:
        i = int(np.argmin(np.abs(self.rho - rho)))
        j = int(np.argmin(np.abs(self.gamma - gamma)))
        return {"rho": float(self.rho[i]), "gamma": float(self.gamma[j]),
                "empirical": float(self.empirical[i, j]), "stderr": float(self.stderr[i, j]),
                "theory": float(self.theory[i, j]), "plugin_mean": float(self.plugin_mean[i, j]),
                "plugin_std": float(self.plugin_std[i, j])}


def binomial_stderr(p_hat, trials):
    trials = np.maximum(np.asarray(trials, dtype=float), 1.0)
    return np.sqrt(p_hat * (1.0 - p_hat) / trials)


@dataclass
class SweepOutcome:
    plan: TrialPlan
    grid: np.ndarray
    theory_sigma2: np.ndarray
    theory_rho_bar: np.ndarray
    sigma2_hat: np.ndarray        # (outer, grid)
    rho_bar_hat: np.ndarray       # (outer, grid)
    T: np.ndarray                 # (outer, grid, inner)
    converged: np.ndarray         # (outer, grid)
    iterations: np.ndarray        # (outer, grid)
    failures: list = field(default_factory=list)

    @property
    def scaled(self) -> np.ndarray:
        return np.sqrt(self.plan.N) * self.T

    def rho_star_index(self) -> np.ndarray:
        """Per outer trial, grid index of the plug-in variance minimizer (-1 if none)."""
        s2 = np.where(np.isnan(self.sigma2_hat), np.inf, self.sigma2_hat)
        idx = np.argmin(s2, axis=1)
        idx[np.all(np.isinf(s2), axis=1)] = -1
        return idx

    def far_curve(self, gammas: Optional[Sequence[float]] = None) -> FarCurve:
        g = np.asarray(self.plan.gammas if gammas is None else gammas, dtype=float)
        S = self.scaled
        valid = ~np.isnan(S)
        trials = valid.sum(axis=(0, 2))
        exceed = np.stack([np.sum((S > gg) & valid, axis=(0, 2)) for gg in g], axis=1)
        emp = exceed / np.maximum(trials, 1)[:, None]
        plug = np.exp(-g[None, None, :] ** 2 / (2.0 * self.sigma2_hat[:, :, None]))
        return FarCurve(rho=self.grid, gamma=g, empirical=emp,
                        stderr=binomial_stderr(emp, trials[:, None]),
                        theory=np.exp(-g[None, :] ** 2 / (2.0 * self.theory_sigma2[:, None])),
                        plugin_mean=np.nanmean(plug, axis=0), plugin_std=np.nanstd(plug, axis=0),
                        trials=trials)

    def rho_star_far(self, Gammas: Optional[Sequence[float]] = None, scaled: bool = False) -> dict:
        """Detector exceedance at each trial's selected shrinkage.

        With ``scaled=False`` thresholds apply to ``T_N`` itself and the
        approximation is ``exp(-N Gamma^2 / (2 sigma2_hat))``; otherwise they
        apply to ``sqrt(N) T_N``.
        """
        G = np.asarray(self.plan.Gammas if Gammas is None else Gammas, dtype=float)
        idx = self.rho_star_index()
        keep = idx >= 0
        rows = np.arange(idx.size)[keep]
        T = self.T[rows, idx[keep], :]
        s2 = self.sigma2_hat[rows, idx[keep]]
        stat = np.sqrt(self.plan.N) * T if scaled else T
        factor = 1.0 if scaled else float(self.plan.N)
        emp = np.array([np.mean(stat > g) for g in G])
        approx = np.array([np.mean(np.exp(-factor * g ** 2 / (2.0 * s2))) for g in G])
        return {"threshold": G, "empirical": emp, "stderr": binomial_stderr(emp, T.size),
                "approximation": approx, "rho_star": self.grid[idx[keep]]}


def _theory_arrays(plan: TrialPlan, model: CovarianceModel, p: np.ndarray, grid: np.ndarray):
    s2 = np.empty(grid.size)
    rb = np.empty(grid.size)
    for k, rho in enumerate(grid):
        ctx = theory_context(model, p, rho, plan.c)
        s2[k], rb[k] = ctx.sigma2, ctx.rho_bar
    return s2, rb


def run_far_sweep(plan: TrialPlan, threads: int = 1) -> SweepOutcome:
    """Run the nested experiment. Identical output for any ``threads``."""
    model, p = plan.model(), plan.steering()
    grid = plan.sorted_grid()
    ids = np.arange(plan.outer_trials)
    blocks = [ids[i:i + plan.block_size] for i in range(0, ids.size, plan.block_size)]
    work = lambda blk: _outer_block(plan, model, p, blk)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    s2, rbh, T, ok, iters = (np.concatenate([part[i] for part in parts]) for i in range(5))
    failures = [(int(o), float(grid[k])) for o, k in zip(*np.nonzero(~ok))]
    if failures:
        log.warning("%d fits did not converge", len(failures))
    th_s2, th_rb = _theory_arrays(plan, model, p, grid)
    return SweepOutcome(plan=plan, grid=grid, theory_sigma2=th_s2, theory_rho_bar=th_rb,
                        sigma2_hat=s2, rho_bar_hat=rbh, T=T, converged=ok, iterations=iters,
                        failures=failures)


@dataclass(frozen=True)
class FitDiagnostics:
    ks: float
    pvalue: float
    bin_left: np.ndarray
    density: np.ndarray
    rayleigh_density: np.ndarray
    cdf_points: np.ndarray
    cdf_empirical: np.ndarray
    cdf_rayleigh: np.ndarray


def ks_distance_vs_rayleigh(samples, sigma: float) -> FitDiagnostics:
    """One-sample Kolmogorov-Smirnov fit of ``samples`` to Rayleigh(``sigma``),
    i.e. CDF ``1 - exp(-t^2 / (2 sigma^2))``, plus a width-0.1 histogram on
    ``[0, 5]``."""
    x = np.asarray(samples, dtype=float).ravel()
    x = x[~np.isnan(x)]
    if x.size < 100:
        raise ValueError(f"need at least 100 samples, got {x.size}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    res = stats.kstest(x, stats.rayleigh(scale=sigma).cdf, method="exact" if x.size <= 10000 else "auto")
    counts, edges = np.histogram(x, bins=HIST_EDGES)
    width = np.diff(edges)
    density = counts / (x.size * width)
    centers = edges[:-1] + width / 2
    q = np.linspace(0.0, 1.0, 101)
    pts = np.quantile(x, q)
    return FitDiagnostics(ks=float(res.statistic), pvalue=float(res.pvalue), bin_left=edges[:-1],
                          density=density, rayleigh_density=rayleigh_pdf(centers, sigma ** 2),
                          cdf_points=pts, cdf_empirical=q,
                          cdf_rayleigh=-np.expm1(-pts ** 2 / (2 * sigma ** 2)))


def _bilinear_power(M: np.ndarray, k: int, a: np.ndarray, b: np.ndarray) -> complex:
    lam, U = np.linalg.eigh(M)
    return complex((a.conj() @ U) @ ((lam ** k) * (U.conj().T @ b)))


@dataclass(frozen=True)
class RateReport:
    sizes: np.ndarray
    norm_gap: np.ndarray                  # median over seeds, per N
    bilinear_gap: dict                    # k -> median per N
    norm_slope: float
    bilinear_slope: dict                  # k -> fitted log-log slope
    raw_norm: np.ndarray                  # (len(sizes), seeds)
    raw_bilinear: dict                    # k -> (len(sizes), seeds)


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.any(y <= 0):
        return 0.0 if np.all(y == 0) else float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def convergence_probe(sizes: Sequence[int], rho: float, seeds: Sequence[int], c: float = 0.5,
                      ar_coefficient: float = 0.7, powers: Sequence[int] = (-2, -1, 1, 2),
                      texture: TextureModel = TextureModel(),
                      solver: SolverConfig = SolverConfig()) -> RateReport:
    """Median gaps between the robust estimator and its deterministic
    equivalent, in spectral norm and along the uniform steering vector."""
    sizes = np.asarray(sizes, dtype=int)
    seeds = list(seeds)
    raw_norm = np.zeros((sizes.size, len(seeds)))
    raw_bil = {k: np.zeros((sizes.size, len(seeds))) for k in powers}
    for i, N in enumerate(sizes):
        n = int(round(N / c))
        model = build_toeplitz_ar(ar_coefficient, int(N))
        p = uniform_steering(int(N))
        cN = N / n
        check_rho(rho, cN)
        gam = solve_gamma(model, rho)
        for j, s in enumerate(seeds):
            data = sample_dataset(model, n, texture, seed=s, key=(int(N),))
            C_hat = robust_shrinkage_fit(data, rho, solver).matrix
            S_hat = deterministic_equivalent_S(data, gam, rho, cN)
            raw_norm[i, j] = np.linalg.norm(C_hat - S_hat, 2)
            for k in powers:
                raw_bil[k][i, j] = abs(_bilinear_power(C_hat, k, p, p) - _bilinear_power(S_hat, k, p, p))
    norm_med = np.median(raw_norm, axis=1)
    bil_med = {k: np.median(v, axis=1) for k, v in raw_bil.items()}
    return RateReport(sizes=sizes, norm_gap=norm_med, bilinear_gap=bil_med,
                      norm_slope=loglog_slope(sizes, norm_med),
                      bilinear_slope={k: loglog_slope(sizes, v) for k, v in bil_med.items()},
                      raw_norm=raw_norm, raw_bilinear=raw_bil)


@dataclass(frozen=True)
class EstimatorErrorReport:
    rho: np.ndarray
    sigma2_theory: np.ndarray
    sigma2_mean: np.ndarray
    sigma2_std: np.ndarray
    median_rel_error: np.ndarray
    gammas: np.ndarray
    plugin_far_mean: np.ndarray     # (rho, gamma)
    plugin_far_std: np.ndarray


def estimator_error_sweep(plan_or_outcome, threads: int = 1) -> EstimatorErrorReport:
    """Spread of the plug-in variance across secondary-data draws, compared
    with the limiting value. A plan is run without detector draws."""
    if isinstance(plan_or_outcome, TrialPlan):
        out = run_far_sweep(replace(plan_or_outcome, inner_trials=0), threads=threads)
    else:
        out = plan_or_outcome
    s2 = out.sigma2_hat
    g = np.asarray(out.plan.gammas, dtype=float)
    rel = np.abs(s2 - out.theory_sigma2[None, :]) / out.theory_sigma2[None, :]
    far = np.exp(-g[None, None, :] ** 2 / (2.0 * s2[:, :, None]))
    return EstimatorErrorReport(rho=out.grid, sigma2_theory=out.theory_sigma2,
                                sigma2_mean=np.nanmean(s2, axis=0), sigma2_std=np.nanstd(s2, axis=0),
                                median_rel_error=np.nanmedian(rel, axis=0), gammas=g,
                                plugin_far_mean=np.nanmean(far, axis=0),
                                plugin_far_std=np.nanstd(far, axis=0))


def histogram_rows(diag: FitDiagnostics):
    return [(float(b), float(d), float(r)) for b, d, r in zip(diag.bin_left, diag.density, diag.rayleigh_density)]


def rates_rows(report: RateReport, powers=(-2, -1, 1, 2)):
    header = ["N", "norm_gap"] + [f"bilinear_gap_k{k}" for k in powers]
    rows = [[int(N), float(report.norm_gap[i])] + [float(report.bilinear_gap[k][i]) for k in powers]
            for i, N in enumerate(report.sizes)]
    return header, rows


def gnuplot_script(far_csv: str = "far_curve.csv", hist_csv: str = "histogram.csv",
                   rates_csv: Optional[str] = "rates.csv") -> str:
    """Self-contained gnuplot script plotting the validation CSVs."""
    lines = [
        "# gnuplot script generated by robust_glrt",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 1200,400",
        "set output 'validation.png'",
        "set multiplot layout 1,3",
        "set title 'False alarm rate'",
        "set xlabel 'rho'; set logscale y",
        f"plot '{far_csv}' using 1:5 with lines title 'theory', \\",
        f"     '{far_csv}' using 1:6:7 with yerrorbars title 'plug-in', \\",
        f"     '{far_csv}' using 1:3 with points pt 7 title 'detector'",
        "unset logscale y",
        "set title 'sqrt(N) T_N histogram'",
        "set xlabel 't'",
        f"plot '{hist_csv}' using ($1+0.05):2 with boxes title 'empirical', \\",
        f"     '{hist_csv}' using ($1+0.05):3 with lines title 'Rayleigh'",
    ]
    if rates_csv:
        lines += [
            "set title 'Estimator vs deterministic equivalent'",
            "set xlabel 'N'; set logscale xy",
            f"plot '{rates_csv}' using 1:2 with linespoints title 'norm gap', \\",
            f"     '{rates_csv}' using 1:4 with linespoints title 'bilinear gap k=-1'",
        ]
    lines += ["unset multiplot", ""]
    return "\n".join(lines)


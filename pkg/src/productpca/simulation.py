"""Spiked-model simulation harness and Monte Carlo asymptotics.

A study draws a fresh spiked covariance model per replicate, samples a
(possibly outlier-contaminated) multivariate-t dataset from it, fits the
requested estimators once at the largest requested rank, and scores signal
recovery with the mean-cosine subspace score xi_q over a grid of retained
ranks q.  Replicate i of a study seeded with s uses its own generator
default_rng([s, i]), so results are bit-reproducible and independent of
execution order.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, ProductPcaError, StudyIncomplete
from .estimators import SpectrumEstimate, pca_fit, ppca_fit, cdm_pca_fit, random_split
from .linalg import orthonormal_basis, psd_sqrt, subspace_similarity
from .population import SpectralModel, asymptotic_cov_gaussian, covariance_of

METHODS = ("pca", "ppca", "cdmpca")

# Aggregates are refused when fewer than this fraction of replicates
# succeeded for some method.
MIN_SUCCESS_FRACTION = 0.8


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    """Study settings.  Defaults are desk-scale (seconds, not minutes).

    q_grid=None means r..min(r + 35, p, n - 1).  nu is the t degrees of
    freedom for the clean component (use something huge like 1e6 as a
    Gaussian proxy), pi the outlier probability per row.
    """

    n: int = 200
    p: int = 100
    r: int = 5
    nu: float = 5.0
    pi: float = 0.0
    replicates: int = 100
    seed: int = 0
    methods: tuple = ("pca", "ppca")
    q_grid: tuple | None = None

    def __post_init__(self):
        if self.n < 4 or self.p < 2:
            raise InvalidInput("need n >= 4 and p >= 2")
        if not 1 <= self.r < self.p:
            raise InvalidInput("need 1 <= r < p")
        if not self.nu > 2.0:
            raise InvalidInput("nu must exceed 2")
        if not 0.0 <= self.pi < 1.0:
            raise InvalidInput("pi must lie in [0, 1)")
        if self.replicates < 1:
            raise InvalidInput("replicates must be positive")
        if not isinstance(self.seed, int):
            raise InvalidInput("seed must be an integer")
        methods = tuple(self.methods)
        if not methods or any(m not in METHODS for m in methods):
            raise InvalidInput(f"methods must be a nonempty subset of {METHODS}")
        if len(set(methods)) != len(methods):
            raise InvalidInput("methods must not repeat")
        object.__setattr__(self, "methods", methods)
        if self.q_grid is None:
            grid = tuple(range(self.r, min(self.r + 35, self.p, self.n - 1) + 1))
        else:
            grid = tuple(int(q) for q in self.q_grid)
            if list(grid) != sorted(set(grid)):
                raise InvalidInput("q_grid must be strictly increasing")
            if grid[0] < self.r:
                raise InvalidInput("q_grid entries must be >= r")
            if grid[-1] > min(self.n - 1, self.p):
                raise InvalidInput("q_grid entries must be <= min(n - 1, p)")
        object.__setattr__(self, "q_grid", grid)


def gen_spiked_model(p: int, n: int, r: int, rng=None) -> SpectralModel:
    """Random spiked model: signal eigenvalues 1 + sqrt(p/n) + p^(1/(1+j))
    for j = 1..r, noise eigenvalues U(0.5, 1.5), Haar eigenvectors.

    Draw order is fixed (noise, then the Gaussian matrix behind the Haar
    basis) so a given generator state determines the model.  The combined
    spectrum is sorted descending; for the intended regimes the signal
    block already clears the noise ceiling 1.5.
    """
    if not 1 <= r < p or n < 1:
        raise InvalidInput("need 1 <= r < p and n >= 1")
    rng = np.random.default_rng(rng)
    signal = np.array([1.0 + np.sqrt(p / n) + p ** (1.0 / (1.0 + j)) for j in range(1, r + 1)])
    noise = rng.uniform(0.5, 1.5, p - r)
    lam = np.sort(np.concatenate([signal, noise]))[::-1]
    z = rng.standard_normal((p, p))
    q, rr = np.linalg.qr(z)
    q = q * np.sign(np.diag(rr))
    return SpectralModel(eigenvalues=lam, eigenvectors=q, r=r)


def sample_mvt(count: int, mean, cov, df: float, rng=None) -> np.ndarray:
    """Multivariate t draws with exact covariance `cov` (df > 2 required).

    The scale matrix is ((df - 2)/df) cov, so E[X X^T] - mu mu^T equals cov
    for every df.  Huge df approximates a Gaussian.
    """
    if count < 0:
        raise InvalidInput("count must be nonnegative")
    if not df > 2.0:
        raise InvalidInput("df must exceed 2 so the covariance exists")
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidInput("cov must be square")
    p = cov.shape[0]
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (p,))
    rng = np.random.default_rng(rng)
    root = psd_sqrt((df - 2.0) / df * cov)
    z = rng.standard_normal((count, p))
    chi = rng.chisquare(df, count)
    return mean + (z @ root.T) * np.sqrt(df / chi)[:, None]


def sample_mixture(config: SimulationConfig, model: SpectralModel, rng=None) -> np.ndarray:
    """One dataset: clean t_nu(0, Sigma) rows, outlier rows t_3(mu_out, 50 I).

    mu_out is drawn once per dataset, uniformly on the radius-50 sphere.
    Draw order: mu_out (only when pi > 0), outlier mask, clean block,
    outlier block.
    """
    rng = np.random.default_rng(rng)
    p = model.p
    if p != config.p:
        raise InvalidInput("model dimension does not match config")
    sigma = covariance_of(model)
    if config.pi > 0.0:
        z = rng.standard_normal(p)
        mu_out = 50.0 * z / np.linalg.norm(z)
        mask = rng.random(config.n) < config.pi
    else:
        mu_out = None
        mask = np.zeros(config.n, dtype=bool)
    count_out = int(mask.sum())
    clean = sample_mvt(config.n - count_out, 0.0, sigma, config.nu, rng)
    data = np.empty((config.n, p))
    data[~mask] = clean
    if count_out:
        data[mask] = sample_mvt(count_out, mu_out, 50.0 * np.eye(p), 3.0, rng)
    return data


@dataclass(frozen=True, eq=False)
class TrialResult:
    """xi curves per method for one replicate; failed methods carry an
    error message instead of a curve."""

    xi: dict
    failures: dict


def _xi_curve(estimate: SpectrumEstimate, q_grid, gamma_r: np.ndarray) -> np.ndarray:
    out = np.empty(len(q_grid))
    for i, q in enumerate(q_grid):
        basis = orthonormal_basis(estimate.eigenvectors[:, :q])
        out[i] = subspace_similarity(basis, gamma_r)
    return out


def run_trial(config: SimulationConfig, model: SpectralModel, rng=None) -> TrialResult:
    """Sample one dataset and score every requested method on it.

    The split-based methods share a single random split so their spectra
    are comparable replicate by replicate.  Estimator errors are caught per
    method and reported in `failures` rather than aborting the trial.
    """
    rng = np.random.default_rng(rng)
    data = sample_mixture(config, model, rng)
    qmax = config.q_grid[-1]
    gamma_r = model.eigenvectors[:, : model.r]
    split = None
    if any(m in config.methods for m in ("ppca", "cdmpca")):
        split = random_split(data, rng)
    xi: dict = {}
    failures: dict = {}
    for method in config.methods:
        try:
            if method == "pca":
                est = pca_fit(data, qmax)
            elif method == "ppca":
                est = ppca_fit(data, qmax, split=split)
            else:
                est = cdm_pca_fit(data, qmax, split=split)
            xi[method] = _xi_curve(est, config.q_grid, gamma_r)
        except ProductPcaError as exc:
            failures[method] = f"{type(exc).__name__}: {exc}"
    return TrialResult(xi=xi, failures=failures)


@dataclass(frozen=True, eq=False)
class XiCurve:
    """Aggregated xi over successful replicates of one method."""

    method: str
    q_grid: tuple
    mean: np.ndarray
    sd: np.ndarray
    replicates: int


@dataclass(frozen=True, eq=False)
class StudyResult:
    config: SimulationConfig
    curves: list
    trials: list
    failures: list


def _replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _one_replicate(config: SimulationConfig, index: int) -> TrialResult:
    rng = _replicate_rng(config.seed, index)
    model = gen_spiked_model(config.p, config.n, config.r, rng)
    return run_trial(config, model, rng)


def run_study(config: SimulationConfig, threads: int = 1) -> StudyResult:
    """Run all replicates and aggregate mean/sd xi per method and q.

    `threads` > 1 shards replicates across a thread pool (the heavy kernels
    release the GIL); results are merged by replicate index so the output
    does not depend on scheduling.  Raises StudyIncomplete when any method
    succeeds on fewer than 80% of replicates.
    """
    if threads < 1:
        raise InvalidInput("threads must be positive")
    indices = range(config.replicates)
    if threads == 1:
        trials = [_one_replicate(config, i) for i in indices]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            trials = list(pool.map(lambda i: _one_replicate(config, i), indices))
    failures = [
        (i, method, msg)
        for i, trial in enumerate(trials)
        for method, msg in sorted(trial.failures.items())
    ]
    curves = []
    for method in config.methods:
        rows = [t.xi[method] for t in trials if method in t.xi]
        if len(rows) < MIN_SUCCESS_FRACTION * config.replicates:
            raise StudyIncomplete(
                f"method {method}: only {len(rows)} of {config.replicates} "
                f"replicates succeeded"
            )
        stack = np.vstack(rows)
        sd = stack.std(axis=0, ddof=1) if len(rows) > 1 else np.zeros(stack.shape[1])
        curves.append(
            XiCurve(
                method=method,
                q_grid=config.q_grid,
                mean=stack.mean(axis=0),
                sd=sd,
                replicates=len(rows),
            )
        )
    return StudyResult(config=config, curves=curves, trials=trials, failures=failures)


def _fmt(x) -> str:
    return format(float(x), ".12g")


def study_csv(study: StudyResult) -> str:
    """Aggregate table, one row per (method, q), 12 significant digits."""
    cfg = study.config
    lines = ["method,q,mean_xi,sd_xi,replicates,n,p,r,nu,pi,seed"]
    for curve in study.curves:
        for i, q in enumerate(curve.q_grid):
            lines.append(
                ",".join(
                    [
                        curve.method,
                        str(q),
                        _fmt(curve.mean[i]),
                        _fmt(curve.sd[i]),
                        str(curve.replicates),
                        str(cfg.n),
                        str(cfg.p),
                        str(cfg.r),
                        _fmt(cfg.nu),
                        _fmt(cfg.pi),
                        str(cfg.seed),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def study_raw_csv(study: StudyResult) -> str:
    """Per-replicate table: replicate,method,q,xi for every success."""
    lines = ["replicate,method,q,xi"]
    for i, trial in enumerate(study.trials):
        for method in study.config.methods:
            if method not in trial.xi:
                continue
            for j, q in enumerate(study.config.q_grid):
                lines.append(f"{i},{method},{q},{_fmt(trial.xi[method][j])}")
    return "\n".join(lines) + "\n"


_SVG_COLORS = {"pca": "#1f77b4", "ppca": "#d62728", "cdmpca": "#2ca02c"}


def xi_curves_svg(study: StudyResult) -> str:
    """Deterministic standalone SVG of the mean xi curves (y in [0, 1])."""
    cfg = study.config
    width, height = 640, 420
    left, right, top, bottom = 60, 20, 40, 50
    plot_w, plot_h = width - left - right, height - top - bottom
    q_lo, q_hi = cfg.q_grid[0], cfg.q_grid[-1]
    span = max(q_hi - q_lo, 1)

    def sx(q):
        return left + plot_w * (q - q_lo) / span

    def sy(v):
        return top + plot_h * (1.0 - v)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="24" font-family="sans-serif" font-size="14">'
        f"mean subspace score vs retained rank "
        f"(n={cfg.n}, p={cfg.p}, r={cfg.r}, nu={_fmt(cfg.nu)}, pi={_fmt(cfg.pi)})</text>",
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(frac)
        parts.append(
            f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" font-family="sans-serif" '
            f'font-size="11" text-anchor="end">{frac:g}</text>'
        )
    ticks = sorted(set([q_lo, (q_lo + q_hi) // 2, q_hi]))
    for q in ticks:
        x = sx(q)
        parts.append(
            f'<line x1="{x:.2f}" y1="{top + plot_h}" x2="{x:.2f}" '
            f'y2="{top + plot_h + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{top + plot_h + 18}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle">{q}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.2f}" y="{height - 12}" font-family="sans-serif" '
        f'font-size="12" text-anchor="middle">q</text>'
    )
    for idx, curve in enumerate(study.curves):
        color = _SVG_COLORS.get(curve.method, "#555555")
        pts = " ".join(
            f"{sx(q):.2f},{sy(v):.2f}" for q, v in zip(curve.q_grid, curve.mean)
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = top + 16 + 16 * idx
        parts.append(
            f'<line x1="{left + plot_w - 90}" y1="{ly - 4}" x2="{left + plot_w - 66}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{left + plot_w - 60}" y="{ly}" font-family="sans-serif" '
            f'font-size="12">{curve.method}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@dataclass(frozen=True, eq=False)
class AsymptoticsEntry:
    """Empirical sqrt(n)-scaled moments for one sample size."""

    n: int
    mean_pca: np.ndarray
    mean_ppca: np.ndarray
    cov_pca: np.ndarray
    cov_ppca: np.ndarray


@dataclass(frozen=True, eq=False)
class AsymptoticsReport:
    theory: np.ndarray
    entries: list
    replicates: int
    seed: int


def monte_carlo_asymptotics(
    n_list, model: SpectralModel, replicates: int, seed: int = 0
) -> AsymptoticsReport:
    """Empirical covariance of sqrt(n)(beta_hat - beta) for plain PCA and
    the split-product estimator on Gaussian data, against the closed form.

    beta stacks eigenvalues then vec(Gamma); estimated eigenvectors are
    sign-aligned to the model before differencing.  Needs n > p for the
    full-rank fits and at least two replicates.
    """
    n_list = [int(n) for n in n_list]
    if not n_list:
        raise InvalidInput("n_list must be nonempty")
    if replicates < 2:
        raise InvalidInput("need at least 2 replicates")
    p = model.p
    if any(n <= p or n < 4 for n in n_list):
        raise InvalidInput("every n must exceed p (and be >= 4)")
    theory = asymptotic_cov_gaussian(model)
    root = psd_sqrt(covariance_of(model))
    beta = np.concatenate([model.eigenvalues, model.eigenvectors.ravel(order="F")])
    entries = []
    for n in n_list:
        devs: dict = {"pca": [], "ppca": []}
        for i in range(replicates):
            rng = np.random.default_rng([seed, n, i])
            data = rng.standard_normal((n, p)) @ root.T
            split = random_split(data, rng)
            for method, est in (
                ("pca", pca_fit(data, p)),
                ("ppca", ppca_fit(data, p, split=split)),
            ):
                vectors = est.eigenvectors.copy()
                flip = np.einsum("ij,ij->j", model.eigenvectors, vectors) < 0.0
                vectors[:, flip] *= -1.0
                beta_hat = np.concatenate([est.eigenvalues, vectors.ravel(order="F")])
                devs[method].append(np.sqrt(n) * (beta_hat - beta))
        stacks = {m: np.vstack(v) for m, v in devs.items()}
        entries.append(
            AsymptoticsEntry(
                n=n,
                mean_pca=stacks["pca"].mean(axis=0),
                mean_ppca=stacks["ppca"].mean(axis=0),
                cov_pca=np.cov(stacks["pca"], rowvar=False, ddof=1),
                cov_ppca=np.cov(stacks["ppca"], rowvar=False, ddof=1),
            )
        )
    return AsymptoticsReport(theory=theory, entries=entries, replicates=replicates, seed=seed)

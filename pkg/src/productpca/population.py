"""Population-level perturbation analysis of eigenvalue-ratio ordering.

Everything here works on an exact spectral model Sigma = Gamma Lambda Gamma^T
with a designated signal rank r, no data involved.  The central objects:

  rho_jk = lambda_j / (lambda_j + lambda_k), the pairwise ordering score for
      a signal index j <= r against a noise index k > r;
  the point-mass perturbation of the second moment,
      (1 - eps) Sigma + eps x x^T,
  applied once (plain PCA sees F_eps) or doubled on a single factor of the
      split-product functional (product PCA sees F_{2 eps} on one half);
  tau_jk, the second-order gap between the product-split and plain perturbed
      scores, normalized by eta_jk = rho_jk (1 - rho_jk);
  Delta and Delta', the two nonneg-leaning aggregates whose sum gives the
      averaged tau closed form.

Numeric quantities recompute everything from eigendecompositions of the
perturbed matrices; theory quantities evaluate closed forms.  Tests compare
the two, so neither side is allowed to peek at the other.

Indices j and k are 1-based throughout (j = 1 names the leading eigenvalue),
matching how the report files label components.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import IndexMatchFailure, InvalidInput, TieError
from .estimators import _integrate_columns
from .linalg import SpectralDecomposition, psd_sqrt, svd_desc, sym_eig, symmetrize

# Adjacent eigenvalue gaps at or below GAP_TOL * lambda_1 count as ties for
# the operations that need simple eigenvalues.
GAP_TOL = 1e-12

# Matched |cos| below this after index matching means the perturbed component
# can no longer be attributed to its reference index.
MATCH_TOL = 0.5


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Exact covariance spectrum: eigenvalues (descending, positive),
    orthonormal eigenvectors, and the signal rank r with 1 <= r < p.

    Ties are allowed at construction; operations whose formulas need
    distinct eigenvalues check separately and raise TieError.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    r: int

    def __post_init__(self):
        w = np.asarray(self.eigenvalues, dtype=float)
        g = np.asarray(self.eigenvectors, dtype=float)
        object.__setattr__(self, "eigenvalues", w)
        object.__setattr__(self, "eigenvectors", g)
        if w.ndim != 1 or g.shape != (w.size, w.size):
            raise InvalidInput("need p eigenvalues and a p x p eigenvector matrix")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(g)):
            raise InvalidInput("model contains non-finite entries")
        if np.any(w <= 0.0):
            raise InvalidInput("eigenvalues must be strictly positive")
        if np.any(np.diff(w) > 0.0):
            raise InvalidInput("eigenvalues must be non-increasing")
        if np.linalg.norm(g.T @ g - np.eye(w.size)) > 1e-10:
            raise InvalidInput("eigenvectors must be orthonormal")
        if not 1 <= self.r < w.size:
            raise InvalidInput(f"signal rank must satisfy 1 <= r < p, got {self.r}")

    @property
    def p(self) -> int:
        return self.eigenvalues.size


def require_distinct(model: SpectralModel) -> None:
    """Raise TieError unless all adjacent gaps exceed GAP_TOL * lambda_1."""
    w = model.eigenvalues
    gaps = w[:-1] - w[1:]
    if np.any(gaps <= GAP_TOL * w[0]):
        raise TieError("eigenvalue gap below tolerance; quantity undefined")


@dataclass(frozen=True, eq=False)
class PerturbationScenario:
    """A model plus a point-mass direction x and a contamination weight eps.

    eps is capped below 0.25 so that the doubled weight 2*eps also leaves a
    proper convex combination.
    """

    model: SpectralModel
    x: np.ndarray
    eps: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if x.shape != (self.model.p,):
            raise InvalidInput(f"x must have shape ({self.model.p},)")
        if not np.all(np.isfinite(x)) or not np.any(x != 0.0):
            raise InvalidInput("x must be finite and nonzero")
        if not 0.0 < self.eps < 0.25:
            raise InvalidInput("eps must lie in (0, 0.25)")


@dataclass(frozen=True)
class TheoryReport:
    """One numeric-vs-closed-form comparison row."""

    quantity: str
    eps: float
    numeric: float
    theory: float
    j: int | None = None
    k: int | None = None

    @property
    def abs_gap(self) -> float:
        return abs(self.numeric - self.theory)

    @property
    def rel_gap(self) -> float:
        scale = max(abs(self.numeric), abs(self.theory))
        return self.abs_gap / scale if scale > 0.0 else 0.0


def covariance_of(model: SpectralModel) -> np.ndarray:
    """Gamma diag(lambda) Gamma^T, exactly symmetrized."""
    g = model.eigenvectors
    return symmetrize((g * model.eigenvalues) @ g.T)


def perturbed_second_moment(sigma, x, eps: float) -> np.ndarray:
    """(1 - eps) Sigma + eps x x^T for 0 <= eps < 1.

    This is the mixture second moment: the exact covariance when the
    contaminating component is mean-zero with second moment x x^T (the
    two-point flip construction uses it this way).  For an atom at x use
    perturbed_covariance, which subtracts the induced mean shift.
    """
    sigma = symmetrize(sigma)
    x = np.asarray(x, dtype=float)
    if x.shape != (sigma.shape[0],):
        raise InvalidInput("x length must match Sigma")
    if not 0.0 <= eps < 1.0:
        raise InvalidInput("eps must lie in [0, 1)")
    return symmetrize((1.0 - eps) * sigma + eps * np.outer(x, x))


def perturbed_covariance(sigma, x, eps: float) -> np.ndarray:
    """Covariance of (1 - eps) F + eps * atom(x) when F has mean zero and
    covariance Sigma:

        (1 - eps) Sigma + eps (1 - eps) x x^T.

    The atom shifts the mixture mean to eps x; the eps^2 correction from
    subtracting it is exactly what the second-order ordering results see,
    so every tau/alignment numeric goes through this form.
    """
    sigma = symmetrize(sigma)
    x = np.asarray(x, dtype=float)
    if x.shape != (sigma.shape[0],):
        raise InvalidInput("x length must match Sigma")
    if not 0.0 <= eps < 1.0:
        raise InvalidInput("eps must lie in [0, 1)")
    return symmetrize((1.0 - eps) * sigma + eps * (1.0 - eps) * np.outer(x, x))


def pca_functional(sigma, reference: np.ndarray | None = None) -> SpectralDecomposition:
    """Population PCA: eigendecomposition of a symmetric second moment.

    With `reference` (p x p), each eigenvector is flipped to nonnegative
    inner product with the same-position reference column instead of the
    default largest-entry convention.
    """
    dec = sym_eig(sigma)
    if reference is None:
        return dec
    reference = np.asarray(reference, dtype=float)
    if reference.shape != dec.eigenvectors.shape:
        raise InvalidInput("reference must be p x p")
    v = dec.eigenvectors.copy()
    flip = np.einsum("ij,ij->j", reference, v) < 0.0
    v[:, flip] *= -1.0
    return SpectralDecomposition(dec.eigenvalues, v)


@dataclass(frozen=True, eq=False)
class PpcaFunctional:
    """Population split-product functional: SVD of S1^(1/2) S2^(1/2) plus
    the integrated eigenvector estimate for each singular pair."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    integrated: np.ndarray
    degenerate: np.ndarray


def ppca_functional(sigma1, sigma2) -> PpcaFunctional:
    """Evaluate the product functional on two PSD second moments."""
    r1 = psd_sqrt(sigma1)
    r2 = psd_sqrt(sigma2)
    if r1.shape != r2.shape:
        raise InvalidInput("second moments must share a dimension")
    res = svd_desc(r1 @ r2)
    integrated, degenerate = _integrate_columns(res.left, res.right)
    return PpcaFunctional(
        left=res.left,
        singular_values=res.singular_values,
        right=res.right,
        integrated=integrated,
        degenerate=degenerate,
    )


def rho(lambda_j: float, lambda_k: float) -> float:
    """Ordering score lambda_j / (lambda_j + lambda_k) for lambda_j > lambda_k > 0."""
    if not lambda_k > 0.0:
        raise InvalidInput("lambda_k must be positive")
    if not lambda_j > lambda_k:
        raise InvalidInput("need lambda_j > lambda_k")
    return lambda_j / (lambda_j + lambda_k)


def _check_pair(model: SpectralModel, j: int, k: int) -> None:
    if not (1 <= j <= model.r < k <= model.p):
        raise InvalidInput(
            f"need 1 <= j <= r < k <= p with r={model.r}, p={model.p}; got j={j}, k={k}"
        )


def _match_columns(reference: np.ndarray, vectors: np.ndarray):
    """Match estimate columns to reference columns by |cos|.

    Greedy row-argmax first; if that is not a bijection, fall back to a
    globally optimal assignment.  Returns (mapping, matched |cos| per row).
    """
    corr = np.abs(reference.T @ vectors)
    mapping = corr.argmax(axis=1)
    if np.unique(mapping).size != corr.shape[0]:
        rows, cols = linear_sum_assignment(-corr)
        mapping = np.empty(corr.shape[0], dtype=int)
        mapping[rows] = cols
    quality = corr[np.arange(corr.shape[0]), mapping]
    return mapping, quality


def _matched_eigenvalues(scenario: PerturbationScenario, split_product: bool):
    """Perturbed eigenvalues re-indexed to the model's component order.

    split_product=False perturbs the second moment by eps and
    eigendecomposes; split_product=True perturbs one factor of the product
    functional by 2*eps and takes singular values.  Matching uses
    |eigenvector cos| against Gamma (the integrated vectors on the product
    side).  Callers decide which quality entries to enforce.
    """
    model, x, eps = scenario.model, scenario.x, scenario.eps
    sigma = covariance_of(model)
    if split_product:
        func = ppca_functional(perturbed_covariance(sigma, x, 2.0 * eps), sigma)
        values, vectors = func.singular_values, func.integrated
    else:
        dec = pca_functional(perturbed_covariance(sigma, x, eps))
        values, vectors = dec.eigenvalues, dec.eigenvectors
    mapping, quality = _match_columns(model.eigenvectors, vectors)
    return values[mapping], quality


def _matched_value(scenario, index: int, split_product: bool) -> tuple[float, float]:
    values, quality = _matched_eigenvalues(scenario, split_product)
    if quality[index - 1] < MATCH_TOL:
        raise IndexMatchFailure(
            f"component {index}: matched |cos| {quality[index - 1]:.3g} below "
            f"{MATCH_TOL}; perturbation too large to track indices"
        )
    return float(values[index - 1]), float(quality[index - 1])


def perturbed_rho_pca(scenario: PerturbationScenario, j: int, k: int) -> float:
    """rho on eigenvalues j, k of the eps-perturbed second moment,
    matched back to the model's indices by eigenvector correlation."""
    _check_pair(scenario.model, j, k)
    require_distinct(scenario.model)
    lam_j, _ = _matched_value(scenario, j, split_product=False)
    lam_k, _ = _matched_value(scenario, k, split_product=False)
    return lam_j / (lam_j + lam_k)


def perturbed_rho_ppca(scenario: PerturbationScenario, j: int, k: int) -> float:
    """rho on singular values j, k of the product functional with one factor
    perturbed by 2*eps, matched back to the model's indices."""
    _check_pair(scenario.model, j, k)
    require_distinct(scenario.model)
    lam_j, _ = _matched_value(scenario, j, split_product=True)
    lam_k, _ = _matched_value(scenario, k, split_product=True)
    return lam_j / (lam_j + lam_k)


def _matched_alignment(scenario: PerturbationScenario, j: int, split_product: bool) -> float:
    if not 1 <= j <= scenario.model.p:
        raise InvalidInput(f"j must lie in [1, {scenario.model.p}]")
    require_distinct(scenario.model)
    _, quality = _matched_value(scenario, j, split_product)
    return quality


def eigvec_alignment_pca(scenario: PerturbationScenario, j: int) -> float:
    """|cos| between gamma_j and the matched eigenvector of the
    eps-perturbed second moment."""
    return _matched_alignment(scenario, j, split_product=False)


def eigvec_alignment_ppca(scenario: PerturbationScenario, j: int) -> float:
    """|cos| between gamma_j and the matched integrated vector of the
    one-side 2*eps-perturbed product functional."""
    return _matched_alignment(scenario, j, split_product=True)


def tau_jk_numeric(scenario: PerturbationScenario, j: int, k: int) -> float:
    """(rho_ppca - rho_pca) / eta_jk, all three at the scenario's eps."""
    _check_pair(scenario.model, j, k)
    require_distinct(scenario.model)
    w = scenario.model.eigenvalues
    base = rho(w[j - 1], w[k - 1])
    eta = base * (1.0 - base)
    return (
        perturbed_rho_ppca(scenario, j, k) - perturbed_rho_pca(scenario, j, k)
    ) / eta


def tau_numeric(scenario: PerturbationScenario) -> float:
    """Mean of tau_jk over all r (p - r) signal/noise pairs.

    Shares one decomposition per functional across the pairs, so it agrees
    with per-pair tau_jk_numeric to machine precision at a fraction of the
    cost.
    """
    model = scenario.model
    require_distinct(model)
    vals_pca, q_pca = _matched_eigenvalues(scenario, split_product=False)
    vals_pp, q_pp = _matched_eigenvalues(scenario, split_product=True)
    bad = np.minimum(q_pca, q_pp) < MATCH_TOL
    if np.any(bad):
        raise IndexMatchFailure(
            f"components {np.flatnonzero(bad) + 1} lost identity under perturbation"
        )
    w = model.eigenvalues
    total = 0.0
    for j in range(1, model.r + 1):
        for k in range(model.r + 1, model.p + 1):
            base = rho(w[j - 1], w[k - 1])
            eta = base * (1.0 - base)
            r_pca = vals_pca[j - 1] / (vals_pca[j - 1] + vals_pca[k - 1])
            r_pp = vals_pp[j - 1] / (vals_pp[j - 1] + vals_pp[k - 1])
            total += (r_pp - r_pca) / eta
    return total / (model.r * (model.p - model.r))


def d_vector(model: SpectralModel, x) -> np.ndarray:
    """d_l = (gamma_l . x)^2 / lambda_l for every component l.

    Sums to x^T Sigma^(-1) x, the Mahalanobis energy of x.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (model.p,):
        raise InvalidInput(f"x must have shape ({model.p},)")
    proj = model.eigenvectors.T @ x
    return proj**2 / model.eigenvalues


def tau_jk_theory(model: SpectralModel, x, eps: float, j: int, k: int) -> float:
    """Second-order closed form for tau_jk:

        eps^2 * sum_l lambda_l d_l * (d_k/(lambda_l + lambda_k)
                                      - d_j/(lambda_l + lambda_j)).
    """
    _check_pair(model, j, k)
    require_distinct(model)
    if not 0.0 <= eps < 0.25:
        raise InvalidInput("eps must lie in [0, 0.25)")
    w = model.eigenvalues
    d = d_vector(model, x)
    weights = w * d
    term = d[k - 1] / (w + w[k - 1]) - d[j - 1] / (w + w[j - 1])
    return float(eps**2 * np.sum(weights * term))


def delta(model: SpectralModel, x) -> float:
    """Noise-minus-signal mean of d: mean_{k>r} d_k - mean_{j<=r} d_j."""
    d = d_vector(model, x)
    r = model.r
    return float(d[r:].mean() - d[:r].mean())


def delta_prime(model: SpectralModel, x) -> float:
    """Always-nonnegative cross-term aggregate:

        p * sum_{j<=r} sum_{k>r} ((lambda_j - lambda_k)/(lambda_j + lambda_k))
            * d_j d_k / (r (p - r) x^T Sigma^(-1) x).

    Zero when x is an eigenvector direction or when the spectrum is flat.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x != 0.0):
        raise InvalidInput("x must be nonzero")
    d = d_vector(model, x)
    w = model.eigenvalues
    r, p = model.r, model.p
    ratio = (w[:r, None] - w[None, r:]) / (w[:r, None] + w[None, r:])
    num = p * float(np.sum(ratio * d[:r, None] * d[None, r:]))
    return num / (r * (p - r) * float(d.sum()))


def tau_theory(model: SpectralModel, x, eps: float) -> float:
    """Averaged closed form (eps^2 / 2) x^T Sigma^(-1) x (Delta + Delta')."""
    require_distinct(model)
    if not 0.0 <= eps < 0.25:
        raise InvalidInput("eps must lie in [0, 0.25)")
    energy = float(d_vector(model, x).sum())
    return 0.5 * eps**2 * energy * (delta(model, x) + delta_prime(model, x))


def tau_perpendicular_theory(model: SpectralModel, x, eps: float) -> float:
    """Closed form eps^2 (x^T Sigma^(-1) x)^2 / (2 (p - r)) for x orthogonal
    to the signal span; raises InvalidInput when x has a signal component."""
    require_distinct(model)
    if not 0.0 <= eps < 0.25:
        raise InvalidInput("eps must lie in [0, 0.25)")
    x = np.asarray(x, dtype=float)
    if x.shape != (model.p,):
        raise InvalidInput(f"x must have shape ({model.p},)")
    signal = model.eigenvectors[:, : model.r]
    if np.linalg.norm(signal.T @ x) > 1e-10 * np.linalg.norm(x):
        raise InvalidInput("x must be orthogonal to the signal span")
    energy = float(d_vector(model, x).sum())
    return eps**2 * energy**2 / (2.0 * (model.p - model.r))


def m_pseudoinverse(model: SpectralModel, j: int) -> np.ndarray:
    """Moore-Penrose pseudoinverse of (lambda_j I - Sigma): zero on the j-th
    eigendirection, 1/(lambda_j - lambda_l) on every other."""
    if not 1 <= j <= model.p:
        raise InvalidInput(f"j must lie in [1, {model.p}]")
    require_distinct(model)
    w = model.eigenvalues
    inv = np.zeros(model.p)
    mask = np.arange(model.p) != j - 1
    inv[mask] = 1.0 / (w[j - 1] - w[mask])
    g = model.eigenvectors
    return symmetrize((g * inv) @ g.T)


def eigvec_perturbation_theory(model: SpectralModel, x, eps: float, j: int) -> float:
    """Second-order prediction of the aligned inner product
    |gamma_j . gamma_j(F_eps)|, namely

        1 - (eps^2 / 2) (gamma_j . x)^2 * x^T M_j^2 x

    with M_j the pseudoinverse of (lambda_j I - Sigma)."""
    if not 1 <= j <= model.p:
        raise InvalidInput(f"j must lie in [1, {model.p}]")
    require_distinct(model)
    if not 0.0 <= eps < 0.25:
        raise InvalidInput("eps must lie in [0, 0.25)")
    x = np.asarray(x, dtype=float)
    if x.shape != (model.p,):
        raise InvalidInput(f"x must have shape ({model.p},)")
    w = model.eigenvalues
    proj = model.eigenvectors.T @ x
    mask = np.arange(model.p) != j - 1
    m2x = np.sum(proj[mask] ** 2 / (w[j - 1] - w[mask]) ** 2)
    return 1.0 - 0.5 * eps**2 * proj[j - 1] ** 2 * m2x


class FlipThresholds(NamedTuple):
    eta_pca: float
    eta_cdm: float
    cdm_more_robust: bool


def flip_thresholds(a: float, eps: float) -> FlipThresholds:
    """Outlier masses at which a point mass on a noise direction overtakes
    the signal eigenvalue, for the two-point model diag(a, 1, ..., 1).

    Plain PCA flips at eta > (1 - eps)/eps * (a - 1); the split-product
    estimator (CDM route, outlier confined to one half at doubled rate)
    flips at eta > (1 - 2 eps)/(2 eps) * (a^2 - 1).  The flag records
    whether the latter threshold is larger, which holds iff a > 1/(1 - 2 eps).
    """
    if not a > 1.0:
        raise InvalidInput("need signal strength a > 1")
    if not 0.0 < eps < 0.5:
        raise InvalidInput("eps must lie in (0, 0.5)")
    eta_pca = (1.0 - eps) / eps * (a - 1.0)
    eta_cdm = (1.0 - 2.0 * eps) / (2.0 * eps) * (a**2 - 1.0)
    return FlipThresholds(eta_pca, eta_cdm, eta_cdm > eta_pca)


def flip_leading_direction(a: float, eps: float, eta: float, method: str = "pca", p: int = 3) -> str:
    """Which direction leads the perturbed spectrum at outlier mass eta.

    Builds Sigma = diag(a, 1, ..., 1) with signal xi = e1 and outlier
    direction nu = e2 carrying mass eta.  Returns 'signal' or 'outlier'
    according to the top component of the perturbed estimator: the
    eps-perturbed second moment for 'pca', or the product of the 2*eps
    one-half-perturbed moment with Sigma for 'cdm' (the two matrices commute
    here, so the product is symmetric and the singular values are its
    eigenvalues).
    """
    if method not in ("pca", "cdm"):
        raise InvalidInput("method must be 'pca' or 'cdm'")
    if p < 2:
        raise InvalidInput("need p >= 2")
    if not a > 1.0:
        raise InvalidInput("need a > 1")
    if not eta > 0.0:
        raise InvalidInput("need eta > 0")
    sigma = np.eye(p)
    sigma[0, 0] = a
    nu = np.zeros(p)
    nu[1] = 1.0
    x = np.sqrt(eta) * nu
    if method == "pca":
        if not 0.0 < eps < 1.0:
            raise InvalidInput("eps must lie in (0, 1)")
        m = perturbed_second_moment(sigma, x, eps)
    else:
        if not 0.0 < eps < 0.5:
            raise InvalidInput("eps must lie in (0, 0.5) for the split route")
        m = perturbed_second_moment(sigma, x, 2.0 * eps) @ sigma
    lead = sym_eig(m).eigenvectors[:, 0]
    return "outlier" if abs(lead[1]) > abs(lead[0]) else "signal"


def _commutation_matrix(p: int) -> np.ndarray:
    # K vec(A) = vec(A^T) for column-stacked vec.
    k = np.zeros((p * p, p * p))
    i, j = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    k[(i + j * p).ravel(), (j + i * p).ravel()] = 1.0
    return k


def asymptotic_cov_gaussian(model: SpectralModel) -> np.ndarray:
    """Asymptotic covariance of sqrt(n) (beta_hat - beta) for Gaussian data,
    where beta stacks the p eigenvalues then vec(Gamma) column by column.

    Built as H^T W H with W = (I + K)(Sigma ⊗ Sigma), the Gaussian
    fourth-moment form (K the commutation matrix), and H the p^2 x p(p+1)
    Jacobian whose eigenvalue columns are gamma_j ⊗ gamma_j and whose
    eigenvector blocks are gamma_j ⊗ M_j.  Requires distinct eigenvalues.
    """
    require_distinct(model)
    p = model.p
    sigma = covariance_of(model)
    w = (np.eye(p * p) + _commutation_matrix(p)) @ np.kron(sigma, sigma)
    blocks = []
    for j in range(1, p + 1):
        g = model.eigenvectors[:, j - 1]
        blocks.append(np.kron(g, g)[:, None])
    for j in range(1, p + 1):
        g = model.eigenvectors[:, j - 1]
        blocks.append(np.kron(g[:, None], m_pseudoinverse(model, j)))
    h = np.hstack(blocks)
    return symmetrize(h.T @ w @ h)


@dataclass(frozen=True)
class MonteCarloDelta:
    """Monte Carlo summary of Delta(X') over random outlier directions."""

    mean: float
    mean_se: float
    frac_positive: float
    frac_se: float
    replicates: int


def monte_carlo_delta(
    model: SpectralModel,
    generator: str,
    replicates: int,
    rng=None,
    scale: float = 1.0,
    df: float = 5.0,
) -> MonteCarloDelta:
    """Estimate E[Delta(X')] and P[Delta(X') > 0] over random draws.

    generator 'isotropic' draws X' ~ N(0, scale * I); 'elliptical' draws a
    multivariate t with df degrees of freedom and covariance scale * Sigma.
    Positive scale only rescales Delta by a positive factor, so the sign
    summaries do not depend on it.  Requires replicates >= 1000.
    """
    if generator not in ("isotropic", "elliptical"):
        raise InvalidInput("generator must be 'isotropic' or 'elliptical'")
    if replicates < 1000:
        raise InvalidInput("need at least 1000 replicates")
    if not scale > 0.0:
        raise InvalidInput("scale must be positive")
    rng = np.random.default_rng(rng)
    p, r = model.p, model.r
    z = rng.standard_normal((replicates, p))
    if generator == "isotropic":
        draws = np.sqrt(scale) * z
    else:
        if not df > 2.0:
            raise InvalidInput("elliptical generator needs df > 2")
        root = psd_sqrt(scale * (df - 2.0) / df * covariance_of(model))
        chi = rng.chisquare(df, replicates)
        draws = (z @ root.T) * np.sqrt(df / chi)[:, None]
    d = (draws @ model.eigenvectors) ** 2 / model.eigenvalues
    deltas = d[:, r:].mean(axis=1) - d[:, :r].mean(axis=1)
    mean = float(deltas.mean())
    mean_se = float(deltas.std(ddof=1) / np.sqrt(replicates))
    frac = float(np.mean(deltas > 0.0))
    frac_se = float(np.sqrt(frac * (1.0 - frac) / replicates))
    return MonteCarloDelta(mean, mean_se, frac, frac_se, replicates)

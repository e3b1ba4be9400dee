"""Sample-level spectrum estimators: plain PCA, product PCA, and CDM-PCA.

Product PCA (PPCA) splits the rows in half at random, forms the two sample
covariances S1 and S2, and reads the spectrum off the SVD of
S1^(1/2) S2^(1/2).  Eigenvector estimates merge each left/right singular
pair u, v into the top eigenvector of u u^T + v v^T, which is
(u + sign(u.v) v) normalized.  CDM-PCA gets the same nonzero singular values
from the n1 x n2 cross matrix X1 X2^T / sqrt(n1 n2) instead, which is the
cheap route when p >> n.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateIntegration,
    FormatError,
    InvalidInput,
    RankDeficient,
)
from .linalg import RANK_TOL, _fix_signs, psd_sqrt, svd_desc, sym_eig

# |u.v| at or below this means the two singular vectors carry no shared
# direction and integration is refused.
INTEGRATION_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SplitPair:
    """A disjoint two-way row split of a data matrix.

    `permutation` records the row order that produced it: the first
    ceil(n/2) entries index `first`, the rest `second`.
    """

    first: np.ndarray
    second: np.ndarray
    permutation: np.ndarray

    def __post_init__(self):
        n1, n2 = self.first.shape[0], self.second.shape[0]
        if self.permutation.shape != (n1 + n2,):
            raise InvalidInput("permutation length must equal total row count")
        if abs(n1 - n2) > 1:
            raise InvalidInput("split halves must differ by at most one row")


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    """Estimated spectrum plus the pieces the estimator produced it from.

    eigenvalues   descending, nonnegative
    eigenvectors  unit columns, one per eigenvalue
    method        'pca' | 'ppca' | 'cdmpca'
    rank          the rank the caller asked for (components retained may
                  exceed it; cdmpca keeps exactly `rank`)
    left/right    method-specific factor pair: singular vectors for ppca,
                  the two half-sample bases Gamma1/Gamma2 for cdmpca
    degenerate    per-column flags marking ppca columns where integration
                  fell back to the left singular vector
    raw_eigenvectors  cdmpca only: the averaged basis before column
                  normalization (satisfies Gamma1^T Gamma2 = I)
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    method: str
    rank: int
    left: np.ndarray | None = None
    right: np.ndarray | None = None
    degenerate: np.ndarray | None = None
    raw_eigenvectors: np.ndarray | None = None


def _as_data_matrix(x, min_rows: int = 1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] == 0:
        raise InvalidInput(f"expected an n x p data matrix, got shape {x.shape}")
    if x.shape[0] < min_rows:
        raise InvalidInput(f"need at least {min_rows} rows, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("data matrix contains non-finite entries")
    return x


def sample_covariance(x, center: bool = True) -> np.ndarray:
    """Sample covariance with divisor n (not n-1), optionally uncentered."""
    x = _as_data_matrix(x, min_rows=2 if center else 1)
    if center:
        x = x - x.mean(axis=0)
    return (x.T @ x) / x.shape[0]


def random_split(x, rng=None) -> SplitPair:
    """Uniformly random partition into halves of size ceil(n/2), floor(n/2)."""
    x = _as_data_matrix(x, min_rows=4)
    rng = np.random.default_rng(rng)
    perm = rng.permutation(x.shape[0])
    n1 = (x.shape[0] + 1) // 2
    return SplitPair(first=x[perm[:n1]], second=x[perm[n1:]], permutation=perm)


def pca_fit(x, rank: int) -> SpectrumEstimate:
    """Spectrum of the (centered, divisor-n) sample covariance.

    All p components are retained; `rank` is validated against min(n-1, p)
    and recorded for downstream truncation.
    """
    x = _as_data_matrix(x, min_rows=2)
    n, p = x.shape
    if not 1 <= rank <= min(n - 1, p):
        raise InvalidInput(f"rank must lie in [1, min(n-1, p)] = [1, {min(n - 1, p)}]")
    dec = sym_eig(sample_covariance(x))
    return SpectrumEstimate(
        eigenvalues=np.clip(dec.eigenvalues, 0.0, None),
        eigenvectors=dec.eigenvectors,
        method="pca",
        rank=rank,
    )


def integrate_singular_vectors(u, v) -> np.ndarray:
    """Merge unit vectors u, v into the top eigenvector of u u^T + v v^T.

    Closed form: normalize(u + sign(u.v) v), with eigenvalue 1 + |u.v|.
    Raises DegenerateIntegration when |u.v| <= 1e-12 (the top eigenvalue is
    then a near-tie and no preferred merge direction exists).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise InvalidInput("expected two 1-D vectors of equal length")
    for name, vec in (("u", u), ("v", v)):
        if abs(np.linalg.norm(vec) - 1.0) > 1e-10:
            raise InvalidInput(f"{name} must be a unit vector")
    c = float(u @ v)
    if abs(c) <= INTEGRATION_TOL:
        raise DegenerateIntegration(f"|u.v| = {abs(c):.3g} is below tolerance")
    w = u + np.sign(c) * v
    w /= np.linalg.norm(w)
    return _fix_signs(w[:, None])[:, 0]


def _integrate_columns(left: np.ndarray, right: np.ndarray):
    """Integrate each column pair, falling back to the left vector where
    the pair is degenerate.  Returns (matrix, degenerate mask)."""
    p, m = left.shape
    out = np.empty((p, m))
    degenerate = np.zeros(m, dtype=bool)
    for j in range(m):
        try:
            out[:, j] = integrate_singular_vectors(left[:, j], right[:, j])
        except DegenerateIntegration:
            out[:, j] = left[:, j]
            degenerate[j] = True
    return out, degenerate


def ppca_fit(x, rank: int, rng=None, split: SplitPair | None = None) -> SpectrumEstimate:
    """Product-PCA fit: SVD of S1^(1/2) S2^(1/2) over a random row split.

    Eigenvalues are the singular values; eigenvectors integrate each
    singular pair.  Pass `split` to reuse a split shared with another
    estimator (the seed is then ignored).
    """
    x = _as_data_matrix(x, min_rows=4)
    n, p = x.shape
    if not 1 <= rank <= p:
        raise InvalidInput(f"rank must lie in [1, p] = [1, {p}]")
    if split is None:
        split = random_split(x, rng)
    s1 = sample_covariance(split.first)
    s2 = sample_covariance(split.second)
    res = svd_desc(psd_sqrt(s1) @ psd_sqrt(s2))
    vectors, degenerate = _integrate_columns(res.left, res.right)
    return SpectrumEstimate(
        eigenvalues=res.singular_values,
        eigenvectors=vectors,
        method="ppca",
        rank=rank,
        left=res.left,
        right=res.right,
        degenerate=degenerate,
    )


def cdm_pca_fit(x, rank: int, rng=None, split: SplitPair | None = None) -> SpectrumEstimate:
    """CDM-PCA fit via the cross matrix X1 X2^T / sqrt(n1 n2).

    Each half is centered by its own mean.  With V1 diag(s) V2^T the SVD of
    the cross matrix, the two p x r half-bases are
    Gamma_k = X_k^T V_k diag(s)^(-1/2) / sqrt(n_k); the estimate averages
    them and normalizes columns.  Exactly `rank` components are kept, and
    the nonzero singular values agree with ppca_fit on the same split.
    """
    x = _as_data_matrix(x, min_rows=4)
    n, p = x.shape
    if split is None:
        split = random_split(x, rng)
    n1, n2 = split.first.shape[0], split.second.shape[0]
    if not 1 <= rank <= min(n1, n2, p):
        raise InvalidInput(
            f"rank must lie in [1, min(n1, n2, p)] = [1, {min(n1, n2, p)}]"
        )
    x1 = split.first - split.first.mean(axis=0)
    x2 = split.second - split.second.mean(axis=0)
    cross = (x1 @ x2.T) / np.sqrt(n1 * n2)
    res = svd_desc(cross)
    s = res.singular_values
    if s[rank - 1] <= RANK_TOL * s[0]:
        raise RankDeficient(
            f"singular value {rank} is {s[rank - 1]:.3g} against leading {s[0]:.3g}"
        )
    lead = s[:rank]
    g1 = (x1.T @ res.left[:, :rank]) / (np.sqrt(n1) * np.sqrt(lead))
    g2 = (x2.T @ res.right[:, :rank]) / (np.sqrt(n2) * np.sqrt(lead))
    raw = 0.5 * (g1 + g2)
    vectors = raw / np.linalg.norm(raw, axis=0)
    return SpectrumEstimate(
        eigenvalues=lead,
        eigenvectors=vectors,
        method="cdmpca",
        rank=rank,
        left=g1,
        right=g2,
        raw_eigenvectors=raw,
    )


def load_data_matrix(path) -> np.ndarray:
    """Read a headerless numeric CSV into an n x p array.

    Ragged rows, non-numeric cells, and empty files raise FormatError.
    """
    path = Path(path)
    rows: list[list[float]] = []
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    width = None
    for lineno, record in enumerate(csv.reader(text.splitlines()), start=1):
        if not record:
            continue
        if width is None:
            width = len(record)
        elif len(record) != width:
            raise FormatError(
                f"{path}:{lineno}: expected {width} columns, found {len(record)}"
            )
        try:
            rows.append([float(cell) for cell in record])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-numeric cell") from exc
    if not rows:
        raise FormatError(f"{path}: no data rows")
    x = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(x)):
        raise FormatError(f"{path}: non-finite values")
    return x

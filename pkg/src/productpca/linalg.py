"""Deterministic dense linear algebra used by every other module.

All functions are pure and single-threaded from the caller's point of view:
the same input bytes produce the same output bytes.  Eigenvalues and singular
values are always returned in descending order, and eigenvector signs follow
one fixed convention (largest-magnitude entry positive, ties broken by lowest
index) so downstream comparisons never chase arbitrary LAPACK signs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidInput, NotPositiveSemidefinite, RankDeficient

# Eigenvalues of a nominally-PSD matrix may go slightly negative in floating
# point; anything below -PSD_TOL * lambda_max is treated as genuinely negative.
PSD_TOL = 1e-10

# Columns whose singular-value ratio to the largest falls at or below this are
# treated as numerically dependent.
RANK_TOL = 1e-12

# Frobenius tolerance for "is this basis orthonormal" input checks.
ORTHO_TOL = 1e-8


def symmetrize(a) -> np.ndarray:
    """Return the exactly symmetric part (A + A.T) / 2 of a square matrix.

    Raises InvalidInput if `a` is not a finite real square 2-D array.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise InvalidInput("empty matrix")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix contains non-finite entries")
    return 0.5 * (a + a.T)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-|entry| coordinate is positive.

    np.argmax takes the first maximum, which implements the lowest-index tie
    break.  Returns a new array.
    """
    vectors = vectors.copy()
    idx = np.argmax(np.abs(vectors), axis=0)
    flip = vectors[idx, np.arange(vectors.shape[1])] < 0.0
    vectors[:, flip] *= -1.0
    return vectors


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues (descending) and matching sign-fixed eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        w, v = self.eigenvalues, self.eigenvectors
        if w.ndim != 1 or v.ndim != 2 or v.shape[1] != w.shape[0]:
            raise InvalidInput("eigenvalue/eigenvector shape mismatch")
        if np.any(np.diff(w) > 0.0):
            raise InvalidInput("eigenvalues must be non-increasing")

    @property
    def p(self) -> int:
        return self.eigenvectors.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Gamma diag(lambda) Gamma^T, exactly symmetrized."""
        v = self.eigenvectors
        return symmetrize((v * self.eigenvalues) @ v.T)


@dataclass(frozen=True, eq=False)
class SvdResult:
    """Economy SVD A = left diag(s) right^T with descending singular values.

    Left columns follow the eigenvector sign convention; right columns are
    flipped in tandem so the factorization is preserved.
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def sym_eig(s) -> SpectralDecomposition:
    """Eigendecomposition of a symmetric matrix, descending, signs fixed.

    The input is symmetrized first, so mildly asymmetric matrices (roundoff
    from products of symmetric factors) are accepted.
    """
    s = symmetrize(s)
    w, v = np.linalg.eigh(s)
    order = np.argsort(w, kind="stable")[::-1]
    return SpectralDecomposition(w[order], _fix_signs(v[:, order]))


def psd_sqrt(s) -> np.ndarray:
    """Symmetric PSD square root of a symmetric PSD matrix.

    Eigenvalues in [-PSD_TOL * lambda_max, 0) are clamped to zero; anything
    more negative raises NotPositiveSemidefinite.
    """
    dec = sym_eig(s)
    w = dec.eigenvalues
    if w[-1] < -PSD_TOL * w[0]:
        raise NotPositiveSemidefinite(
            f"eigenvalue {w[-1]:.6g} below tolerance for largest {w[0]:.6g}"
        )
    root = np.sqrt(np.clip(w, 0.0, None))
    v = dec.eigenvectors
    return symmetrize((v * root) @ v.T)


def svd_desc(a) -> SvdResult:
    """Economy SVD with descending singular values and fixed signs.

    Accepts any finite real 2-D matrix; for an n x m input the factors are
    n x k, k, m x k with k = min(n, m).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or min(a.shape) == 0:
        raise InvalidInput(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix contains non-finite entries")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    v = vh.T
    idx = np.argmax(np.abs(u), axis=0)
    flip = u[idx, np.arange(u.shape[1])] < 0.0
    u = u.copy()
    v = v.copy()
    u[:, flip] *= -1.0
    v[:, flip] *= -1.0
    return SvdResult(u, s, v)


def orthonormal_basis(m) -> np.ndarray:
    """Orthonormal basis of the column span of a full-column-rank matrix.

    Uses column-pivoted QR for a deterministic basis.  Raises RankDeficient
    when the smallest singular value is at or below RANK_TOL times the
    largest, and InvalidInput when q > p.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or min(m.shape) == 0:
        raise InvalidInput(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput("matrix contains non-finite entries")
    p, q = m.shape
    if q > p:
        raise InvalidInput(f"need q <= p, got {q} columns over {p} rows")
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        raise RankDeficient(
            f"singular-value ratio {sv[-1]:.3g}/{sv[0]:.3g} below rank tolerance"
        )
    qmat, _, _ = scipy.linalg.qr(m, mode="economic", pivoting=True)
    return _fix_signs(qmat)


def subspace_similarity(b, gamma_r) -> float:
    """Mean of the r singular values of B^T Gamma_r (mean cosine of angles).

    B is p x q and Gamma_r is p x r with q >= r; both must have orthonormal
    columns within ORTHO_TOL in Frobenius norm.  Equals 1 exactly when the
    r-dim subspace is contained in span(B), 0 when orthogonal to it.
    """
    b = np.asarray(b, dtype=float)
    g = np.asarray(gamma_r, dtype=float)
    if b.ndim != 2 or g.ndim != 2 or b.shape[0] != g.shape[0]:
        raise InvalidInput("bases must be 2-D with a shared row dimension")
    q, r = b.shape[1], g.shape[1]
    if r < 1 or q < r:
        raise InvalidInput(f"need q >= r >= 1, got q={q}, r={r}")
    for name, mat in (("B", b), ("Gamma_r", g)):
        gram_err = np.linalg.norm(mat.T @ mat - np.eye(mat.shape[1]))
        if gram_err > ORTHO_TOL:
            raise InvalidInput(
                f"{name} is not orthonormal (Frobenius defect {gram_err:.3g})"
            )
    s = np.linalg.svd(b.T @ g, compute_uv=False)
    return float(np.mean(s))

"""Image-corpus pipeline: load, contaminate, reconstruct, export.

A corpus is an n x (height * width) float matrix of row-major flattened
grayscale images plus a JSON sidecar recording the geometry.  Two
contamination schemes mirror the outlier settings used elsewhere in the
package: additive heavy-tailed noise on a random subset of rows (s1) and
appended pure-noise images (s2).  Reconstruction projects centered images
onto the span of an estimator's leading eigenvectors.
"""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, InvalidInput
from .estimators import SpectrumEstimate, load_data_matrix, pca_fit, ppca_fit
from .linalg import orthonormal_basis
from .simulation import sample_mvt


@dataclass(frozen=True, eq=False)
class ImageCorpus:
    """Flattened grayscale images, one per row.

    Pixel values are validated to [0, pixel_max] on ingest only; derived
    corpora (contaminated or reconstructed) may exceed the range and are
    clamped at export time.
    """

    images: np.ndarray
    height: int
    width: int
    pixel_max: float = 255.0

    def __post_init__(self):
        img = np.asarray(self.images, dtype=float)
        object.__setattr__(self, "images", img)
        if self.height < 1 or self.width < 1:
            raise InvalidInput("height and width must be positive")
        if img.ndim != 2 or img.shape[1] != self.height * self.width:
            raise InvalidInput(
                f"images must be n x {self.height * self.width}, got {img.shape}"
            )
        if img.shape[0] < 1:
            raise InvalidInput("corpus must contain at least one image")
        if not np.all(np.isfinite(img)):
            raise InvalidInput("images contain non-finite values")
        if not self.pixel_max > 0.0:
            raise InvalidInput("pixel_max must be positive")

    @property
    def n(self) -> int:
        return self.images.shape[0]

    def image(self, index: int) -> np.ndarray:
        return self.images[index].reshape(self.height, self.width)


def load_corpus(csv_path, sidecar_path=None) -> ImageCorpus:
    """Read a corpus CSV plus its JSON sidecar {n, height, width, pixel_max}.

    The sidecar defaults to the CSV path with a .json suffix.  Dimension
    mismatches and out-of-range pixels raise FormatError.
    """
    csv_path = Path(csv_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    try:
        meta = json.loads(sidecar_path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read sidecar {sidecar_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{sidecar_path}: invalid JSON: {exc}") from exc
    for key in ("n", "height", "width", "pixel_max"):
        if key not in meta:
            raise FormatError(f"{sidecar_path}: missing field '{key}'")
    try:
        n = int(meta["n"])
        height = int(meta["height"])
        width = int(meta["width"])
        pixel_max = float(meta["pixel_max"])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{sidecar_path}: non-numeric metadata") from exc
    images = load_data_matrix(csv_path)
    if images.shape != (n, height * width):
        raise FormatError(
            f"{csv_path}: expected {n} x {height * width} pixels, got {images.shape}"
        )
    if images.min() < 0.0 or images.max() > pixel_max:
        raise FormatError(f"{csv_path}: pixel values outside [0, {pixel_max:g}]")
    return ImageCorpus(images=images, height=height, width=width, pixel_max=pixel_max)


def save_corpus(corpus: ImageCorpus, csv_path) -> None:
    """Write the CSV and sidecar that load_corpus reads back."""
    csv_path = Path(csv_path)
    lines = [
        ",".join(format(v, ".12g") for v in row) for row in corpus.images
    ]
    csv_path.write_text("\n".join(lines) + "\n")
    meta = {
        "n": corpus.n,
        "height": corpus.height,
        "width": corpus.width,
        "pixel_max": corpus.pixel_max,
    }
    csv_path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def contaminate_s1(corpus: ImageCorpus, fraction: float = 0.1, rng=None):
    """Add heavy-tailed t_5(0, 50 I) noise to floor(fraction * n) rows.

    Rows are chosen uniformly without replacement.  Returns the new corpus
    and the sorted contaminated row indices; untouched rows are copied
    bit-for-bit.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InvalidInput("fraction must lie in [0, 1]")
    rng = np.random.default_rng(rng)
    count = int(np.floor(fraction * corpus.n))
    chosen = np.sort(rng.choice(corpus.n, size=count, replace=False))
    images = corpus.images.copy()
    if count:
        d = corpus.height * corpus.width
        noise = sample_mvt(count, 0.0, 50.0 * np.eye(d), 5.0, rng)
        images[chosen] += noise
    out = ImageCorpus(images, corpus.height, corpus.width, corpus.pixel_max)
    return out, chosen


def contaminate_s2(corpus: ImageCorpus, count: int = 20, rng=None) -> ImageCorpus:
    """Append `count` pure-noise images, each pixel discrete uniform on
    {0, 1, ..., int(pixel_max)}."""
    if count < 0:
        raise InvalidInput("count must be nonnegative")
    rng = np.random.default_rng(rng)
    d = corpus.height * corpus.width
    noise = rng.integers(0, int(corpus.pixel_max) + 1, size=(count, d)).astype(float)
    images = np.vstack([corpus.images, noise])
    return ImageCorpus(images, corpus.height, corpus.width, corpus.pixel_max)


def fit_corpus(corpus: ImageCorpus, method: str, rank: int, rng=None) -> SpectrumEstimate:
    """Fit an estimator on the corpus rows (images as observations)."""
    if method == "pca":
        return pca_fit(corpus.images, rank)
    if method == "ppca":
        return ppca_fit(corpus.images, rank, rng=rng)
    raise InvalidInput("method must be 'pca' or 'ppca'")


def reconstruct_from_estimate(
    corpus: ImageCorpus, estimate: SpectrumEstimate, rank: int
) -> ImageCorpus:
    """Project centered images on the estimate's leading-`rank` span.

    Same fit, larger rank never increases any per-image squared error
    (the spans are nested).  rank >= 1 always; a rank-0 "mean only"
    convention is deliberately not offered.
    """
    if not 1 <= rank <= estimate.eigenvectors.shape[1]:
        raise InvalidInput(
            f"rank must lie in [1, {estimate.eigenvectors.shape[1]}]"
        )
    basis = orthonormal_basis(estimate.eigenvectors[:, :rank])
    mu = corpus.images.mean(axis=0)
    centered = corpus.images - mu
    recon = mu + (centered @ basis) @ basis.T
    return ImageCorpus(recon, corpus.height, corpus.width, corpus.pixel_max)


def reconstruct(corpus: ImageCorpus, method: str, rank: int, rng=None) -> ImageCorpus:
    """Fit on the corpus and reconstruct every image at the given rank."""
    n, p = corpus.images.shape
    cap = p if method == "ppca" else min(n - 1, p)
    if not 1 <= rank <= cap:
        raise InvalidInput(f"rank must lie in [1, {cap}] for method {method}")
    return reconstruct_from_estimate(corpus, fit_corpus(corpus, method, rank, rng), rank)


def _to_uint8(image: np.ndarray) -> np.ndarray:
    # Clamp to [0, 255], then round half-to-even (np.rint).
    return np.rint(np.clip(image, 0.0, 255.0)).astype(np.uint8)


def pgm_bytes(image: np.ndarray) -> bytes:
    """Binary PGM (P5) encoding: maxval 255, no comment lines, pixels
    clamped to [0, 255] and rounded half-to-even."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise InvalidInput("image must be 2-D")
    h, w = image.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    return header + _to_uint8(image).tobytes()


def write_pgm(image: np.ndarray, path) -> None:
    """Write one grayscale image as binary PGM (P5)."""
    Path(path).write_bytes(pgm_bytes(image))


def read_pgm(path) -> np.ndarray:
    """Read back a binary PGM written by write_pgm.  Returns float array."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise FormatError(f"{path}: bad header fields") from exc
    if maxval != 255:
        raise FormatError(f"{path}: expected maxval 255, got {maxval}")
    pixels = np.frombuffer(raw[pos:], dtype=np.uint8)
    if pixels.size != w * h:
        raise FormatError(f"{path}: expected {w * h} pixels, got {pixels.size}")
    return pixels.reshape(h, w).astype(float)


def export_images(corpus: ImageCorpus, directory, prefix: str = "image") -> list:
    """Write every image as PGM under `directory`; returns the paths.

    Indices are zero-padded to a fixed width so lexicographic order equals
    row order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pad = max(3, len(str(corpus.n - 1)))
    paths = []
    for i in range(corpus.n):
        path = directory / f"{prefix}_{i:0{pad}d}.pgm"
        write_pgm(corpus.image(i), path)
        paths.append(path)
    return paths


def _png_data_uri(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(_to_uint8(image), mode="L").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def contact_sheet_svg(rows, column_labels, cell_height: int = 96) -> str:
    """Grid of images: `rows` is a list of (label, [2-D images]) pairs.

    Every image is embedded as a base64 PNG; the output depends only on the
    pixel data and labels.
    """
    if not rows or any(not imgs for _, imgs in rows):
        raise InvalidInput("need at least one row and one image per row")
    ncols = max(len(imgs) for _, imgs in rows)
    if len(column_labels) < ncols:
        raise InvalidInput("not enough column labels")
    h, w = rows[0][1][0].shape
    cell_w = int(round(cell_height * w / h))
    label_w, header_h, gap = 110, 24, 6
    total_w = label_w + ncols * (cell_w + gap) + gap
    total_h = header_h + len(rows) * (cell_height + gap) + gap
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" '
        f'viewBox="0 0 {total_w} {total_h}">',
        f'<rect width="{total_w}" height="{total_h}" fill="white"/>',
    ]
    for c in range(ncols):
        x = label_w + gap + c * (cell_w + gap) + cell_w / 2
        parts.append(
            f'<text x="{x:.1f}" y="16" font-family="sans-serif" font-size="12" '
            f'text-anchor="middle">{column_labels[c]}</text>'
        )
    for ri, (label, images) in enumerate(rows):
        y = header_h + gap + ri * (cell_height + gap)
        parts.append(
            f'<text x="6" y="{y + cell_height / 2:.1f}" font-family="sans-serif" '
            f'font-size="12">{label}</text>'
        )
        for ci, img in enumerate(images):
            if img.shape != (h, w):
                raise InvalidInput("all images must share one shape")
            x = label_w + gap + ci * (cell_w + gap)
            parts.append(
                f'<image x="{x}" y="{y}" width="{cell_w}" height="{cell_height}" '
                f'href="{_png_data_uri(img)}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

"""Parallel-beam scan geometry, discrete Radon transform and its adjoint.

Every view is an explicit sparse weight block: each ray is sampled every
``RAY_STEP`` pixels and each sample spreads bilinear weights onto its four
neighbouring pixel centres. The adjoint is the transpose of the same
blocks, so the adjoint identity holds to round-off.

Coordinates: pixel ``(row, col)`` has centre ``x = col - (W-1)/2``,
``y = (H-1)/2 - row``. The ray for angle ``theta`` and detector offset
``s`` is ``{s*(cos, sin) + l*(-sin, cos)}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from dicect.errors import ContractError, DimensionError
from dicect.linalg import LinearOperator, as_vec

FULL_VIEWS = 180
RAY_STEP = 0.5


@dataclass(frozen=True)
class SamplingPattern:
    """Which of the 180 one-degree views are acquired."""

    kind: str = "uniform"
    n_views: int = 180
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "nonuniform"):
            raise ContractError(f"unknown sampling kind {self.kind!r}")
        if not 1 <= self.n_views <= FULL_VIEWS:
            raise ContractError(f"n_views must be in [1, {FULL_VIEWS}], got {self.n_views}")
        if self.kind == "uniform" and FULL_VIEWS % self.n_views:
            raise ContractError(f"uniform sampling needs n_views dividing {FULL_VIEWS}, got {self.n_views}")

    def select(self):
        """Indices into the full one-degree grid, sorted ascending."""
        if self.kind == "uniform":
            return np.arange(0, FULL_VIEWS, FULL_VIEWS // self.n_views)
        rng = np.random.default_rng(self.seed)
        return np.sort(rng.choice(FULL_VIEWS, size=self.n_views, replace=False))


@dataclass(frozen=True)
class ScanGeometry:
    image_side: int
    angles: tuple = field(default_factory=lambda: tuple(range(FULL_VIEWS)))
    n_detectors: int | None = None
    detector_spacing: float = 1.0
    center: tuple = (0.0, 0.0)  # rotation centre (x, y) relative to the image centre, pixels

    def __post_init__(self):
        if self.image_side < 8:
            raise ContractError(f"image_side must be >= 8, got {self.image_side}")
        angles = tuple(float(a) for a in self.angles)
        object.__setattr__(self, "angles", angles)
        if self.n_detectors is None:
            object.__setattr__(self, "n_detectors", self.image_side)
        if self.n_detectors < self.image_side:
            raise ContractError("n_detectors must be >= image_side")
        if not angles:
            raise ContractError("geometry needs at least one angle")
        a = np.asarray(angles)
        if np.any(np.diff(a) <= 0) or a[0] < 0 or a[-1] >= 180:
            raise ContractError("angles must be strictly increasing within [0, 180)")
        if self.detector_spacing <= 0:
            raise ContractError("detector_spacing must be positive")
        center = tuple(float(c) for c in self.center)
        if len(center) != 2:
            raise ContractError("center must be an (x, y) pair")
        object.__setattr__(self, "center", center)

    @property
    def n_views(self):
        return len(self.angles)

    @property
    def image_shape(self):
        return (self.image_side, self.image_side)

    @property
    def sino_shape(self):
        return (self.n_views, self.n_detectors)

    @property
    def dims(self):
        return self.n_views * self.n_detectors, self.image_side ** 2

    def detector_offsets(self):
        return (np.arange(self.n_detectors) - (self.n_detectors - 1) / 2) * self.detector_spacing


def build_geometry(image_side, pattern):
    """Geometry for ``pattern`` on the 180-view, one-degree grid."""
    return ScanGeometry(image_side, tuple(pattern.select().tolist()))


@dataclass(frozen=True)
class Sinogram:
    """Measurement array of shape ``(n_views, n_detectors)``, angle-major."""

    data: np.ndarray
    geometry: ScanGeometry

    def __post_init__(self):
        data = as_vec(self.data, self.geometry.sino_shape, "sinogram")
        object.__setattr__(self, "data", data)


@lru_cache(maxsize=2048)
def _view_block(angle_deg, image_side, n_detectors, spacing, center=(0.0, 0.0)):
    """Sparse ``(n_detectors, image_side**2)`` block for one view."""
    theta = np.deg2rad(angle_deg)
    c, s = np.cos(theta), np.sin(theta)
    half = (image_side - 1) / 2
    offsets = (np.arange(n_detectors) - (n_detectors - 1) / 2) * spacing
    reach = np.sqrt(2.0) * (half + 1) + np.hypot(*center)
    n_half = int(np.ceil(reach / RAY_STEP))
    ell = np.arange(-n_half, n_half + 1) * RAY_STEP

    # sample points, shape (n_detectors, n_samples)
    px = offsets[:, None] * c - ell[None, :] * s + center[0]
    py = offsets[:, None] * s + ell[None, :] * c + center[1]
    col = px + half
    row = half - py
    c0 = np.floor(col)
    r0 = np.floor(row)
    fc = col - c0
    fr = row - r0
    c0 = c0.astype(np.int64)
    r0 = r0.astype(np.int64)
    det = np.broadcast_to(np.arange(n_detectors)[:, None], px.shape)

    rows, cols, vals = [], [], []
    for dr, dc, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                      (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr = r0 + dr
        cc = c0 + dc
        keep = (rr >= 0) & (rr < image_side) & (cc >= 0) & (cc < image_side) & (w > 0)
        rows.append(det[keep])
        cols.append(rr[keep] * image_side + cc[keep])
        vals.append(w[keep] * RAY_STEP)
    block = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_detectors, image_side * image_side),
    ).tocsr()
    block.sum_duplicates()
    block.sort_indices()
    return block


class RadonTransform(LinearOperator):
    """Discrete parallel-beam Radon transform for a ``ScanGeometry``."""

    def __init__(self, geometry):
        super().__init__(geometry.image_shape, geometry.sino_shape)
        self.geometry = geometry
        blocks = [_view_block(a, geometry.image_side, geometry.n_detectors,
                              float(geometry.detector_spacing), geometry.center)
                  for a in geometry.angles]
        self.matrix = sp.vstack(blocks, format="csr")
        self.matrix_t = self.matrix.T.tocsr()

    def _apply(self, x):
        return (self.matrix @ x.ravel()).reshape(self.out_shape)

    def _adjoint(self, y):
        return (self.matrix_t @ y.ravel()).reshape(self.in_shape)


@lru_cache(maxsize=32)
def radon_operator(geometry):
    """Cached ``RadonTransform`` (geometries are hashable)."""
    return RadonTransform(geometry)


def radon_forward(img, geom):
    img = np.asarray(img, dtype=np.float64)
    if img.shape != geom.image_shape:
        raise DimensionError(f"image shape {img.shape} does not match geometry {geom.image_shape}")
    return Sinogram(radon_operator(geom).apply(img), geom)


def radon_adjoint(sino, geom=None):
    if isinstance(sino, Sinogram):
        geom = geom or sino.geometry
        if sino.geometry != geom:
            raise DimensionError("sinogram geometry differs from the requested geometry")
        data = sino.data
    else:
        data = np.asarray(sino, dtype=np.float64)
    if geom is None:
        raise ContractError("radon_adjoint needs a geometry")
    if data.shape != geom.sino_shape:
        raise DimensionError(f"sinogram shape {data.shape} does not match geometry {geom.sino_shape}")
    return radon_operator(geom).apply_adjoint(data)


def add_noise(sino, sigma, seed=None):
    """Additive i.i.d. Gaussian noise; ``sigma == 0`` returns the input unchanged."""
    if sigma < 0:
        raise ContractError("sigma must be >= 0")
    if sigma == 0:
        return sino
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noisy = sino.data + sigma * rng.standard_normal(sino.data.shape)
    return Sinogram(noisy, sino.geometry)

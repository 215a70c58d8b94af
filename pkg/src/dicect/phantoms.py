"""Ellipse phantoms.

Ellipse rows are ``(intensity, a, b, x0, y0, phi_deg)`` in the unit square
``[-1, 1]^2`` with ``y`` pointing up.
"""

import numpy as np

from dicect.errors import ContractError

# Modified (Toft) intensities. The published table is not mirror symmetric:
# ellipses 4 and 8 are replaced by mirror images of 3 and 10.
SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.11, 0.31, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.023, 0.046, -0.06, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def ellipse_phantom(side, ellipses, normalize=True, supersample=4):
    """Rasterise ``ellipses`` on a ``side x side`` grid.

    Each pixel is the mean over a ``supersample x supersample`` grid of
    sub-pixel centres (area averaging), which suppresses staircase aliasing
    at ellipse edges.
    """
    if side < 8:
        raise ContractError(f"image side must be >= 8, got {side}")
    k = int(supersample)
    fine = side * k
    u = (np.arange(fine) - (fine - 1) / 2) / (fine / 2)
    x = u[None, :]
    y = -u[:, None]
    img = np.zeros((fine, fine))
    for rho, a, b, x0, y0, phi in ellipses:
        p = np.deg2rad(phi)
        dx, dy = x - x0, y - y0
        xr = dx * np.cos(p) + dy * np.sin(p)
        yr = -dx * np.sin(p) + dy * np.cos(p)
        img = img + rho * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    img = img.reshape(side, k, side, k).mean(axis=(1, 3))
    if normalize:
        lo, hi = img.min(), img.max()
        img = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    return img


def shepp_logan(image_side):
    """Mirror-symmetric Shepp-Logan phantom scaled to ``[0, 1]``."""
    return ellipse_phantom(image_side, SHEPP_LOGAN)


def random_ellipse_phantom(image_side, seed, n_ellipses=8):
    """Head-like phantom: an outer shell plus random interior ellipses, in ``[0, 1]``."""
    rng = np.random.default_rng(seed)
    ax, bx = rng.uniform(0.6, 0.8), rng.uniform(0.75, 0.92)
    rows = [(1.0, ax, bx, 0.0, 0.0, rng.uniform(-10, 10)),
            (-0.7, ax - 0.04, bx - 0.04, 0.0, 0.0, 0.0)]
    for _ in range(n_ellipses):
        a, b = rng.uniform(0.04, 0.25, size=2)
        r = rng.uniform(0, 0.5)
        ang = rng.uniform(0, 2 * np.pi)
        rows.append((rng.uniform(-0.2, 0.35), a, b, r * np.cos(ang), r * np.sin(ang),
                     rng.uniform(0, 180)))
    return ellipse_phantom(image_side, rows)

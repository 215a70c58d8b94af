"""Small linear-Gaussian problems where every agent is affine.

With a Gaussian prior and an exact data prox, each consensus solve has a
closed form, which makes these problems useful as oracles.
"""

from dataclasses import dataclass

import numpy as np

from dicect.geometry import SamplingPattern, build_geometry, radon_operator
from dicect.phantoms import shepp_logan


def stationary_covariance(side, length=1.5, max_eig=1.9):
    """Squared-exponential pixel covariance rescaled so its top eigenvalue is ``max_eig``.

    Keeping ``max_eig <= 2`` makes the Gaussian posterior-mean map a
    contraction at every noise level.
    """
    r, c = np.divmod(np.arange(side * side), side)
    d2 = (r[:, None] - r[None, :]) ** 2 + (c[:, None] - c[None, :]) ** 2
    cov = np.exp(-d2 / (2.0 * length ** 2)) + 1e-3 * np.eye(side * side)
    return cov * (max_eig / np.linalg.eigvalsh(cov)[-1])


@dataclass
class GaussianToy:
    x_true: np.ndarray
    A: object
    y: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray


def gaussian_toy(side=8, views=4, seed=0, length=1.5):
    """Phantom measured through a few views, with a Gaussian prior around a blurred copy."""
    rng = np.random.default_rng(seed)
    geom = build_geometry(side, SamplingPattern("uniform", views))
    A = radon_operator(geom)
    x_true = shepp_logan(side)
    Sigma = stationary_covariance(side, length)
    mu = np.full((side, side), float(x_true.mean())) + 0.05 * rng.standard_normal((side, side))
    return GaussianToy(x_true, A, A.apply(x_true), mu, Sigma)

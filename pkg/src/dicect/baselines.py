"""Filtered back-projection and plug-and-play FISTA reference reconstructions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dicect.errors import ContractError, DimensionError, DivergenceError
from dicect.geometry import Sinogram, radon_operator
from dicect.linalg import as_vec, norm

WINDOWS = ("ramlak", "hann", "cosine")


def ramp_filter(size, window="ramlak"):
    """Frequency response (length ``size``) of the band-limited ramp filter.

    Built from the spatial-domain Ram-Lak kernel so the DC term is exact.
    """
    if window not in WINDOWS:
        raise ContractError(f"unknown filter window {window!r}")
    n = np.concatenate([np.arange(1, size // 2 + 1, 2), np.arange(size // 2 - 1, 0, -2)])
    kernel = np.zeros(size)
    kernel[0] = 0.25
    kernel[1::2] = -1.0 / (np.pi * n) ** 2
    response = 2.0 * np.real(np.fft.fft(kernel))
    freq = np.fft.fftfreq(size)
    if window == "hann":
        response *= 0.5 + 0.5 * np.cos(2 * np.pi * freq)
    elif window == "cosine":
        response *= np.cos(np.pi * freq)
    return response


def filter_sinogram(data, window="ramlak"):
    n_det = data.shape[1]
    size = max(64, int(2 ** np.ceil(np.log2(2 * n_det))))
    padded = np.zeros((data.shape[0], size))
    padded[:, :n_det] = data
    spectrum = np.fft.fft(padded, axis=1) * ramp_filter(size, window)[None, :]
    return np.real(np.fft.ifft(spectrum, axis=1))[:, :n_det]


def fbp_reconstruct(y, geom=None, window="ramlak"):
    """Ramp-filter each view, back-project, scale by ``pi / (2 n_views)``."""
    if isinstance(y, Sinogram):
        geom = geom or y.geometry
        data = y.data
    else:
        data = np.asarray(y, dtype=np.float64)
    if geom is None:
        raise ContractError("fbp_reconstruct needs a geometry")
    if data.shape != geom.sino_shape:
        raise DimensionError(f"sinogram shape {data.shape} does not match geometry {geom.sino_shape}")
    filtered = filter_sinogram(data, window)
    return radon_operator(geom).apply_adjoint(filtered) * (np.pi / (2 * geom.n_views))


def power_iteration(A, iters=50):
    """Estimate ``||A^T A||`` from a fixed start vector."""
    x = np.ones(A.in_shape)
    x /= norm(x)
    lam = 0.0
    for _ in range(iters):
        x = A.apply_adjoint(A.apply(x))
        lam = norm(x)
        if lam == 0.0:
            return 0.0
        x /= lam
    return lam


@dataclass(frozen=True)
class FistaConfig:
    lam: float = 0.01
    iters: int = 100
    step: float | str = "auto"

    def __post_init__(self):
        if self.iters < 1:
            raise ContractError("iters must be >= 1")
        if self.step != "auto" and not (isinstance(self.step, (int, float)) and self.step > 0):
            raise ContractError(f"step must be positive or 'auto', got {self.step!r}")


@dataclass
class FistaResult:
    image: np.ndarray
    objective: list = field(default_factory=list)
    step: float = 0.0


def pnp_fista(y, A, denoiser_step, cfg, x0=None):
    """FISTA on ``0.5||Ax - y||^2`` with ``denoiser_step(x, step * lam)`` as the prox.

    Returns a ``FistaResult``; ``objective[k]`` is the data fidelity after
    iteration ``k`` (entry 0 is the starting point).
    """
    data = as_vec(y.data if isinstance(y, Sinogram) else y, A.out_shape, "measurements")
    step = 1.0 / (1.01 * power_iteration(A)) if cfg.step == "auto" else float(cfg.step)
    gamma = step * cfg.lam
    x = np.zeros(A.in_shape) if x0 is None else as_vec(x0, A.in_shape, "x0").copy()
    z = x.copy()
    s = 1.0

    def fidelity(u):
        r = A.apply(u) - data
        return 0.5 * float(np.vdot(r, r))

    obj = [fidelity(x)]
    limit = 10.0 * max(obj[0], np.finfo(float).tiny)
    for k in range(cfg.iters):
        grad = A.apply_adjoint(A.apply(z) - data)
        x_new = np.asarray(denoiser_step(z - step * grad, gamma), dtype=np.float64)
        s_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * s * s))
        z = x_new + ((s - 1.0) / s_new) * (x_new - x)
        x, s = x_new, s_new
        obj.append(fidelity(x))
        if not np.isfinite(obj[-1]) or obj[-1] > limit:
            raise DivergenceError(
                f"PnP-FISTA diverged (objective {obj[-1]:.3g}); try a smaller step",
                {"iteration": k})
    return FistaResult(x, obj, step)

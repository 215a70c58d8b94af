"""DDPM schedule arithmetic and analytic noise predictors.

Timesteps are 1-based; index 0 of every schedule array is the clean state
(``alpha_bar[0] == 1``, ``zeta[0] == 0``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from dicect.errors import ContractError, DimensionError, NumericalError
from dicect.linalg import as_vec

COSINE_OFFSET = 0.008


class Denoiser(Protocol):
    def predict_eps(self, x_t: np.ndarray, t: int) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    kind: str
    beta: np.ndarray  # length T + 1, beta[0] = 0

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        zeta = (1.0 - alpha_bar) / alpha_bar
        for arr in (alpha, alpha_bar, zeta):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        object.__setattr__(self, "zeta", zeta)

    @property
    def T(self):
        return len(self.beta) - 1

    def check_t(self, t, allow_zero=False):
        lo = 0 if allow_zero else 1
        if not lo <= t <= self.T:
            raise ContractError(f"timestep {t} outside [{lo}, {self.T}]")
        return int(t)


def make_schedule(T=1000, kind="linear", beta1=1e-4, betaT=0.02):
    """Linear or cosine (Nichol-Dhariwal, clipped to ``[beta1, betaT]``) schedule."""
    if T < 1:
        raise ContractError("T must be >= 1")
    if not 0 < beta1 <= betaT < 1:
        raise ContractError(f"need 0 < beta1 <= betaT < 1, got {beta1}, {betaT}")
    if kind == "linear":
        beta = np.linspace(beta1, betaT, T) if T > 1 else np.array([beta1])
    elif kind == "cosine":
        s = COSINE_OFFSET
        steps = np.arange(T + 1) / T
        f = np.cos((steps + s) / (1 + s) * np.pi / 2) ** 2
        abar = f / f[0]
        beta = np.clip(1.0 - abar[1:] / abar[:-1], beta1, betaT)
    else:
        raise ContractError(f"unknown schedule kind {kind!r}")
    return NoiseSchedule(kind, np.concatenate([[0.0], beta]))


def zeta_at(sched, t):
    """Prox penalty ``(1 - alpha_bar[t]) / alpha_bar[t]``."""
    return float(sched.zeta[sched.check_t(t)])


def forward_diffuse(x0, t, z, sched):
    """``sqrt(alpha_bar[t]) x0 + sqrt(1 - alpha_bar[t]) z``; ``t = 0`` returns ``x0``."""
    t = sched.check_t(t, allow_zero=True)
    x0 = np.asarray(x0, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x0.shape != z.shape:
        raise DimensionError(f"x0 {x0.shape} and z {z.shape} differ")
    if t == 0:
        return x0.copy()
    ab = sched.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * z


def x0_from_eps(x_t, eps, t, sched):
    """Clean estimate implied by a noise prediction."""
    t = sched.check_t(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x_t.shape != eps.shape:
        raise DimensionError(f"x_t {x_t.shape} and eps {eps.shape} differ")
    ab = sched.alpha_bar[t]
    if ab <= np.finfo(np.float64).eps:
        raise NumericalError("alpha_bar vanishes; schedule is singular", {"t": t})
    return (x_t - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)


def eps_from_x0(x_t, x0, t, sched):
    ab = sched.alpha_bar[sched.check_t(t)]
    return (x_t - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)


class GaussianMMSEDenoiser:
    """Exact MMSE noise predictor for the prior ``x0 ~ N(mu, Sigma)``.

    ``Sigma`` is diagonalised once, so each call costs two dense
    matrix-vector products.
    """

    def __init__(self, mu, Sigma, sched):
        mu = np.asarray(mu, dtype=np.float64)
        Sigma = np.asarray(Sigma, dtype=np.float64)
        n = mu.size
        if Sigma.shape != (n, n):
            raise DimensionError(f"Sigma must be {n}x{n}, got {Sigma.shape}")
        if not np.allclose(Sigma, Sigma.T, rtol=1e-12, atol=1e-14 * np.abs(Sigma).max()):
            raise ContractError("Sigma must be symmetric")
        evals, evecs = np.linalg.eigh(Sigma)
        if evals[0] <= 1e-12 * max(evals[-1], 1e-300):
            raise ContractError("Sigma is singular or not positive definite")
        self.mu = mu
        self.Sigma = Sigma
        self.sched = sched
        self._evals = evals
        self._evecs = evecs

    def posterior_mean(self, x_t, t):
        """``E[x0 | x_t]``."""
        t = self.sched.check_t(t)
        x_t = as_vec(x_t, self.mu.shape, "x_t")
        ab = self.sched.alpha_bar[t]
        gain = np.sqrt(ab) * self._evals / (ab * self._evals + (1.0 - ab))
        d = (x_t - np.sqrt(ab) * self.mu).ravel()
        return self.mu + (self._evecs @ (gain * (self._evecs.T @ d))).reshape(self.mu.shape)

    def linear_part(self, t):
        """Matrix ``M`` with ``posterior_mean(x, t) = M x + const``."""
        ab = self.sched.alpha_bar[self.sched.check_t(t)]
        gain = np.sqrt(ab) * self._evals / (ab * self._evals + (1.0 - ab))
        return (self._evecs * gain) @ self._evecs.T

    def predict_eps(self, x_t, t):
        return eps_from_x0(x_t, self.posterior_mean(x_t, t), t, self.sched)


def gaussian_mmse_denoiser(mu, Sigma, sched):
    return GaussianMMSEDenoiser(mu, Sigma, sched)


def _grad(x):
    gx = np.zeros_like(x)
    gy = np.zeros_like(x)
    gx[:, :-1] = x[:, 1:] - x[:, :-1]
    gy[:-1, :] = x[1:, :] - x[:-1, :]
    return gx, gy


def _grad_adjoint(px, py):
    out = np.zeros_like(px)
    out[:, :-1] -= px[:, :-1]
    out[:, 1:] += px[:, :-1]
    out[:-1, :] -= py[:-1, :]
    out[1:, :] += py[:-1, :]
    return out


def tv_norm(x):
    """Anisotropic total variation (sum of absolute forward differences)."""
    gx, gy = _grad(np.asarray(x, dtype=np.float64))
    return float(np.abs(gx).sum() + np.abs(gy).sum())


def tv_prox(f, weight, iters=50):
    """``argmin_x 0.5||x - f||^2 + weight * TV(x)`` by accelerated dual projection.

    The dual variable is bounded by one in each entry; FISTA is run on the
    dual with step ``1 / (8 weight^2)``.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2:
        raise DimensionError("tv_prox expects a 2-D image")
    if weight <= 0:
        return f.copy()
    px = np.zeros_like(f)
    py = np.zeros_like(f)
    qx, qy = px, py
    s = 1.0
    step = 1.0 / (8.0 * weight)
    for _ in range(iters):
        gx, gy = _grad(f - weight * _grad_adjoint(qx, qy))
        nx = np.clip(qx + step * gx, -1.0, 1.0)
        ny = np.clip(qy + step * gy, -1.0, 1.0)
        s_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * s * s))
        m = (s - 1.0) / s_new
        qx = nx + m * (nx - px)
        qy = ny + m * (ny - py)
        px, py, s = nx, ny, s_new
    return f - weight * _grad_adjoint(px, py)


class TVProxDenoiser:
    """Noise predictor whose clean estimate is a TV prox of a rescaled ``x_t``.

    By default the prox input is ``x_t / sqrt(alpha_bar)``. That map has
    gain ``1 / sqrt(alpha_bar)``, which is large at high noise and makes the
    consensus iteration expansive there. With ``prior_var`` set, the prox
    input is instead the posterior mean of ``x0`` under the Gaussian prior
    ``N(prior_mean, prior_var I)``, whose gain stays below one for
    ``prior_var <= 2``. The prox strength is ``lambda_tv * sqrt(1 - alpha_bar)``
    either way.
    """

    def __init__(self, lambda_tv, inner_iters, sched, prior_var=None, prior_mean=0.0):
        if lambda_tv <= 0:
            raise ContractError("lambda_tv must be positive")
        if prior_var is not None and prior_var <= 0:
            raise ContractError("prior_var must be positive")
        self.lambda_tv = float(lambda_tv)
        self.inner_iters = int(inner_iters)
        self.sched = sched
        self.prior_var = prior_var
        self.prior_mean = float(prior_mean)

    def rescale(self, x_t, t):
        ab = self.sched.alpha_bar[self.sched.check_t(t)]
        x_t = np.asarray(x_t, dtype=np.float64)
        if self.prior_var is None:
            return x_t / np.sqrt(ab)
        s2, m = self.prior_var, self.prior_mean
        gain = np.sqrt(ab) * s2 / (ab * s2 + 1.0 - ab)
        return m + gain * (x_t - np.sqrt(ab) * m)

    def clean_estimate(self, x_t, t):
        ab = self.sched.alpha_bar[self.sched.check_t(t)]
        return tv_prox(self.rescale(x_t, t), self.lambda_tv * np.sqrt(1.0 - ab), self.inner_iters)

    def predict_eps(self, x_t, t):
        return eps_from_x0(x_t, self.clean_estimate(x_t, t), t, self.sched)


def tv_prox_denoiser(lambda_tv, inner_iters, sched, prior_var=None, prior_mean=0.0):
    return TVProxDenoiser(lambda_tv, inner_iters, sched, prior_var, prior_mean)

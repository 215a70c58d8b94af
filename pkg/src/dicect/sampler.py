"""Reverse-diffusion sampling with a consensus solve at every timestep."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from dicect.agents import DataConsistencyAgent, DiffusionPriorAgent
from dicect.ce import CEConfig, CEState, consensus, mann_solve
from dicect.diffusion import forward_diffuse
from dicect.errors import ContractError, NumericalError
from dicect.geometry import Sinogram
from dicect.rng import stream


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling parameters. ``P=None`` solves the data prox exactly."""

    T_steps: int = 100
    rho: float = 0.9
    K: int = 5
    P: int | None = 5
    tau1: float = 0.5
    seed: int = 0
    record_trajectory: bool = False
    fixed_point_tol: float | None = None
    warm_start_ce: bool = False
    cg_warm_start: str = "input"
    cg_tol: float | None = None

    def __post_init__(self):
        if self.T_steps < 1:
            raise ContractError("T_steps must be >= 1")
        if not 0 < self.tau1 < 1:
            raise ContractError(f"tau1 must lie in (0, 1), got {self.tau1}")
        CEConfig(self.rho, self.K, self.fixed_point_tol)

    @property
    def weights(self):
        return (self.tau1, 1.0 - self.tau1)

    @property
    def ce(self):
        return CEConfig(self.rho, self.K, self.fixed_point_tol)


@dataclass
class RunLog:
    config: dict
    timesteps: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    abs_residuals: list = field(default_factory=list)
    step_seconds: list = field(default_factory=list)
    seconds: float = 0.0
    trajectory: list = field(default_factory=list)

    def rows(self):
        """``(t, k, relative residual, absolute residual)`` per Mann step."""
        for t, res, absres in zip(self.timesteps, self.residuals, self.abs_residuals):
            for k, (r, a) in enumerate(zip(res, absres)):
                yield t, k, r, a

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "k", "residual", "abs_residual"])
            for t, k, r, a in self.rows():
                w.writerow([t, k, repr(float(r)), repr(float(a))])


def select_timesteps(T, T_steps):
    """Descending, evenly strided subsequence of ``T..1`` keeping both ends."""
    if not 1 <= T_steps <= T:
        raise ContractError(f"need 1 <= T_steps <= T, got T_steps={T_steps}, T={T}")
    if T_steps == 1:
        return [1]
    return [int(v) for v in np.round(np.linspace(T, 1, T_steps))]


def dice_reconstruct(y, A, d, sched, cfg, stream_keys=(), noise_map=None):
    """Sample a reconstruction consistent with ``y`` under the prior ``d``.

    Returns the image and a ``RunLog``. ``stream_keys`` selects independent
    random streams, e.g. per image in a batch. ``noise_map``, if given, is
    applied to every Gaussian draw (initial latent and renoising), e.g. to
    carry the noise through a change of coordinates.
    """
    draw_map = noise_map or (lambda a: a)
    data = y.data if isinstance(y, Sinogram) else np.asarray(y, dtype=np.float64)
    ts = select_timesteps(sched.T, cfg.T_steps)
    f1 = DataConsistencyAgent(data, A, cfg.P, sched, tol=cfg.cg_tol, warm_start=cfg.cg_warm_start)
    f2 = DiffusionPriorAgent(d, sched)
    agents = (f1, f2)
    init_rng = stream(cfg.seed, "init", *stream_keys)
    renoise_rng = stream(cfg.seed, "renoise", *stream_keys)

    log = RunLog(config=asdict(cfg))
    start = time.perf_counter()
    x = draw_map(init_rng.standard_normal(A.in_shape))
    v_prev = None
    for i, t in enumerate(ts):
        tick = time.perf_counter()
        if cfg.warm_start_ce and v_prev is not None:
            v0 = v_prev
        else:
            v0 = CEState.replicate(x, cfg.weights)
        v, diag = mann_solve(agents, v0, cfg.ce, t)
        v_prev = v
        x0 = consensus(v)
        if not np.all(np.isfinite(x0)):
            raise NumericalError("non-finite consensus estimate", {"t": t, "k": diag.iterations})
        t_next = ts[i + 1] if i + 1 < len(ts) else 0
        if t_next > 0:
            x = forward_diffuse(x0, t_next, draw_map(renoise_rng.standard_normal(x0.shape)), sched)
        else:
            x = x0
        log.timesteps.append(t)
        log.residuals.append(diag.residuals)
        log.abs_residuals.append(diag.abs_residuals)
        log.step_seconds.append(time.perf_counter() - tick)
        if cfg.record_trajectory:
            log.trajectory.append(x0)
    log.seconds = time.perf_counter() - start
    return x, log

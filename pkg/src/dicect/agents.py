"""The two consensus agents: a data-consistency prox and a diffusion prior map."""

from __future__ import annotations

from typing import Protocol

import numpy as np

from dicect.diffusion import x0_from_eps
from dicect.errors import ContractError, DimensionError
from dicect.geometry import Sinogram
from dicect.linalg import as_vec, cg_solve


class Agent(Protocol):
    def apply(self, v: np.ndarray, t: int) -> np.ndarray: ...


class DataConsistencyAgent:
    """``argmin_s 0.5||A s - y||^2 + zeta_t/2 ||s - v||^2`` by ``P`` CG steps.

    CG starts from ``v`` by default. ``warm_start="previous"`` starts from
    the last returned solution instead; that makes the agent stateful, so
    one instance must then not be shared between reconstructions.
    ``P=None`` selects exact mode: ``n`` steps with a tight tolerance.
    """

    def __init__(self, y, A, P, sched, tol=None, warm_start="input"):
        data = y.data if isinstance(y, Sinogram) else y
        self.y = as_vec(data, A.out_shape, "measurements")
        self.A = A
        self.sched = sched
        if P is None:
            self.P = A.dims[1]
            self.tol = 1e-14 if tol is None else tol
        else:
            if P < 1:
                raise ContractError("P must be >= 1")
            self.P = int(P)
            self.tol = 1e-10 if tol is None else tol
        if warm_start not in ("input", "previous"):
            raise ContractError(f"unknown warm_start mode {warm_start!r}")
        self.warm_start = warm_start
        self._aty = A.apply_adjoint(self.y)
        self._last = None

    def system(self, t):
        """The SPD operator and right-hand side solved at timestep ``t``."""
        z = float(self.sched.zeta[self.sched.check_t(t)])
        return self.A.normal(z), z

    def apply(self, v, t):
        v = as_vec(v, self.A.in_shape, "agent input")
        op, z = self.system(t)
        rhs = self._aty + z * v
        x0 = v if self.warm_start == "input" or self._last is None else self._last
        s, _ = cg_solve(op, rhs, x0=x0, max_iters=self.P, tol=self.tol)
        if self.warm_start == "previous":
            self._last = s
        return s


class DiffusionPriorAgent:
    """Clean-image estimate ``(v - sqrt(1 - abar_t) eps(v, t)) / sqrt(abar_t)``."""

    def __init__(self, denoiser, sched):
        self.denoiser = denoiser
        self.sched = sched

    def apply(self, v, t):
        v = np.asarray(v, dtype=np.float64)
        eps = self.denoiser.predict_eps(v, t)
        if np.shape(eps) != v.shape:
            raise DimensionError(f"denoiser returned shape {np.shape(eps)} for input {v.shape}")
        return x0_from_eps(v, eps, t, self.sched)


def data_consistency_agent(y, A, P, sched, **kwargs):
    return DataConsistencyAgent(y, A, P, sched, **kwargs)


def diffusion_prior_agent(d, sched):
    return DiffusionPriorAgent(d, sched)

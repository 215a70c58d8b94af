"""Consensus equilibrium for N agents.

A state stacks one vector per agent. ``G_tau`` replaces every block with
the weighted mean, and the equilibrium is a fixed point of
``Omega = (2 G_tau - I)(2 F - I)``, found by Mann iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dicect.errors import ContractError, DimensionError, NumericalError

RESIDUAL_FLOOR = 1e-12


@dataclass(frozen=True)
class CEState:
    blocks: tuple
    weights: tuple

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=np.float64) for b in self.blocks)
        weights = tuple(float(w) for w in self.weights)
        if len(blocks) != len(weights) or not blocks:
            raise DimensionError(f"{len(blocks)} blocks but {len(weights)} weights")
        if any(b.shape != blocks[0].shape for b in blocks):
            raise DimensionError("all blocks must share one shape")
        if any(w <= 0 for w in weights):
            raise ContractError(f"weights must be positive, got {weights}")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ContractError(f"weights must sum to one, got {sum(weights)!r}")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def replicate(cls, x, weights):
        x = np.asarray(x, dtype=np.float64)
        return cls(tuple(x.copy() for _ in weights), weights)

    def with_blocks(self, blocks):
        return CEState(tuple(blocks), self.weights)

    def norm(self):
        return math.sqrt(sum(float(np.vdot(b, b)) for b in self.blocks))

    def stacked(self):
        """The blocks concatenated into one flat vector."""
        return np.concatenate([b.ravel() for b in self.blocks])


@dataclass(frozen=True)
class CEConfig:
    rho: float = 0.9
    K: int = 5
    fixed_point_tol: float | None = None

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ContractError(f"rho must lie in (0, 1), got {self.rho}")
        if self.K < 1:
            raise ContractError(f"K must be >= 1, got {self.K}")


@dataclass
class MannDiagnostics:
    """Per-step fixed-point residuals, relative to ``||v||`` and absolute."""

    residuals: list = field(default_factory=list)
    abs_residuals: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.residuals)


def stacked_F(agents, state, t):
    if len(agents) != len(state.blocks):
        raise DimensionError(f"{len(agents)} agents for {len(state.blocks)} blocks")
    return state.with_blocks(agent.apply(v, t) for agent, v in zip(agents, state.blocks))


def consensus(state):
    """Weighted mean ``sum_i tau_i v_i``."""
    out = np.zeros_like(state.blocks[0])
    for w, b in zip(state.weights, state.blocks):
        out += w * b
    return out


def G_tau(state):
    mean = consensus(state)
    return state.with_blocks(mean.copy() for _ in state.blocks)


def _reflect(image, state):
    return state.with_blocks(2.0 * a - b for a, b in zip(image.blocks, state.blocks))


def omega(agents, state, t):
    """``(2 G_tau - I)(2 F - I)`` applied to ``state``."""
    w = _reflect(stacked_F(agents, state, t), state)
    return _reflect(G_tau(w), w)


def fixed_point_residual(state, image):
    """``(||image - state||, ||image - state|| / max(||state||, 1e-12))``."""
    diff = math.sqrt(sum(float(np.vdot(a - b, a - b)) for a, b in zip(image.blocks, state.blocks)))
    return diff, diff / max(state.norm(), RESIDUAL_FLOOR)


def mann_solve(agents, v0, cfg, t):
    """Run ``v <- (1 - rho) v + rho Omega(v)`` for ``cfg.K`` steps.

    ``residuals[k]`` is ``||Omega(v_k) - v_k|| / ||v_k||`` for the iterate
    entering step ``k``. With ``cfg.fixed_point_tol`` set, iteration stops
    before the update once the relative residual falls below it.

    For nonexpansive ``Omega`` the absolute residual is non-increasing; the
    relative one need not be, since ``||v_k||`` changes too.
    """
    v = v0
    diag = MannDiagnostics()
    rho = cfg.rho
    for k in range(cfg.K):
        w = omega(agents, v, t)
        if not all(np.all(np.isfinite(b)) for b in w.blocks):
            raise NumericalError("non-finite Mann iterate", {"t": t, "k": k})
        absres, res = fixed_point_residual(v, w)
        diag.residuals.append(res)
        diag.abs_residuals.append(absres)
        if cfg.fixed_point_tol is not None and res < cfg.fixed_point_tol:
            break
        v = v.with_blocks((1.0 - rho) * a + rho * b for a, b in zip(v.blocks, w.blocks))
    return v, diag

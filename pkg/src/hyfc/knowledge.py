"""Imperfect knowledge-based one-step predictor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicalSystem, Trajectory, get_system


@dataclass(frozen=True)
class KnowledgeModel:
    """The true integrator run with a perturbed parameter.

    Lorenz uses ``b -> b (1 + epsilon)``; KS scales the ``y_xx`` coefficient
    by ``(1 + epsilon)``. ``epsilon = 0`` reproduces the truth exactly.
    """

    system: str = "lorenz"
    epsilon: float = 0.0
    dt: float | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        get_system(self.system)

    @property
    def dynamics(self) -> DynamicalSystem:
        return get_system(self.system)

    @property
    def step_dt(self) -> float:
        return self.dynamics.dt if self.dt is None else self.dt

    @property
    def dim(self) -> int:
        return self.dynamics.dim

    def __call__(self, u) -> np.ndarray:
        return k_step(self, u)


def k_step(model: KnowledgeModel, u) -> np.ndarray:
    """``K[u]``: one ``dt`` step of the perturbed model (batched over leading axes)."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != model.dim:
        raise ValueError(f"{model.system} state has {model.dim} components, got {u.shape[-1]}")
    return model.dynamics.step(u, model.step_dt, model.epsilon)


def k_forecast(model: KnowledgeModel, u0, steps: int) -> Trajectory:
    """Iterate ``K`` from ``u0``; sample 0 is ``u0`` itself."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    u = np.asarray(u0, dtype=float)
    out = np.empty((steps + 1, u.shape[-1]))
    out[0] = u
    for i in range(1, steps + 1):
        out[i] = u = k_step(model, u)
    return Trajectory(out, model.step_dt, 0.0, model.system, None, model.epsilon)

"""Ground-truth dynamical systems: Lorenz-63 and Kuramoto-Sivashinsky.

Both integrators accept a single state of shape ``(M,)`` or a batch of
states of shape ``(B, M)``; the last axis is always the state axis.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np


class IntegrationBlowupError(RuntimeError):
    """Raised when an integrator leaves the region where the dynamics live."""


LORENZ_BLOWUP = 1e6
LORENZ_MAX_SUBSTEP = 0.01
KS_BLOWUP = 1e3


@dataclass(frozen=True)
class LorenzParams:
    a: float = 10.0
    b: float = 28.0
    c: float = 8.0 / 3.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise ValueError(f"Lorenz parameters must be positive, got {self}")

    def perturbed(self, epsilon: float) -> "LorenzParams":
        """Copy with ``b`` replaced by ``b * (1 + epsilon)``."""
        return LorenzParams(self.a, self.b * (1.0 + epsilon), self.c)

    def fixed_points(self) -> np.ndarray:
        s = math.sqrt(self.c * (self.b - 1.0))
        return np.array([[0.0, 0.0, 0.0], [s, s, self.b - 1.0], [-s, -s, self.b - 1.0]])


@dataclass(frozen=True)
class KSParams:
    L: float = 35.0
    Q: int = 64
    dealias: bool = False

    def __post_init__(self):
        if self.Q < 16 or self.Q % 2:
            raise ValueError(f"Q must be even and >= 16, got {self.Q}")
        if self.L <= 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def dx(self) -> float:
        return self.L / self.Q

    @property
    def grid(self) -> np.ndarray:
        # grid points L/Q, 2L/Q, ..., L
        return self.dx * np.arange(1, self.Q + 1)


# --------------------------------------------------------------------------
# Lorenz


def _check_finite(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if not np.all(np.isfinite(state)):
        raise ValueError("state contains non-finite values")
    return state


def lorenz_derivative(state, params: LorenzParams = LorenzParams()) -> np.ndarray:
    """Right-hand side of the Lorenz equations."""
    u = _check_finite(state)
    if u.shape[-1] != 3:
        raise ValueError(f"Lorenz state must have 3 components, got shape {u.shape}")
    return _lorenz_rhs(u, params.a, params.b, params.c)


def _lorenz_rhs(u, a, b, c):
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    return np.stack([a * (y - x), b * x - y - x * z, x * y - c * z], axis=-1)


def lorenz_step(state, params: LorenzParams = LorenzParams(), dt: float = 0.1,
                n_sub: int | None = None) -> np.ndarray:
    """Advance by exactly ``dt`` with ``n_sub`` classical RK4 substeps.

    By default the substep is at most ``LORENZ_MAX_SUBSTEP`` (10 substeps
    per 0.1 sampling interval), so splitting ``dt`` into pieces reproduces
    the same substep sequence.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_sub is None:
        n_sub = max(1, math.ceil(dt / LORENZ_MAX_SUBSTEP - 1e-9))
    u = _check_finite(state)
    if u.shape[-1] != 3:
        raise ValueError(f"Lorenz state must have 3 components, got shape {u.shape}")
    a, b, c = params.a, params.b, params.c
    h = dt / n_sub
    if u.ndim == 1:
        u = np.array(_lorenz_rk4_scalar(*u.tolist(), a, b, c, h, n_sub))
    else:
        u = _lorenz_rk4_batch(u, a, b, c, h, n_sub)
    if not np.all(np.abs(u) <= LORENZ_BLOWUP):
        raise IntegrationBlowupError("Lorenz integration diverged")
    return u


def _lorenz_rk4_batch(u, a, b, c, h, n_sub):
    for _ in range(n_sub):
        k1 = _lorenz_rhs(u, a, b, c)
        k2 = _lorenz_rhs(u + 0.5 * h * k1, a, b, c)
        k3 = _lorenz_rhs(u + 0.5 * h * k2, a, b, c)
        k4 = _lorenz_rhs(u + h * k3, a, b, c)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u


def _lorenz_rk4_scalar(x, y, z, a, b, c, h, n_sub):
    # plain floats: numpy call overhead dominates for a single 3-vector
    h2 = 0.5 * h
    h6 = h / 6.0
    for _ in range(n_sub):
        dx1 = a * (y - x); dy1 = b * x - y - x * z; dz1 = x * y - c * z
        x2 = x + h2 * dx1; y2 = y + h2 * dy1; z2 = z + h2 * dz1
        dx2 = a * (y2 - x2); dy2 = b * x2 - y2 - x2 * z2; dz2 = x2 * y2 - c * z2
        x3 = x + h2 * dx2; y3 = y + h2 * dy2; z3 = z + h2 * dz2
        dx3 = a * (y3 - x3); dy3 = b * x3 - y3 - x3 * z3; dz3 = x3 * y3 - c * z3
        x4 = x + h * dx3; y4 = y + h * dy3; z4 = z + h * dz3
        dx4 = a * (y4 - x4); dy4 = b * x4 - y4 - x4 * z4; dz4 = x4 * y4 - c * z4
        x = x + h6 * (dx1 + 2.0 * dx2 + 2.0 * dx3 + dx4)
        y = y + h6 * (dy1 + 2.0 * dy2 + 2.0 * dy3 + dy4)
        z = z + h6 * (dz1 + 2.0 * dz2 + 2.0 * dz3 + dz4)
        if not (abs(x) <= LORENZ_BLOWUP and abs(y) <= LORENZ_BLOWUP and abs(z) <= LORENZ_BLOWUP):
            break
    return x, y, z


# --------------------------------------------------------------------------
# Kuramoto-Sivashinsky


@dataclass(frozen=True)
class _ETDRK4Coefficients:
    E: np.ndarray
    E2: np.ndarray
    Qh: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    g: np.ndarray


@functools.lru_cache(maxsize=64)
def _ks_coefficients(params: KSParams, dt: float, epsilon: float) -> _ETDRK4Coefficients:
    # Kassam & Trefethen contour-integral evaluation of the phi-functions.
    k = 2.0 * np.pi * np.fft.rfftfreq(params.Q, d=params.dx)
    lin = (1.0 + epsilon) * k**2 - k**4
    n_roots = 32
    roots = np.exp(1j * np.pi * (np.arange(1, n_roots + 1) - 0.5) / n_roots)
    LR = dt * lin[:, None] + roots[None, :]
    eLR = np.exp(LR)
    Qh = dt * np.real(np.mean((np.exp(LR / 2) - 1.0) / LR, axis=1))
    f1 = dt * np.real(np.mean((-4.0 - LR + eLR * (4.0 - 3.0 * LR + LR**2)) / LR**3, axis=1))
    f2 = dt * np.real(np.mean((2.0 + LR + eLR * (LR - 2.0)) / LR**3, axis=1))
    f3 = dt * np.real(np.mean((-4.0 - 3.0 * LR - LR**2 + eLR * (4.0 - LR)) / LR**3, axis=1))
    g = -0.5j * k
    g[-1] = 0.0  # odd derivative of the Nyquist mode
    if params.dealias:
        g[np.arange(k.size) > params.Q // 3] = 0.0
    return _ETDRK4Coefficients(np.exp(dt * lin), np.exp(dt * lin / 2), Qh, f1, f2, f3, g)


def ks_step(state, params: KSParams = KSParams(), dt: float = 0.25, epsilon: float = 0.0,
            n_sub: int = 1) -> np.ndarray:
    """Advance the (optionally perturbed) KS field by ``dt``.

    Solves ``y_t = -y y_x - (1 + epsilon) y_xx - y_xxxx`` on the periodic
    grid with Fourier collocation in space and ETDRK4 in time, using
    ``n_sub`` equal internal steps.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    y = _check_finite(state)
    if y.shape[-1] != params.Q:
        raise ValueError(f"KS state must have {params.Q} components, got shape {y.shape}")
    c = _ks_coefficients(params, float(dt) / n_sub, float(epsilon))
    Q = params.Q

    def nonlinear(v):
        return c.g * np.fft.rfft(np.fft.irfft(v, n=Q, axis=-1) ** 2, axis=-1)

    v = np.fft.rfft(y, axis=-1)
    for _ in range(n_sub):
        Nv = nonlinear(v)
        a = c.E2 * v + c.Qh * Nv
        Na = nonlinear(a)
        b = c.E2 * v + c.Qh * Na
        Nb = nonlinear(b)
        cc = c.E2 * a + c.Qh * (2.0 * Nb - Nv)
        Nc = nonlinear(cc)
        v = c.E * v + Nv * c.f1 + 2.0 * (Na + Nb) * c.f2 + Nc * c.f3
    out = np.fft.irfft(v, n=Q, axis=-1)
    if not np.all(np.abs(out) <= KS_BLOWUP):
        raise IntegrationBlowupError("KS integration diverged")
    return out


# --------------------------------------------------------------------------
# System registry


@dataclass(frozen=True)
class DynamicalSystem:
    """A named flow sampled at a fixed interval.

    ``step(state, dt, epsilon)`` advances one sampling interval; ``epsilon``
    is the model-error parameter (0 for the true system).
    """

    name: str
    dim: int
    dt: float
    step: Callable[[np.ndarray, float, float], np.ndarray]
    initial_state: Callable[[np.random.Generator], np.ndarray]
    params: object = None


def lorenz_system(params: LorenzParams = LorenzParams(), dt: float = 0.1,
                  n_sub: int | None = None) -> DynamicalSystem:
    def step(state, dt=dt, epsilon=0.0):
        p = params.perturbed(epsilon) if epsilon else params
        return lorenz_step(state, p, dt, n_sub=n_sub)

    return DynamicalSystem("lorenz", 3, dt, step, lambda rng: rng.uniform(-1.0, 1.0, 3), params)


def ks_system(params: KSParams = KSParams(), dt: float = 0.25) -> DynamicalSystem:
    def step(state, dt=dt, epsilon=0.0):
        return ks_step(state, params, dt, epsilon)

    def initial_state(rng):
        y = rng.uniform(-1.0, 1.0, params.Q)
        return y - y.mean()

    return DynamicalSystem("ks", params.Q, dt, step, initial_state, params)


_REGISTRY: dict[str, DynamicalSystem] = {}


def register_system(system: DynamicalSystem) -> None:
    _REGISTRY[system.name] = system


def get_system(system: str | DynamicalSystem) -> DynamicalSystem:
    if isinstance(system, DynamicalSystem):
        return system
    try:
        return _REGISTRY[system]
    except KeyError:
        raise KeyError(f"unknown system {system!r}; known: {sorted(_REGISTRY)}") from None


register_system(lorenz_system())
register_system(ks_system())

# Largest Lyapunov exponents used for reporting in Lyapunov units. KS is the
# reference value for L=35, Q=64 (estimate_lyapunov gives 0.068); Lorenz is our own result
# (duration 20000, seed 0), see tests/test_dynamics.py.
LYAPUNOV_EXPONENTS = {"lorenz": 0.9053, "ks": 0.07}


def lyapunov_exponent(system: str | DynamicalSystem) -> float:
    return LYAPUNOV_EXPONENTS[get_system(system).name]


# --------------------------------------------------------------------------
# Trajectories


@dataclass
class Trajectory:
    """Uniformly sampled time series, one row per sample."""

    samples: np.ndarray
    dt: float
    t0: float = 0.0
    system: str | None = None
    seed: int | None = None
    epsilon: float = 0.0
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2-D array (n_samples, M)")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def segment(self, start: int, stop: int | None = None) -> "Trajectory":
        """Sub-trajectory of samples ``[start, stop)``."""
        start = range(len(self))[start] if len(self) else 0
        return Trajectory(self.samples[start:stop], self.dt, self.t0 + start * self.dt,
                          self.system, self.seed, self.epsilon)

    def to_csv(self, path) -> None:
        header = (f"# system={self.system} dt={self.dt!r} M={self.dim} "
                  f"seed={self.seed} epsilon={self.epsilon!r}")
        with open(path, "w") as fh:
            fh.write(header + "\n")
            np.savetxt(fh, self.samples, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        path = Path(path)
        with open(path) as fh:
            first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing trajectory header line")
        meta = dict(tok.split("=", 1) for tok in first[1:].split())
        samples = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        if samples.shape[1] != int(meta["M"]):
            raise ValueError(f"{path}: header says M={meta['M']} but rows have {samples.shape[1]} columns")
        seed = None if meta.get("seed") in (None, "None") else int(meta["seed"])
        system = None if meta.get("system") in (None, "None") else meta["system"]
        return cls(samples, float(meta["dt"]), 0.0, system, seed, float(meta.get("epsilon", 0.0)))


def generate_trajectory(system: str | DynamicalSystem, length: float, dt: float | None = None,
                        epsilon: float = 0.0, seed: int = 0, spinup: float = 100.0) -> Trajectory:
    """Sample ``floor(length / dt) + 1`` states from the attractor.

    Starts from a seeded random initial condition and discards ``spinup``
    time units before recording.
    """
    sys_ = get_system(system)
    dt = sys_.dt if dt is None else dt
    if length < dt:
        raise ValueError(f"length ({length}) must be >= dt ({dt})")
    rng = np.random.default_rng(seed)
    u = sys_.initial_state(rng)
    for _ in range(int(round(spinup / dt))):
        u = sys_.step(u, dt, epsilon)
    n = int(math.floor(length / dt + 1e-9)) + 1
    out = np.empty((n, sys_.dim))
    out[0] = u
    for i in range(1, n):
        out[i] = u = sys_.step(u, dt, epsilon)
    return Trajectory(out, dt, 0.0, sys_.name, seed, epsilon)


def estimate_lyapunov(system: str | DynamicalSystem, duration: float = 2000.0, *,
                      delta0: float = 1e-8, renorm_every: float = 1.0, seed: int = 0,
                      spinup: float = 100.0, epsilon: float = 0.0) -> float:
    """Largest Lyapunov exponent from two-trajectory divergence.

    A companion trajectory is kept at distance ``delta0`` from the base
    trajectory and renormalized every ``renorm_every`` time units; the
    exponent is the mean logarithmic stretch rate.
    """
    sys_ = get_system(system)
    dt = sys_.dt
    rng = np.random.default_rng(seed)
    u = sys_.initial_state(rng)
    for _ in range(int(round(spinup / dt))):
        u = sys_.step(u, dt, epsilon)
    d = rng.standard_normal(sys_.dim)
    if sys_.name == "ks":
        d -= d.mean()  # stay on the conserved-mean subspace
    v = u + delta0 * d / np.linalg.norm(d)
    steps = max(1, int(round(renorm_every / dt)))
    n_blocks = max(1, int(round(duration / (steps * dt))))
    total = 0.0
    for _ in range(n_blocks):
        for _ in range(steps):
            u = sys_.step(u, dt, epsilon)
            v = sys_.step(v, dt, epsilon)
        dist = np.linalg.norm(v - u)
        total += math.log(dist / delta0)
        v = u + (delta0 / dist) * (v - u)
    return total / (n_blocks * steps * dt)

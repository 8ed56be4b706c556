"""Synthetic quasi-Hamiltonian data with known ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .embed import StateTrajectory
from .errors import Blowup
from .hamfit import Domain, PolyHamiltonian, gauge_fix, symplectic_field
from .ingest import EventSplit, TimeSeriesMatrix
from .structcmp import sir

BLOWUP = 1e12


@dataclass(frozen=True)
class SynthScenario:
    h_true: PolyHamiltonian
    gamma: tuple[float, float] = (0.0, 0.0)
    dt: float = 0.05
    steps: int = 400
    z0: tuple[float, float] = (1.0, 0.0)
    obs_noise_sigma: float = 0.0
    lift_dim: int | None = None
    seed: int = 0
    baseline: float = 0.0  # constant added to every observed series
    t0: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "z0", tuple(float(v) for v in self.z0))
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.steps < 5:
            raise ValueError("steps must be >= 5")
        if len(self.gamma) != 2 or min(self.gamma) < 0:
            raise ValueError("gamma must hold two non-negative drag coefficients")
        if self.obs_noise_sigma < 0:
            raise ValueError("obs_noise_sigma must be >= 0")
        if self.lift_dim is not None and self.lift_dim < 2:
            raise ValueError("lift_dim must be >= 2")


def vector_field(h: PolyHamiltonian, gamma: np.ndarray, z: np.ndarray) -> np.ndarray:
    return symplectic_field(h, z) - gamma * z


def integrate(s: SynthScenario) -> StateTrajectory:
    """Classical RK4 from z0; returns ``steps`` states including the initial one."""
    gamma = np.asarray(s.gamma)
    z = np.asarray(s.z0, dtype=float)
    out = np.empty((s.steps, 2))
    out[0] = z
    h, dt = s.h_true, s.dt
    for k in range(1, s.steps):
        k1 = vector_field(h, gamma, z)
        k2 = vector_field(h, gamma, z + 0.5 * dt * k1)
        k3 = vector_field(h, gamma, z + 0.5 * dt * k2)
        k4 = vector_field(h, gamma, z + dt * k3)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > BLOWUP:
            raise Blowup(f"state magnitude exceeded {BLOWUP:g} at step {k}")
        out[k] = z
    return StateTrajectory(out, s.dt, "synthetic", t0=s.t0)


def lift_matrix(lift_dim: int, seed: int) -> np.ndarray:
    """Seeded lift_dim x 2 matrix with orthonormal columns."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((lift_dim, 2)))
    return q * np.sign(np.diag(r))


def lift(
    z: StateTrajectory,
    lift_dim: int,
    noise: float = 0.0,
    seed: int = 0,
    W: np.ndarray | None = None,
    baseline: float = 0.0,
    noise_seed: int | None = None,
) -> TimeSeriesMatrix:
    """Observe x_t = baseline + W z_t + eps_t in ``lift_dim`` dimensions."""
    if lift_dim < 2:
        raise ValueError("lift_dim must be >= 2")
    W = lift_matrix(lift_dim, seed) if W is None else np.asarray(W, dtype=float)
    if W.shape != (lift_dim, z.dim):
        raise ValueError(f"W must be {lift_dim} x {z.dim}")
    x = baseline + W @ z.states.T
    if noise > 0:
        rng = np.random.default_rng(seed if noise_seed is None else noise_seed)
        x = x + noise * rng.standard_normal(x.shape)
    ids = [f"seg{k:04d}" for k in range(lift_dim)]
    return TimeSeriesMatrix(x, ids, z.times)


def observe(s: SynthScenario, z: StateTrajectory, W: np.ndarray | None = None) -> TimeSeriesMatrix:
    """Observation of a scenario's trajectory: lifted, or the raw two states."""
    noise_seed = s.seed + 1_000_003
    if s.lift_dim is None:
        return lift(z, 2, s.obs_noise_sigma, s.seed, np.eye(2), s.baseline, noise_seed)
    return lift(z, s.lift_dim, s.obs_noise_sigma, s.seed, W, s.baseline, noise_seed)


@dataclass
class SynthPair:
    split: EventSplit
    before_states: StateTrajectory
    after_states: StateTrajectory
    before: SynthScenario
    after: SynthScenario
    meta: dict[str, Any] = field(default_factory=dict)

    def dataset(self) -> TimeSeriesMatrix:
        return self.split.joined()

    def true_domain(self, padding: float = 0.1, grid_resolution: int = 101) -> Domain:
        return Domain.bounding(
            self.before_states.states, self.after_states.states,
            padding=padding, grid_resolution=grid_resolution,
        )


def make_event_pair(before: SynthScenario, after: SynthScenario) -> SynthPair:
    """Concatenate two scenarios; the event sits at the first post-event sample.

    Both windows share the lift matrix (seeded from the before scenario) so
    they are observed through the same sensors.
    """
    if before.dt != after.dt or before.lift_dim != after.lift_dim or before.baseline != after.baseline:
        raise ValueError("scenarios must share dt, lift_dim and baseline")
    zb = integrate(before)
    t_event = before.t0 + before.steps * before.dt
    za = integrate(replace(after, t0=t_event))
    W = lift_matrix(before.lift_dim, before.seed) if before.lift_dim else None
    xb, xa = observe(before, zb, W), observe(after, za, W)
    split = EventSplit(
        TimeSeriesMatrix(xb.values, xb.segment_ids, xb.timestamps, t_event),
        TimeSeriesMatrix(xa.values, xa.segment_ids, xa.timestamps, t_event),
        t_event,
    )
    return SynthPair(split, zb, za, before, after)


def true_sir(pair: SynthPair, mode: str = "paper_literal", threshold: float = 0.07) -> float:
    """SIR of the planted Hamiltonians over the true-state bounding box."""
    dom = pair.true_domain()
    hb = gauge_fix(pair.before.h_true, dom, "zero_mean_over_domain")
    ha = gauge_fix(pair.after.h_true, dom, "zero_mean_over_domain")
    return sir(hb, ha, dom, mode, threshold, allow_frame_mismatch=True).sir


# -- ready-made scenarios ------------------------------------------------------


def quadratic(h20: float, h11: float, h02: float, h10: float = 0.0, h01: float = 0.0) -> PolyHamiltonian:
    return PolyHamiltonian(2, {(2, 0): h20, (1, 1): h11, (0, 2): h02, (1, 0): h10, (0, 1): h01})


def harmonic(omega: float = 1.0) -> PolyHamiltonian:
    return quadratic(0.5 * omega, 0.0, 0.5 * omega)


def standard_suite(obs_noise_sigma: float = 0.002, seed: int = 7) -> dict[str, SynthScenario]:
    """Small reference set used by tests and examples."""
    return {
        "harmonic": SynthScenario(harmonic(), obs_noise_sigma=obs_noise_sigma, seed=seed),
        "tilted": SynthScenario(
            quadratic(0.6, 0.2, 0.4, -0.3, 0.1), z0=(1.2, 0.4), obs_noise_sigma=obs_noise_sigma, seed=seed + 1
        ),
        "damped": SynthScenario(
            harmonic(), gamma=(0.05, 0.05), obs_noise_sigma=obs_noise_sigma, seed=seed + 2
        ),
    }


def random_quadratic(rng: np.random.Generator) -> PolyHamiltonian:
    """Positive-definite quadratic with modest linear terms (closed orbits)."""
    h20, h02 = rng.uniform(0.3, 0.8, size=2)
    h11 = rng.uniform(-0.3, 0.3) * np.sqrt(h20 * h02)
    h10, h01 = rng.uniform(-0.2, 0.2, size=2)
    return quadratic(h20, h11, h02, h10, h01)


def perturb(h: PolyHamiltonian, rng: np.random.Generator, low: float = 0.5, high: float = 0.8) -> PolyHamiltonian:
    """Scale every non-constant coefficient by 1 + s*u, u in [low, high], random sign s.

    Quadratic terms are only ever enlarged so orbits stay closed.
    """
    coeffs = dict(h.coeffs)
    for (i, j), v in h.coeffs.items():
        if i + j == 0:
            continue
        u = rng.uniform(low, high)
        sign = 1.0 if i + j == 2 else rng.choice([-1.0, 1.0])
        coeffs[(i, j)] = v * (1.0 + sign * u)
    return PolyHamiltonian(h.max_degree, coeffs)

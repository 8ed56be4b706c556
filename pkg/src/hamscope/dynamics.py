"""Velocity estimation from sampled state trajectories."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .embed import StateTrajectory
from .errors import BadWindow, TrajectoryTooShort


@dataclass(frozen=True)
class VelocityTrajectory:
    """Interior states paired with central-difference velocities (per second)."""

    states: np.ndarray
    velocities: np.ndarray
    dt: float
    t0: float = 0.0  # time of the first interior state

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=float)
        velocities = np.asarray(self.velocities, dtype=float)
        if states.ndim != 2 or states.shape != velocities.shape:
            raise ValueError("states and velocities must be matching (T-2) x d matrices")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "velocities", velocities)
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(velocities))):
            raise ValueError("non-finite states or velocities")

    def __len__(self) -> int:
        return self.states.shape[0]

    @classmethod
    def empty(cls, dim: int = 2, dt: float = 1.0) -> "VelocityTrajectory":
        return cls(np.zeros((0, dim)), np.zeros((0, dim)), dt)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))


def central_differences(z: StateTrajectory) -> VelocityTrajectory:
    """Second-order central differences at interior points; endpoints are dropped."""
    if len(z) < 3:
        raise TrajectoryTooShort(f"need >= 3 states, got {len(z)}")
    s = z.states
    vel = (s[2:] - s[:-2]) / (2.0 * z.dt)
    return VelocityTrajectory(s[1:-1].copy(), vel, z.dt, z.t0 + z.dt)


def smooth(z: StateTrajectory, window: int) -> StateTrajectory:
    """Centered moving average per component; windows are truncated at the ends."""
    n = len(z)
    if not isinstance(window, (int, np.integer)) or window < 1 or window % 2 == 0 or window > n:
        raise BadWindow(f"window must be odd and in [1, {n}], got {window!r}")
    if window == 1:
        return z
    half = window // 2
    padded = np.pad(z.states, ((half, half), (0, 0)), constant_values=np.nan)
    windows = np.lib.stride_tricks.sliding_window_view(padded, window, axis=0)
    return replace(z, states=np.nanmean(windows, axis=-1))

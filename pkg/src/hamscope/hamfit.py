"""Polynomial Hamiltonians and the least-squares fit of J grad H to velocities.

Coefficients ``h[i, j]`` multiply ``z1**i * z2**j`` for ``i + j <= max_degree``.
Parameter vectors (``theta``) list the non-constant coefficients in
``(i, j)``-lexicographic order; the constant term never enters the
dynamics and is set separately by a gauge convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

import numpy as np

from .dynamics import VelocityTrajectory
from .errors import DivergedLoss, SingularSystem

GAUGES = ("zero_at_origin", "zero_mean_over_domain")
SOLVERS = ("ridge_closed_form", "gradient_descent")
MAX_DEGREE = 6


def monomials(max_degree: int, include_constant: bool = True) -> list[tuple[int, int]]:
    """Exponent pairs with total degree <= max_degree, lexicographic."""
    out = [(i, j) for i in range(max_degree + 1) for j in range(max_degree + 1 - i)]
    return out if include_constant else out[1:]


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangle with a uniform midpoint grid."""

    z1_range: tuple[float, float]
    z2_range: tuple[float, float]
    grid_resolution: int = 101

    def __post_init__(self) -> None:
        z1 = tuple(float(v) for v in self.z1_range)
        z2 = tuple(float(v) for v in self.z2_range)
        object.__setattr__(self, "z1_range", z1)
        object.__setattr__(self, "z2_range", z2)
        if not (z1[0] < z1[1] and z2[0] < z2[1]):
            raise ValueError(f"empty domain {z1} x {z2}")
        n = self.grid_resolution
        if int(n) != n or n < 3 or n % 2 == 0:
            raise ValueError(f"grid_resolution must be an odd integer >= 3, got {n!r}")

    @classmethod
    def bounding(
        cls, *state_sets: np.ndarray, padding: float = 0.1, grid_resolution: int = 101
    ) -> "Domain":
        """Bounding box of the given T x 2 state sets, widened by ``padding`` per side."""
        pts = np.vstack([np.asarray(s, dtype=float)[:, :2] for s in state_sets])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        width = np.where(hi > lo, hi - lo, 1.0)
        lo, hi = lo - padding * width, hi + padding * width
        return cls((lo[0], hi[0]), (lo[1], hi[1]), grid_resolution)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.grid_resolution
        centers = (np.arange(n) + 0.5) / n
        (a1, b1), (a2, b2) = self.z1_range, self.z2_range
        return a1 + (b1 - a1) * centers, a2 + (b2 - a2) * centers

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell centers as two (n, n) arrays indexed [z1, z2]."""
        return np.meshgrid(*self.axes(), indexing="ij")

    @property
    def area(self) -> float:
        return (self.z1_range[1] - self.z1_range[0]) * (self.z2_range[1] - self.z2_range[0])

    @property
    def cell_area(self) -> float:
        return self.area / self.grid_resolution**2

    def contains(self, z: np.ndarray) -> bool:
        return bool(
            self.z1_range[0] <= z[0] <= self.z1_range[1]
            and self.z2_range[0] <= z[1] <= self.z2_range[1]
        )

    def with_resolution(self, n: int) -> "Domain":
        return replace(self, grid_resolution=n)

    def to_dict(self) -> dict[str, Any]:
        return {
            "z1_range": list(self.z1_range),
            "z2_range": list(self.z2_range),
            "grid_resolution": int(self.grid_resolution),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Domain":
        return cls(tuple(d["z1_range"]), tuple(d["z2_range"]), int(d.get("grid_resolution", 101)))


def _horner(C: np.ndarray, z1: Any, z2: Any) -> Any:
    """Evaluate sum C[i, j] z1^i z2^j, Horner in z2 inside Horner in z1."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    total = np.zeros(np.broadcast(z1, z2).shape)
    for i in range(C.shape[0] - 1, -1, -1):
        inner = np.zeros_like(total)
        for j in range(C.shape[1] - 1, -1, -1):
            inner = inner * z2 + C[i, j]
        total = total * z1 + inner
    return total if total.ndim else float(total)


@dataclass(frozen=True)
class PolyHamiltonian:
    max_degree: int
    coeffs: dict[tuple[int, int], float]
    domain: Domain | None = None
    gauge: str = "zero_mean_over_domain"
    frame_id: str | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.max_degree <= MAX_DEGREE:
            raise ValueError(f"max_degree must be in [0, {MAX_DEGREE}]")
        if self.gauge not in GAUGES:
            raise ValueError(f"unknown gauge {self.gauge!r}")
        full = {m: 0.0 for m in monomials(self.max_degree)}
        for (i, j), v in dict(self.coeffs).items():
            key = (int(i), int(j))
            if key not in full:
                raise ValueError(f"monomial {key} exceeds degree {self.max_degree}")
            full[key] = float(v)
        object.__setattr__(self, "coeffs", full)

    # construction ---------------------------------------------------------

    @classmethod
    def from_theta(cls, theta: Iterable[float], max_degree: int, constant: float = 0.0, **kw: Any) -> "PolyHamiltonian":
        theta = list(theta)
        mons = monomials(max_degree, include_constant=False)
        if len(theta) != len(mons):
            raise ValueError(f"expected {len(mons)} coefficients, got {len(theta)}")
        coeffs = {(0, 0): constant, **dict(zip(mons, theta))}
        return cls(max_degree, coeffs, **kw)

    def theta(self) -> np.ndarray:
        return np.array([self.coeffs[m] for m in monomials(self.max_degree, False)])

    @property
    def constant(self) -> float:
        return self.coeffs[(0, 0)]

    def coefficient_array(self) -> np.ndarray:
        C = np.zeros((self.max_degree + 1, self.max_degree + 1))
        for (i, j), v in self.coeffs.items():
            C[i, j] = v
        return C

    # evaluation -----------------------------------------------------------

    def __call__(self, z1: Any, z2: Any) -> Any:
        return _horner(self.coefficient_array(), z1, z2)

    def gradient(self, z1: Any, z2: Any) -> tuple[Any, Any]:
        C = self.coefficient_array()
        d = self.max_degree
        d1 = np.zeros_like(C)
        d2 = np.zeros_like(C)
        d1[: max(d, 0)] = C[1:] * np.arange(1, d + 1)[:, None]
        d2[:, : max(d, 0)] = C[:, 1:] * np.arange(1, d + 1)[None, :]
        return _horner(d1, z1, z2), _horner(d2, z1, z2)

    def hessian(self, z1: float, z2: float) -> np.ndarray:
        h11 = h12 = h22 = 0.0
        for (i, j), v in self.coeffs.items():
            if i >= 2:
                h11 += v * i * (i - 1) * z1 ** (i - 2) * z2**j
            if j >= 2:
                h22 += v * j * (j - 1) * z1**i * z2 ** (j - 2)
            if i >= 1 and j >= 1:
                h12 += v * i * j * z1 ** (i - 1) * z2 ** (j - 1)
        return np.array([[h11, h12], [h12, h22]])

    def grid_values(self, dom: Domain | None = None) -> np.ndarray:
        dom = dom or self.domain
        if dom is None:
            raise ValueError("no domain given")
        return self(*dom.mesh())

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_degree": self.max_degree,
            "gauge": self.gauge,
            "domain": self.domain.to_dict() if self.domain else None,
            "frame_id": self.frame_id,
            "coeffs": [{"i": i, "j": j, "value": v} for (i, j), v in sorted(self.coeffs.items())],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PolyHamiltonian":
        coeffs = {(int(c["i"]), int(c["j"])): float(c["value"]) for c in d["coeffs"]}
        if len(coeffs) != len(d["coeffs"]):
            raise ValueError("duplicate coefficient entries")
        dom = d.get("domain")
        return cls(
            int(d["max_degree"]),
            coeffs,
            Domain.from_dict(dom) if dom else None,
            d.get("gauge", "zero_mean_over_domain"),
            d.get("frame_id"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PolyHamiltonian":
        return cls.from_dict(json.loads(text))


def eval_hamiltonian(h: PolyHamiltonian, z: Any) -> Any:
    z = np.asarray(z, dtype=float)
    return h(z[..., 0], z[..., 1])


def symplectic_field(h: PolyHamiltonian, z: Any) -> np.ndarray:
    """J grad H = (dH/dz2, -dH/dz1)."""
    z = np.asarray(z, dtype=float)
    g1, g2 = h.gradient(z[..., 0], z[..., 1])
    return np.stack([np.asarray(g2, dtype=float), -np.asarray(g1, dtype=float)], axis=-1)


def gauge_fix(h: PolyHamiltonian, dom: Domain | None = None, gauge: str | None = None) -> PolyHamiltonian:
    """Set the constant term by the gauge convention (over ``dom`` if given)."""
    gauge = gauge or h.gauge
    dom = dom or h.domain
    coeffs = dict(h.coeffs)
    coeffs[(0, 0)] = 0.0
    fixed = replace(h, coeffs=coeffs, gauge=gauge, domain=dom)
    if gauge == "zero_mean_over_domain":
        if dom is None:
            raise ValueError("zero_mean_over_domain gauge needs a domain")
        coeffs[(0, 0)] = -float(np.mean(fixed.grid_values(dom)))
        fixed = replace(fixed, coeffs=coeffs)
    return fixed


# -- the fit ----------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    lam: float = 1e-3
    solver: str = "ridge_closed_form"
    gd_steps: int = 5000
    gd_learning_rate: float = 1e-2
    include_dissipation: bool = False
    max_degree: int = 2
    gauge: str = "zero_mean_over_domain"

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.gd_steps <= 0 or self.gd_learning_rate <= 0:
            raise ValueError("gradient-descent parameters must be positive")
        if not 1 <= self.max_degree <= MAX_DEGREE:
            raise ValueError(f"max_degree must be in [1, {MAX_DEGREE}]")
        if self.gauge not in GAUGES:
            raise ValueError(f"unknown gauge {self.gauge!r}")


@dataclass
class FitReport:
    hamiltonian: PolyHamiltonian
    initial_loss: float
    final_loss: float
    convergence_improvement: float
    residual_rms: np.ndarray
    n_samples: int
    solver: str
    dissipation: np.ndarray | None = None
    loss_trace: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "solver": self.solver,
            "n_samples": self.n_samples,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "convergence_improvement": self.convergence_improvement,
            "residual_rms": [float(v) for v in self.residual_rms],
            "dissipation": None if self.dissipation is None else [float(v) for v in self.dissipation],
            "hamiltonian": self.hamiltonian.to_dict(),
        }


def design_columns(states: np.ndarray, max_degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-monomial contributions to the two velocity components.

    Returns (c1, c2), each (T, P): c1 holds d/dz2 of each monomial, c2 holds
    -d/dz1.
    """
    z1, z2 = states[:, 0:1], states[:, 1:2]
    mons = monomials(max_degree, include_constant=False)
    i = np.array([m[0] for m in mons])[None, :]
    j = np.array([m[1] for m in mons])[None, :]
    c1 = np.where(j > 0, j * z1**i * z2 ** np.maximum(j - 1, 0), 0.0)
    c2 = np.where(i > 0, -i * z1 ** np.maximum(i - 1, 0) * z2**j, 0.0)
    return c1, c2


def build_design(
    vt: VelocityTrajectory, max_degree: int = 2, include_dissipation: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Linear system whose least-squares objective is the Hamiltonian loss.

    Row ``2t`` predicts the first velocity component of sample ``t`` and
    row ``2t + 1`` the second. With ``include_dissipation`` two trailing
    columns carry the linear drag ``-gamma_k z_k``. Those columns overlap the
    ``z1 z2`` monomial, so for degree >= 2 only ``gamma_1 + gamma_2`` is
    identifiable; the ridge penalty picks the split.
    """
    T = len(vt)
    c1, c2 = design_columns(vt.states, max_degree)
    if include_dissipation:
        zeros = np.zeros((T, 1))
        c1 = np.hstack([c1, -vt.states[:, 0:1], zeros])
        c2 = np.hstack([c2, zeros, -vt.states[:, 1:2]])
    A = np.empty((2 * T, c1.shape[1]))
    A[0::2] = c1
    A[1::2] = c2
    return A, vt.velocities.reshape(-1).copy()


def loss_and_grad(
    theta: np.ndarray, A: np.ndarray, b: np.ndarray, lam: float
) -> tuple[float, np.ndarray]:
    """Loss ||A theta - b||^2 / T + lam ||theta||^2 and its gradient (T = rows / 2)."""
    T = A.shape[0] // 2
    r = A @ theta - b
    loss = float(r @ r) / T + lam * float(theta @ theta)
    grad = 2.0 * (A.T @ r) / T + 2.0 * lam * theta
    return loss, grad


def solve_ridge(A: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    T = A.shape[0] // 2
    P = A.shape[1]
    if lam == 0 and np.linalg.matrix_rank(A) < P:
        raise SingularSystem(
            f"design has rank {np.linalg.matrix_rank(A)} < {P} columns and lambda = 0"
        )
    M = A.T @ A / T + lam * np.eye(P)
    return np.linalg.solve(M, A.T @ b / T)


def gradient_descent(
    A: np.ndarray, b: np.ndarray, lam: float, steps: int, lr: float
) -> tuple[np.ndarray, np.ndarray]:
    theta = np.zeros(A.shape[1])
    trace = np.empty(steps + 1)
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is checked explicitly
        for k in range(steps):
            trace[k], grad = loss_and_grad(theta, A, b, lam)
            if not np.isfinite(trace[k]):
                raise DivergedLoss(f"loss became non-finite at step {k}; lower gd_learning_rate")
            theta = theta - lr * grad
        trace[steps] = loss_and_grad(theta, A, b, lam)[0]
    if not np.isfinite(trace[steps]) or trace[steps] > trace[0]:
        raise DivergedLoss(
            f"loss rose from {trace[0]:.6g} to {trace[steps]:.6g}; lower gd_learning_rate"
        )
    return theta, trace


def fit(vt: VelocityTrajectory, cfg: FitConfig = FitConfig(), dom: Domain | None = None) -> FitReport:
    """Fit H (and optionally linear drag) to observed velocities.

    The returned Hamiltonian is gauge-fixed over ``dom``; without one, the
    padded bounding box of the sampled states is used.
    """
    if len(vt) == 0:
        raise ValueError("cannot fit an empty velocity trajectory")
    dom = dom or Domain.bounding(vt.states)
    A, b = build_design(vt, cfg.max_degree, cfg.include_dissipation)
    if cfg.solver == "ridge_closed_form":
        theta = solve_ridge(A, b, cfg.lam)
        trace = None
    else:
        theta, trace = gradient_descent(A, b, cfg.lam, cfg.gd_steps, cfg.gd_learning_rate)
    T = len(vt)
    initial = float(b @ b) / T
    final = loss_and_grad(theta, A, b, cfg.lam)[0]
    improvement = 100.0 * (initial - final) / initial if initial > 0 else 0.0
    resid = (A @ theta - b).reshape(T, 2)
    n_h = len(monomials(cfg.max_degree, False))
    h = gauge_fix(PolyHamiltonian.from_theta(theta[:n_h], cfg.max_degree, gauge=cfg.gauge), dom)
    return FitReport(
        hamiltonian=h,
        initial_loss=initial,
        final_loss=final,
        convergence_improvement=improvement,
        residual_rms=np.sqrt(np.mean(resid**2, axis=0)),
        n_samples=T,
        solver=cfg.solver,
        dissipation=theta[n_h:] if cfg.include_dissipation else None,
        loss_trace=trace,
    )

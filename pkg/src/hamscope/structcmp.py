"""Comparison of two energy landscapes over a shared domain."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Union

import numpy as np

from .errors import DegenerateReference, FrameMismatch
from .hamfit import Domain, PolyHamiltonian, gauge_fix

SIR_MODES = ("paper_literal", "dimensionless")
DEFAULT_THRESHOLD = 0.07
DEFAULT_TAU = 0.1
DEGENERATE_NORM = 1e-9
EIGEN_TOL = 1e-8

Landscape = Union[PolyHamiltonian, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def check_frames(hb: PolyHamiltonian, ha: PolyHamiltonian, allow_mismatch: bool = False) -> None:
    """Landscapes fitted in different embedding frames are not comparable."""
    if not allow_mismatch and hb.frame_id != ha.frame_id:
        raise FrameMismatch(
            f"frames differ ({hb.frame_id!r} vs {ha.frame_id!r}); override to compare anyway"
        )


def _regauge_pair(
    hb: PolyHamiltonian, ha: PolyHamiltonian, dom: Domain
) -> tuple[PolyHamiltonian, PolyHamiltonian]:
    if hb.gauge != ha.gauge:
        raise ValueError(f"gauges differ: {hb.gauge!r} vs {ha.gauge!r}")
    return gauge_fix(hb, dom), gauge_fix(ha, dom)


def _grid(h: Landscape, dom: Domain) -> np.ndarray:
    return np.asarray(h(*dom.mesh()), dtype=float) * np.ones((dom.grid_resolution,) * 2)


def landscape_distance(
    hb: PolyHamiltonian, ha: PolyHamiltonian, dom: Domain, allow_frame_mismatch: bool = False
) -> float:
    """Midpoint-rule integral of (H_before - H_after)^2 over the domain."""
    check_frames(hb, ha, allow_frame_mismatch)
    hb, ha = _regauge_pair(hb, ha, dom)
    diff = _grid(hb, dom) - _grid(ha, dom)
    return float(np.sum(diff**2) * dom.cell_area)


def norm_l2(h: Landscape, dom: Domain) -> float:
    """sqrt of the midpoint-rule integral of H^2 (no re-gauging)."""
    return float(np.sqrt(np.sum(_grid(h, dom) ** 2) * dom.cell_area))


def false_recovery_fraction(
    hb: Landscape, ha: Landscape, dom: Domain, tau: float = DEFAULT_TAU
) -> float:
    """Share of grid cells where |H_b - H_a| exceeds tau times the RMS of H_b.

    A proxy only: it counts where the landscape moved appreciably, with no
    claim to match any published false-recovery figure. Inputs are used as
    given (no re-gauging); any callable f(z1, z2) is accepted.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    gb, ga = _grid(hb, dom), _grid(ha, dom)
    if norm_l2(hb, dom) <= DEGENERATE_NORM:
        raise DegenerateReference("reference landscape is flat over the domain")
    rms = float(np.sqrt(np.mean(gb**2)))
    return float(np.mean(np.abs(gb - ga) > tau * rms))


@dataclass
class DiffGrid:
    z1: np.ndarray
    z2: np.ndarray
    h_before: np.ndarray  # indexed [z1, z2]
    h_after: np.ndarray

    @property
    def diff(self) -> np.ndarray:
        return self.h_after - self.h_before

    def write_csv(self, path: str | Path) -> None:
        Z1, Z2 = np.meshgrid(self.z1, self.z2, indexing="ij")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("z1", "z2", "h_before", "h_after", "diff"))
            for row in zip(Z1.ravel(), Z2.ravel(), self.h_before.ravel(), self.h_after.ravel(), self.diff.ravel()):
                writer.writerow([repr(float(v)) for v in row])


@dataclass
class ComparisonReport:
    distance_d: float
    norm_before: float
    sir: float
    mode: str
    threshold: float
    verdict: str
    false_recovery_fraction: float
    tau: float
    domain: Domain
    gauge: str
    diff_grid: DiffGrid = field(repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "sir": self.sir,
            "distance_d": self.distance_d,
            "norm_before": self.norm_before,
            "mode": self.mode,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "false_recovery_fraction_proxy": self.false_recovery_fraction,
            "false_recovery_note": "proxy metric (no reference formula available)",
            "false_recovery_tau": self.tau,
            "gauge": self.gauge,
            "domain": self.domain.to_dict(),
        }


def sir(
    hb: PolyHamiltonian,
    ha: PolyHamiltonian,
    dom: Domain,
    mode: str = "paper_literal",
    threshold: float = DEFAULT_THRESHOLD,
    tau: float = DEFAULT_TAU,
    allow_frame_mismatch: bool = False,
) -> ComparisonReport:
    """Structural irreversibility index and verdict for a before/after pair.

    ``paper_literal`` divides the squared-difference integral by the L2 norm
    of H_before; ``dimensionless`` divides its square root instead.
    """
    if mode not in SIR_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    check_frames(hb, ha, allow_frame_mismatch)
    gb, ga = _regauge_pair(hb, ha, dom)
    d = landscape_distance(gb, ga, dom, allow_frame_mismatch=True)
    ref = norm_l2(gb, dom)
    if ref <= DEGENERATE_NORM:
        raise DegenerateReference(f"||H_before|| = {ref:.3g}; SIR undefined for a flat reference")
    index = d / ref if mode == "paper_literal" else float(np.sqrt(d)) / ref
    ax1, ax2 = dom.axes()
    return ComparisonReport(
        distance_d=d,
        norm_before=ref,
        sir=index,
        mode=mode,
        threshold=threshold,
        verdict="irreversible" if index > threshold else "reversible",
        false_recovery_fraction=false_recovery_fraction(gb, ga, dom, tau),
        tau=tau,
        domain=dom,
        gauge=gb.gauge,
        diff_grid=DiffGrid(ax1, ax2, _grid(gb, dom), _grid(ga, dom)),
    )


# -- critical points --------------------------------------------------------


@dataclass(frozen=True)
class CriticalPoint:
    z: tuple[float, float]
    kind: str  # minimum | maximum | saddle | degenerate
    eigenvalues: tuple[float, float]
    energy: float

    def to_dict(self) -> dict[str, Any]:
        return {"z": list(self.z), "kind": self.kind, "eigenvalues": list(self.eigenvalues), "energy": self.energy}


def classify(hessian: np.ndarray) -> tuple[str, tuple[float, float]]:
    eig = np.linalg.eigvalsh(hessian)
    if np.any(np.abs(eig) < EIGEN_TOL):
        kind = "degenerate"
    elif np.all(eig > 0):
        kind = "minimum"
    elif np.all(eig < 0):
        kind = "maximum"
    else:
        kind = "saddle"
    return kind, (float(eig[0]), float(eig[1]))


def _point(h: PolyHamiltonian, z: np.ndarray) -> CriticalPoint:
    kind, eig = classify(h.hessian(z[0], z[1]))
    return CriticalPoint((float(z[0]), float(z[1])), kind, eig, float(h(z[0], z[1])))


def _newton(h: PolyHamiltonian, z: np.ndarray, max_iter: int = 50, tol: float = 1e-10) -> np.ndarray | None:
    for _ in range(max_iter):
        g = np.array(h.gradient(z[0], z[1]), dtype=float)
        if np.linalg.norm(g) < tol:
            return z
        try:
            z = z - np.linalg.solve(h.hessian(z[0], z[1]), g)
        except np.linalg.LinAlgError:
            return None
    g = np.array(h.gradient(z[0], z[1]), dtype=float)
    return z if np.linalg.norm(g) < tol else None


def fixed_point_analysis(h: PolyHamiltonian, dom: Domain) -> list[CriticalPoint]:
    """Critical points of H inside ``dom``, classified by Hessian eigenvalues.

    Quadratics are solved exactly. Higher degrees seed Newton's method from
    grid-local minima of |grad H|.
    """
    if h.max_degree <= 2:
        c = h.coeffs
        hess = np.array(
            [[2 * c.get((2, 0), 0.0), c.get((1, 1), 0.0)], [c.get((1, 1), 0.0), 2 * c.get((0, 2), 0.0)]]
        )
        g0 = np.array([c.get((1, 0), 0.0), c.get((0, 1), 0.0)])
        if abs(np.linalg.det(hess)) > EIGEN_TOL**2:
            z = np.linalg.solve(hess, -g0)
            return [_point(h, z)] if dom.contains(z) else []
        # singular Hessian: a line of critical points or none at all
        z, *_ = np.linalg.lstsq(hess, -g0, rcond=None)
        if np.linalg.norm(hess @ z + g0) < 1e-10 and dom.contains(z):
            return [_point(h, z)]
        return []
    Z1, Z2 = dom.mesh()
    g1, g2 = h.gradient(Z1, Z2)
    mag = np.hypot(g1, g2)
    padded = np.pad(mag, 1, constant_values=np.inf)
    n = dom.grid_resolution
    neighbours = np.stack(
        [padded[1 + di : 1 + di + n, 1 + dj : 1 + dj + n] for di in (-1, 0, 1) for dj in (-1, 0, 1) if di or dj]
    )
    seeds = np.argwhere(mag <= neighbours.min(axis=0))
    spacing = min(np.diff(dom.z1_range)[0], np.diff(dom.z2_range)[0]) / n
    found: list[np.ndarray] = []
    for a, b in seeds:
        z = _newton(h, np.array([Z1[a, b], Z2[a, b]]))
        if z is None or not dom.contains(z):
            continue
        if all(np.linalg.norm(z - f) > 1e-3 * spacing for f in found):
            found.append(z)
    found.sort(key=lambda z: (z[0], z[1]))
    return [_point(h, z) for z in found]

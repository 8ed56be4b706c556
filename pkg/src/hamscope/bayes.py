"""Hamiltonian Monte Carlo over polynomial Hamiltonian coefficients.

The likelihood treats the velocity residuals as i.i.d. Gaussian with a
fixed scale ``noise_sigma``; the prior is isotropic Gaussian. Because the
model is linear in the coefficients the posterior is Gaussian too, which
gives the closed-form oracle :func:`conjugate_posterior`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dynamics import VelocityTrajectory
from .errors import NonFiniteEnergy
from .hamfit import Domain, FitConfig, build_design, monomials, solve_ridge

LogDensity = Callable[[np.ndarray], tuple[float, np.ndarray]]

REJECT_FACTOR = 0.9
DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class HmcConfig:
    leapfrog_steps: int = 20
    step_size: float = 0.05  # initial value, adapted during warmup
    warmup: int = 500
    samples: int = 2000
    seed: int = 42
    target_accept: float = 0.75
    jitter: float = 0.1  # post-warmup step sizes drawn from eps * U(1 - j, 1 + j)

    def __post_init__(self) -> None:
        if self.leapfrog_steps < 1 or self.step_size <= 0:
            raise ValueError("leapfrog_steps must be >= 1 and step_size > 0")
        if self.warmup < 0 or self.samples < 100:
            raise ValueError("warmup must be >= 0 and samples >= 100")
        if not 0 < self.target_accept < 1 or not 0 <= self.jitter < 1:
            raise ValueError("target_accept must be in (0, 1) and jitter in [0, 1)")


@dataclass
class Chain:
    draws: np.ndarray
    acceptance_rate: float
    step_size: float
    divergences: int
    warmup_step_sizes: np.ndarray = field(repr=False)


@dataclass
class Posterior:
    samples: np.ndarray  # (S, P) non-constant coefficients, monomial order
    acceptance_rate: float
    warmup: int
    noise_sigma: float
    prior_sigma: float
    max_degree: int = 2
    step_size: float = float("nan")
    divergences: int = 0
    seeds: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if not 0.0 <= self.acceptance_rate <= 1.0:
            raise ValueError("acceptance_rate must lie in [0, 1]")

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    @property
    def sd(self) -> np.ndarray:
        return self.samples.std(axis=0, ddof=1) if len(self.samples) > 1 else np.zeros(self.samples.shape[1])

    @property
    def q025(self) -> np.ndarray:
        return np.percentile(self.samples, 2.5, axis=0)

    @property
    def q975(self) -> np.ndarray:
        return np.percentile(self.samples, 97.5, axis=0)

    def ess(self) -> np.ndarray:
        return np.array([effective_sample_size(col) for col in self.samples.T])

    def mcse(self) -> np.ndarray:
        return self.sd / np.sqrt(self.ess())

    def to_dict(self) -> dict:
        mons = monomials(self.max_degree, include_constant=False)
        ess = self.ess()
        coeffs = []
        for k, (i, j) in enumerate(mons):
            coeffs.append(
                {
                    "i": i,
                    "j": j,
                    "mean": float(self.mean[k]),
                    "sd": float(self.sd[k]),
                    "q2.5": float(self.q025[k]),
                    "q97.5": float(self.q975[k]),
                    "ess": float(ess[k]),
                }
            )
        return {
            "n_samples": int(len(self.samples)),
            "warmup": self.warmup,
            "acceptance_rate": self.acceptance_rate,
            "step_size": self.step_size,
            "divergences": self.divergences,
            "noise_sigma": self.noise_sigma,
            "prior_sigma": self.prior_sigma,
            "max_degree": self.max_degree,
            "seeds": list(self.seeds),
            "coeffs": coeffs,
        }


def effective_sample_size(x: np.ndarray) -> float:
    """ESS of a single chain by Geyer's initial monotone sequence estimator."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.var(x) == 0:
        return float(n)
    centered = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spec * np.conj(spec), size)[:n] / n
    rho = acov / acov[0]
    # pair sums Gamma_k = rho_2k + rho_2k+1, truncated at the first negative and made monotone
    n_pairs = n // 2
    gamma = rho[0 : 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    stop = np.argmax(gamma < 0) if np.any(gamma < 0) else gamma.size
    gamma = np.minimum.accumulate(gamma[:stop])
    tau = -1.0 + 2.0 * float(np.sum(gamma))
    return float(n / max(tau, 1.0 / n))


def gaussian_log_density(
    A: np.ndarray, b: np.ndarray, prior_sigma: float, noise_sigma: float
) -> LogDensity:
    inv_noise = 1.0 / noise_sigma**2
    inv_prior = 1.0 / prior_sigma**2

    def logp(theta: np.ndarray) -> tuple[float, np.ndarray]:
        r = A @ theta - b
        value = -0.5 * inv_noise * float(r @ r) - 0.5 * inv_prior * float(theta @ theta)
        grad = -inv_noise * (A.T @ r) - inv_prior * theta
        return value, grad

    return logp


def conjugate_posterior(
    A: np.ndarray, b: np.ndarray, prior_sigma: float, noise_sigma: float
) -> tuple[np.ndarray, np.ndarray]:
    """Exact posterior mean and covariance of the linear-Gaussian model."""
    precision = A.T @ A / noise_sigma**2 + np.eye(A.shape[1]) / prior_sigma**2
    cov = np.linalg.inv(precision)
    return cov @ (A.T @ b) / noise_sigma**2, cov


def leapfrog(
    theta: np.ndarray, momentum: np.ndarray, logp: LogDensity, step_size: float, n_steps: int
) -> tuple[np.ndarray, np.ndarray, float]:
    """Integrate Hamilton's equations for U = -log p with unit mass.

    Returns the new position, momentum and log density at the new position.
    """
    theta = theta.copy()
    _, grad = logp(theta)
    p = momentum + 0.5 * step_size * grad
    for k in range(n_steps):
        theta = theta + step_size * p
        value, grad = logp(theta)
        if k < n_steps - 1:
            p = p + step_size * grad
    p = p + 0.5 * step_size * grad
    return theta, p, value


def run_chain(logp: LogDensity, init: np.ndarray, cfg: HmcConfig = HmcConfig()) -> Chain:
    """Single HMC chain with multiplicative step-size adaptation during warmup."""
    rng = np.random.default_rng(cfg.seed)
    accept_factor = REJECT_FACTOR ** (-(1.0 - cfg.target_accept) / cfg.target_accept)
    theta = np.asarray(init, dtype=float).copy()
    current, _ = logp(theta)
    if not math.isfinite(current):
        raise NonFiniteEnergy("initial point has non-finite log density")
    eps = cfg.step_size
    warm_eps = np.empty(cfg.warmup)
    draws = np.empty((cfg.samples, theta.size))
    accepted = diverged = 0
    for it in range(cfg.warmup + cfg.samples):
        sampling = it >= cfg.warmup
        if it == cfg.warmup and cfg.warmup > 0:
            eps = float(np.exp(np.mean(np.log(warm_eps[cfg.warmup // 2 :]))))
        step = eps * rng.uniform(1 - cfg.jitter, 1 + cfg.jitter) if sampling else eps
        p0 = rng.standard_normal(theta.size)
        with np.errstate(over="ignore", invalid="ignore"):
            prop, p1, value = leapfrog(theta, p0, logp, step, cfg.leapfrog_steps)
            log_ratio = (value - 0.5 * float(p1 @ p1)) - (current - 0.5 * float(p0 @ p0))
        u = rng.uniform()
        if not math.isfinite(log_ratio) or log_ratio < -DIVERGENCE_THRESHOLD:
            ok = False
            diverged += sampling
        else:
            ok = math.log(u) < log_ratio
        if ok:
            theta, current = prop, value
        if sampling:
            draws[it - cfg.warmup] = theta
            accepted += ok
        else:
            eps *= accept_factor if ok else REJECT_FACTOR
            warm_eps[it] = eps
    if diverged > cfg.samples / 2:
        raise NonFiniteEnergy(
            f"{diverged} of {cfg.samples} post-warmup proposals diverged; lower step_size"
        )
    return Chain(draws, accepted / cfg.samples, eps, diverged, warm_eps)


def default_noise_sigma(vt: VelocityTrajectory, max_degree: int = 2) -> float:
    """RMS residual of the default ridge fit."""
    A, b = build_design(vt, max_degree)
    theta = solve_ridge(A, b, FitConfig().lam)
    rms = float(np.sqrt(np.mean((A @ theta - b) ** 2)))
    if not rms > 0:
        raise ValueError("ridge residual is zero; pass noise_sigma explicitly")
    return rms


def hmc_sample(
    vt: VelocityTrajectory,
    prior_sigma: float = 1.0,
    noise_sigma: float | None = None,
    cfg: HmcConfig = HmcConfig(),
    max_degree: int = 2,
    init: np.ndarray | None = None,
) -> Posterior:
    """Posterior draws of the non-constant coefficients.

    ``noise_sigma`` defaults to the RMS residual of the ridge fit; the chain
    starts from that ridge solution unless ``init`` is given. The initial step
    size is capped at the inverse square root of the largest posterior
    precision eigenvalue, so warmup starts inside the stable leapfrog range.
    """
    if prior_sigma <= 0:
        raise ValueError("prior_sigma must be > 0")
    A, b = build_design(vt, max_degree)
    if noise_sigma is None:
        if len(vt) == 0:
            raise ValueError("noise_sigma is required without data")
        noise_sigma = default_noise_sigma(vt, max_degree)
    if noise_sigma <= 0:
        raise ValueError("noise_sigma must be > 0")
    if init is None:
        init = solve_ridge(A, b, FitConfig().lam) if len(vt) else np.zeros(A.shape[1])
    precision = A.T @ A / noise_sigma**2 + np.eye(A.shape[1]) / prior_sigma**2
    stable = 1.0 / np.sqrt(np.linalg.eigvalsh(precision)[-1])
    if cfg.step_size > stable:
        cfg = replace(cfg, step_size=float(stable))
    chain = run_chain(gaussian_log_density(A, b, prior_sigma, noise_sigma), init, cfg)
    return Posterior(
        chain.draws,
        chain.acceptance_rate,
        cfg.warmup,
        float(noise_sigma),
        float(prior_sigma),
        max_degree,
        chain.step_size,
        chain.divergences,
        (cfg.seed,),
    )


def merge_posteriors(posteriors: Sequence[Posterior]) -> Posterior:
    """Pool post-warmup draws of independent chains (ordered by seed)."""
    if not posteriors:
        raise ValueError("nothing to merge")
    ordered = sorted(posteriors, key=lambda p: p.seeds)
    first = ordered[0]
    n = np.array([len(p.samples) for p in ordered], dtype=float)
    return Posterior(
        np.vstack([p.samples for p in ordered]),
        float(np.sum(n * [p.acceptance_rate for p in ordered]) / n.sum()),
        first.warmup,
        first.noise_sigma,
        first.prior_sigma,
        first.max_degree,
        float(np.mean([p.step_size for p in ordered])),
        sum(p.divergences for p in ordered),
        tuple(s for p in ordered for s in p.seeds),
    )


@dataclass
class LandscapeBands:
    z1: np.ndarray
    z2: np.ndarray
    lower: np.ndarray  # 2.5th percentile, indexed [z1, z2]
    median: np.ndarray
    upper: np.ndarray  # 97.5th percentile


def landscape_bands(
    p: Posterior, dom: Domain, gauge: str = "zero_mean_over_domain", chunk: int = 2048
) -> LandscapeBands:
    """Pointwise 2.5/50/97.5 percentile surfaces of H over the domain grid."""
    if len(p.samples) == 0:
        raise ValueError("empty posterior")
    Z1, Z2 = dom.mesh()
    z1, z2 = Z1.ravel(), Z2.ravel()
    mons = monomials(p.max_degree, include_constant=False)
    features = np.stack([z1**i * z2**j for i, j in mons], axis=1)
    if gauge == "zero_mean_over_domain":
        offsets = p.samples @ features.mean(axis=0)
    else:
        offsets = np.zeros(len(p.samples))
    out = np.empty((3, z1.size))
    for start in range(0, z1.size, chunk):
        energies = p.samples @ features[start : start + chunk].T - offsets[:, None]
        out[:, start : start + chunk] = np.percentile(energies, [2.5, 50.0, 97.5], axis=0)
    shape = Z1.shape
    ax1, ax2 = dom.axes()
    return LandscapeBands(ax1, ax2, out[0].reshape(shape), out[1].reshape(shape), out[2].reshape(shape))

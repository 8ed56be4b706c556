"""Two-stage dimensionality reduction: PCA, then exact t-SNE to the plane."""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateDistances,
    DimensionMismatch,
    PerplexityTooLarge,
    RankDeficient,
)
from .ingest import TimeSeriesMatrix

PROVENANCES = ("pca_only", "pca_tsne", "identity", "synthetic")


@dataclass(frozen=True)
class PcaModel:
    components: np.ndarray  # (d_pca, N), orthonormal rows
    mean: np.ndarray  # (N,)
    explained_variance_ratio: np.ndarray
    singular_values: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_features(self) -> int:
        return self.components.shape[1]

    def reconstruct(self, states: np.ndarray) -> np.ndarray:
        """Map T x d states back to the N x T observation space."""
        return (states @ self.components + self.mean).T

    def frame_id(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.components).tobytes())
        digest.update(np.ascontiguousarray(self.mean).tobytes())
        return "pca-" + digest.hexdigest()[:16]


@dataclass(frozen=True)
class StateTrajectory:
    """Low-dimensional states on a uniform time grid (rows are time)."""

    states: np.ndarray
    dt: float
    provenance: str = "pca_only"
    window_label: str | None = None
    frame_id: str | None = None
    t0: float = 0.0

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2:
            raise ValueError("states must be a T x d matrix")
        object.__setattr__(self, "states", states)
        if not np.all(np.isfinite(states)):
            raise ValueError("states contain non-finite entries")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))


def fit_pca(x: TimeSeriesMatrix, d_pca: int) -> PcaModel:
    """Principal directions of the T samples (columns of ``x``) via SVD.

    Each component's sign is chosen so that its largest-magnitude entry is
    positive. If the data has rank below ``d_pca`` a :class:`RankDeficient`
    warning is issued and only the achievable components are returned.
    """
    samples = x.values.T
    n_samples, n_features = samples.shape
    if not 1 <= d_pca <= min(n_samples, n_features):
        raise ValueError(f"d_pca={d_pca} outside [1, {min(n_samples, n_features)}]")
    mean = samples.mean(axis=0)
    _, s, vt = np.linalg.svd(samples - mean, full_matrices=False)
    tol = (s[0] if s.size else 0.0) * max(samples.shape) * np.finfo(float).eps
    rank = int(np.sum(s > tol))
    if rank < d_pca:
        warnings.warn(
            RankDeficient(f"requested {d_pca} components, data has rank {rank}"), stacklevel=2
        )
        d_pca = rank
    comps = vt[:d_pca].copy()
    pivots = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(d_pca), pivots])
    comps *= signs[:, None]
    total = float(np.sum(s**2))
    ratio = s[:d_pca] ** 2 / total if total > 0 else np.zeros(d_pca)
    return PcaModel(comps, mean, ratio, s[:d_pca].copy())


def project(model: PcaModel, x: TimeSeriesMatrix, window_label: str | None = None) -> StateTrajectory:
    if x.n_segments != model.n_features:
        raise DimensionMismatch(
            f"model expects {model.n_features} segments, got {x.n_segments}"
        )
    states = (x.values.T - model.mean) @ model.components.T
    return StateTrajectory(
        states, x.dt, "pca_only", window_label, model.frame_id(), float(x.timestamps[0])
    )


# -- t-SNE ------------------------------------------------------------------


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    learning_rate: float = 200.0
    n_iter: int = 1000
    seed: int = 42
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    initial_momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    init: str = "pca"  # or "random"
    min_gain: float = 0.01

    def check(self, n: int) -> None:
        if n < 4:
            raise ValueError(f"t-SNE needs at least 4 points, got {n}")
        if self.perplexity <= 0 or self.perplexity > (n - 1) / 3:
            raise PerplexityTooLarge(
                f"perplexity {self.perplexity} exceeds (n-1)/3 = {(n - 1) / 3:.4g} for n={n}"
            )
        if self.init not in ("pca", "random"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class TsneResult:
    embedding: np.ndarray
    kl_trace: np.ndarray  # kl_trace[k] = KL(P||Q) after k updates, against the true P
    P: np.ndarray = field(repr=False)
    exaggeration_iters: int = 0

    @property
    def kl_after_exaggeration(self) -> float:
        return float(self.kl_trace[min(self.exaggeration_iters, len(self.kl_trace) - 1)])

    @property
    def final_kl(self) -> float:
        return float(self.kl_trace[-1])


def squared_distances(points: np.ndarray, block: int = 256) -> np.ndarray:
    """Pairwise squared Euclidean distances.

    Computed from explicit coordinate differences rather than a Gram matrix
    so that identical points get bitwise-identical rows.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    out = np.empty((n, n))
    for start in range(0, n, block):
        diff = points[start : start + block, None, :] - points[None, :, :]
        out[start : start + block] = np.sum(diff * diff, axis=-1)
    return out


def _row_affinities(dist_row: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Conditional probabilities and Shannon entropy (bits) for one bandwidth."""
    shifted = dist_row - dist_row.min()
    p = np.exp(-shifted * beta)
    # sorted sums keep the result independent of neighbour order
    total = np.sort(p).sum()
    p /= total
    entropy_nats = beta * np.sort(shifted * p).sum() + np.log(total)
    return p, entropy_nats / np.log(2.0)


def conditional_affinities(
    sq_dist: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic Gaussian affinities with per-point bandwidth by bisection.

    The precision of each row is bisected until the entropy (in bits) is
    within ``tol`` of ``log2(perplexity)`` or ``max_iter`` steps elapse.
    Returns the matrix and the per-row precisions.
    """
    n = sq_dist.shape[0]
    target = np.log2(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        row = np.delete(sq_dist[i], i)
        lo, hi = 0.0, np.inf
        positive = row[row > 0]
        beta = 1.0 / np.median(positive) if positive.size else 1.0
        p, h = _row_affinities(row, beta)
        for _ in range(max_iter):
            diff = h - target
            if abs(diff) < tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
            p, h = _row_affinities(row, beta)
        P[i, :i] = p[:i]
        P[i, i + 1 :] = p[i:]
        betas[i] = beta
    return P, betas


def joint_probabilities(points: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized affinities P summing to one."""
    sq = squared_distances(np.asarray(points, dtype=float))
    if not np.any(sq > 0):
        raise DegenerateDistances("all pairwise distances are zero")
    cond, _ = conditional_affinities(sq, perplexity)
    P = cond + cond.T
    P /= P.sum()
    return P


def _student_t(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Heavy-tailed affinities of the layout plus per-axis coordinate differences."""
    diffs = [c[:, None] - c[None, :] for c in Y.T]
    num = 1.0 / (1.0 + sum(d * d for d in diffs))
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    return num, Q, diffs


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))))


def _initial_layout(points: np.ndarray, cfg: TsneConfig) -> np.ndarray:
    n = points.shape[0]
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        return 1e-4 * rng.standard_normal((n, 2))
    centered = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    lead = vt[:2]
    if lead.shape[0] < 2:
        lead = np.vstack([lead, np.zeros((2 - lead.shape[0], points.shape[1]))])
    pivots = np.argmax(np.abs(lead), axis=1)
    lead = lead * np.sign(lead[np.arange(2), pivots])[:, None]
    Y = centered @ lead.T
    sd = Y[:, 0].std()
    return 1e-4 * Y / sd if sd > 0 else Y


def run_tsne(points: np.ndarray, cfg: TsneConfig = TsneConfig()) -> TsneResult:
    """Exact O(n^2) t-SNE with early exaggeration, momentum and adaptive gains."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    cfg.check(n)
    P = joint_probabilities(points, cfg.perplexity)
    P_work = np.maximum(P * cfg.early_exaggeration, 1e-300)
    Y = _initial_layout(points, cfg)
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl = np.empty(cfg.n_iter + 1)
    for it in range(cfg.n_iter):
        if it == cfg.exaggeration_iters:
            P_work = np.maximum(P, 1e-300)
        num, Q, diffs = _student_t(Y)
        kl[it] = kl_divergence(P, Q)
        W = (P_work - Q) * num
        # explicit differences keep duplicate points on identical paths
        grad = 4.0 * np.stack([np.sum(W * d, axis=1) for d in diffs], axis=1)
        momentum = cfg.initial_momentum if it < cfg.momentum_switch else cfg.final_momentum
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, cfg.min_gain, out=gains)
        update = momentum * update - cfg.learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
    kl[cfg.n_iter] = kl_divergence(P, _student_t(Y)[1])
    return TsneResult(Y, kl, P, cfg.exaggeration_iters)


def tsne_embed(points: np.ndarray, cfg: TsneConfig = TsneConfig()) -> np.ndarray:
    return run_tsne(points, cfg).embedding


def embed_joint(
    before: StateTrajectory, after: StateTrajectory, cfg: TsneConfig = TsneConfig()
) -> tuple[StateTrajectory, StateTrajectory]:
    """Embed both windows in one t-SNE run so they share a coordinate frame."""
    if before.dim != after.dim:
        raise DimensionMismatch(f"windows have {before.dim} and {after.dim} dimensions")
    if len(before) == 0 or len(after) == 0:
        raise ValueError(f"both windows need points, got {len(before)} and {len(after)}")
    joint = np.vstack([before.states, after.states])
    Y = tsne_embed(joint, cfg)
    frame = "tsne-" + hashlib.sha256(np.ascontiguousarray(Y).tobytes()).hexdigest()[:16]
    k = len(before)
    return (
        replace(before, states=Y[:k], provenance="pca_tsne", frame_id=frame),
        replace(after, states=Y[k:], provenance="pca_tsne", frame_id=frame),
    )

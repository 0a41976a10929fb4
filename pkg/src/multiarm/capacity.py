"""Per-sample minimax aggregation of binary soft detectors.

Each detector k reports a distribution q_k over {natural, adversarial} for
one input. The aggregated detector is the mixture ``sum_k w_k q_k`` whose
weights maximise the mutual information between the detector index and the
binary prediction, i.e. the capacity-achieving input distribution of the
K x 2 channel whose rows are the q_k. That mixture minimises the worst-case
KL regret ``max_k KL(q_k || q)`` over all binary distributions q.

Everything is in nats. Probabilities entering a logarithm are clamped to
``[clamp, 1 - clamp]`` and renormalised first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np
from scipy.special import rel_entr

from multiarm.errors import DimensionError, ValidationError

DEFAULT_CLAMP = 1e-12

__all__ = [
    "DEFAULT_CLAMP",
    "SoftDecision",
    "DetectorBank",
    "MixtureWeights",
    "SolverConfig",
    "SolverResult",
    "BatchSolution",
    "kl_divergence",
    "entropy",
    "cross_entropy",
    "mutual_information",
    "mixture",
    "ba_step",
    "solve_weights",
    "solve_batch",
    "worst_case_regret",
    "decide",
]


@dataclass(frozen=True)
class SoftDecision:
    """One detector's (P(natural), P(adversarial)) for one sample."""

    p_natural: float
    p_adversarial: float

    def __post_init__(self):
        a, b = float(self.p_natural), float(self.p_adversarial)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ValidationError(f"non-finite probability pair ({a}, {b})")
        if a < 0.0 or b < 0.0 or a > 1.0 or b > 1.0:
            raise ValidationError(f"probabilities must lie in [0, 1], got ({a}, {b})")
        total = a + b
        if abs(total - 1.0) > 1e-6:
            raise ValidationError(f"probabilities must sum to 1, got {total}")
        object.__setattr__(self, "p_natural", a / total)
        object.__setattr__(self, "p_adversarial", b / total)

    @classmethod
    def from_adversarial(cls, score: float) -> SoftDecision:
        score = float(score)
        return cls(1.0 - score, score)

    def as_array(self) -> np.ndarray:
        return np.array([self.p_natural, self.p_adversarial])


@dataclass(frozen=True)
class DetectorBank:
    """The K soft decisions available for one sample, in a fixed order."""

    rows: tuple[SoftDecision, ...]
    detector_ids: tuple[str, ...] = ()

    def __post_init__(self):
        rows = tuple(self.rows)
        if len(rows) < 1:
            raise ValidationError("a detector bank needs at least one row")
        ids = tuple(str(i) for i in self.detector_ids) or tuple(f"d{k}" for k in range(len(rows)))
        if len(ids) != len(rows):
            raise DimensionError(f"{len(ids)} detector ids for {len(rows)} rows")
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate detector ids in {ids}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "detector_ids", ids)

    @classmethod
    def from_scores(cls, scores: Sequence[float], detector_ids: Sequence[str] = ()) -> DetectorBank:
        """Build a bank from per-detector P(adversarial) values."""
        return cls(tuple(SoftDecision.from_adversarial(s) for s in scores), tuple(detector_ids))

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]], detector_ids: Sequence[str] = ()) -> DetectorBank:
        return cls(tuple(SoftDecision(*p) for p in pairs), tuple(detector_ids))

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def matrix(self) -> np.ndarray:
        """K x 2 channel matrix, columns (natural, adversarial)."""
        return np.array([[r.p_natural, r.p_adversarial] for r in self.rows])


@dataclass(frozen=True, eq=False)
class MixtureWeights:
    """A probability vector over the detectors of a bank."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float).reshape(-1)
        if w.size < 1 or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be a nonempty finite vector")
        if np.any(w < 0.0):
            raise ValidationError(f"negative weight in {w}")
        total = w.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"weights must sum to 1, got {total}")
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls, k: int) -> MixtureWeights:
        return cls(np.full(k, 1.0 / k))

    def __len__(self) -> int:
        return self.w.size

    def __iter__(self):
        return iter(self.w.tolist())


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iters: int = 200_000
    clamp: float = DEFAULT_CLAMP

    def __post_init__(self):
        if not self.tol > 0:
            raise ValidationError(f"tol must be positive, got {self.tol}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValidationError(f"max_iters must be a positive integer, got {self.max_iters}")
        if not 0.0 < self.clamp < 0.5:
            raise ValidationError(f"clamp must lie in (0, 0.5), got {self.clamp}")


@dataclass(frozen=True)
class SolverResult:
    """Output of :func:`solve_weights`.

    ``history`` holds the mutual information after each iterate (starting
    with the uniform initial point) and is only filled when tracing.
    """

    weights: MixtureWeights
    mixture: SoftDecision
    capacity_nats: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True, eq=False)
class BatchSolution:
    """Vectorised counterpart of :class:`SolverResult` for N banks."""

    weights: np.ndarray  # (N, K)
    p_adversarial: np.ndarray  # (N,) mixture score
    capacity_nats: np.ndarray  # (N,)
    iterations: np.ndarray  # (N,)
    converged: np.ndarray  # (N,)


# -- array kernels -------------------------------------------------------------


def _clamp(p: np.ndarray, clamp: float) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=float), clamp, 1.0 - clamp)
    return p / p.sum(axis=-1, keepdims=True)


def _xlogy_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """p * ln(p / q) with 0 * ln(0 / q) = 0; q must be positive."""
    return rel_entr(p, q)


def _mixture_array(w: np.ndarray, channel: np.ndarray) -> np.ndarray:
    # w (..., K), channel (..., K, 2) -> (..., 2)
    return (w[..., :, None] * channel).sum(axis=-2)


def _mi_array(w: np.ndarray, channel: np.ndarray, clamp: float) -> np.ndarray:
    m = _clamp(_mixture_array(w, channel), clamp)
    kl = _xlogy_ratio(channel, m[..., None, :]).sum(axis=-1)
    return np.maximum((w * kl).sum(axis=-1), 0.0)


def _ba_update(w: np.ndarray, channel: np.ndarray) -> np.ndarray:
    """One Blahut-Arimoto update on stacked channels (..., K, 2).

    First the posterior over detectors given each output symbol,
    ``post_k(z) = w_k q_k(z) / sum_j w_j q_j(z)``; then
    ``w'_k ∝ prod_z post_k(z) ** q_k(z)``.
    """
    joint = w[..., :, None] * channel
    marginal = joint.sum(axis=-2, keepdims=True)
    dead = marginal <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(dead, 1.0, joint / np.where(dead, 1.0, marginal))
    # 0 ** 0 evaluates to 1 in numpy, the limit convention we want
    unnorm = np.prod(post**channel, axis=-1)
    return unnorm / unnorm.sum(axis=-1, keepdims=True)


def _as_weight_array(weights, k: int) -> np.ndarray:
    w = weights.w if isinstance(weights, MixtureWeights) else MixtureWeights(weights).w
    if w.size != k:
        raise DimensionError(f"{w.size} weights for a bank of {k} detectors")
    return w


def _as_pair(p) -> np.ndarray:
    if isinstance(p, SoftDecision):
        return p.as_array()
    return SoftDecision(*p).as_array()


# -- public operations -----------------------------------------------------------


def kl_divergence(p: SoftDecision, q: SoftDecision, clamp: float = DEFAULT_CLAMP) -> float:
    """KL(p || q) in nats; q is clamped before the logarithm."""
    pa, qa = _as_pair(p), _clamp(_as_pair(q), clamp)
    return max(float(_xlogy_ratio(pa, qa).sum()), 0.0)


def entropy(p: SoftDecision) -> float:
    pa = _as_pair(p)
    nz = pa[pa > 0]
    return float(-(nz * np.log(nz)).sum())


def cross_entropy(p: SoftDecision, q: SoftDecision, clamp: float = DEFAULT_CLAMP) -> float:
    """E_p[-ln q], with q clamped exactly as in :func:`kl_divergence`."""
    pa, qa = _as_pair(p), _clamp(_as_pair(q), clamp)
    return float(-(pa * np.log(qa)).sum())


def mixture(weights: MixtureWeights, bank: DetectorBank) -> SoftDecision:
    w = _as_weight_array(weights, len(bank))
    m = _mixture_array(w, bank.matrix)
    return SoftDecision(float(m[0]), float(m[1]))


def mutual_information(weights: MixtureWeights, bank: DetectorBank, clamp: float = DEFAULT_CLAMP) -> float:
    """I(detector index; prediction) = sum_k w_k KL(q_k || mixture)."""
    w = _as_weight_array(weights, len(bank))
    return float(_mi_array(w, bank.matrix, clamp))


def ba_step(weights: MixtureWeights, bank: DetectorBank, clamp: float = DEFAULT_CLAMP) -> MixtureWeights:
    w = _as_weight_array(weights, len(bank))
    return MixtureWeights(_ba_update(w, _clamp(bank.matrix, clamp)))


def worst_case_regret(q: SoftDecision, bank: DetectorBank, clamp: float = DEFAULT_CLAMP) -> float:
    """max_k KL(q_k || q)."""
    qa = _clamp(_as_pair(q), clamp)
    kl = _xlogy_ratio(bank.matrix, qa[None, :]).sum(axis=-1)
    return max(float(kl.max()), 0.0)


def decide(mixture: SoftDecision, gamma: float) -> int:
    """1 (adversarial) iff P(adversarial) > gamma, strictly."""
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"gamma must lie in [0, 1], got {gamma}")
    return int(mixture.p_adversarial > gamma)


@numba.njit(cache=True)
def _kl_rows(w, q, logq, kl):
    """Fill kl[k] = KL(q_k || m) for the mixture m of w; return (I(w), bracket width)."""
    m0 = 0.0
    m1 = 0.0
    for k in range(q.shape[0]):
        m0 += w[k] * q[k, 0]
        m1 += w[k] * q[k, 1]
    # rows are clamped, so m already lies in [clamp, 1 - clamp]
    s = m0 + m1
    logm0 = np.log(m0 / s)
    logm1 = np.log(m1 / s)
    mi = 0.0
    top = -np.inf
    for k in range(q.shape[0]):
        d = q[k, 0] * (logq[k, 0] - logm0) + q[k, 1] * (logq[k, 1] - logm1)
        kl[k] = d
        mi += w[k] * d
        top = max(top, d)
    mi = max(mi, 0.0)
    return mi, top - mi


@numba.njit(cache=True)
def _solve_kernel(channel, tol, max_iters, history):
    """BA on each clamped channel of ``channel`` (N, K, 2), from uniform weights.

    With posteriors post_k(z) = w_k q_k(z) / m(z), the update
    prod_z post_k(z) ** q_k(z) equals w_k * exp(KL(q_k || m)) because each
    row sums to one; the KL values are the ones already needed for the
    stopping bracket, so each step costs two logarithms and K exponentials.
    """
    n, k, _ = channel.shape
    weights = np.empty((n, k))
    mis = np.empty(n)
    iterations = np.zeros(n, dtype=np.int64)
    converged = np.zeros(n, dtype=np.bool_)
    kl = np.empty(k)
    w = np.empty(k)
    logq = np.log(channel)
    for i in range(n):
        q = channel[i]
        lq = logq[i]
        w[:] = 1.0 / k
        mi, gap = _kl_rows(w, q, lq, kl)
        if history.size:
            history[0] = mi
        t = 0
        while gap >= tol and t < max_iters:
            t += 1
            total = 0.0
            for j in range(k):
                w[j] = w[j] * np.exp(kl[j])
                total += w[j]
            for j in range(k):
                w[j] /= total
            mi, gap = _kl_rows(w, q, lq, kl)
            if history.size:
                history[t] = mi
        weights[i] = w
        mis[i] = mi
        iterations[i] = t
        converged[i] = gap < tol
    return weights, mis, iterations, converged


def _solve(channel: np.ndarray, config: SolverConfig, trace: bool = False):
    """Run BA from the uniform point on stacked clamped channels (N, K, 2).

    Every iterate w gives the bracket ``I(w) <= C <= max_k KL(q_k || m(w))``;
    a channel stops at the first iterate whose bracket is narrower than
    ``tol``. With ``trace`` (N must be 1) the mutual information of every
    iterate is returned as well.
    """
    history = np.full(config.max_iters + 1 if trace else 0, np.nan)
    w, mi, iterations, converged = _solve_kernel(
        np.ascontiguousarray(channel, dtype=float), float(config.tol), int(config.max_iters), history
    )
    hist = history[: iterations[0] + 1].tolist() if trace else None
    return w, mi, iterations, converged, hist


def solve_weights(bank: DetectorBank, config: SolverConfig | None = None, trace: bool = False) -> SolverResult:
    """Capacity-achieving weights and the resulting minimax mixture for one bank."""
    config = config or SolverConfig()
    raw = bank.matrix
    w, mi, iterations, converged, history = _solve(_clamp(raw, config.clamp)[None], config, trace)
    weights = MixtureWeights(w[0])
    m = np.clip(_mixture_array(weights.w, raw), 0.0, 1.0)
    return SolverResult(
        weights=weights,
        mixture=SoftDecision(float(m[0]), float(m[1])),
        capacity_nats=float(mi[0]),
        iterations=int(iterations[0]),
        converged=bool(converged[0]),
        history=tuple(history) if trace else (),
    )


def solve_batch(scores: np.ndarray, config: SolverConfig | None = None) -> BatchSolution:
    """Solve many banks at once.

    ``scores`` is either an (N, K) array of P(adversarial) values or an
    (N, K, 2) array of (natural, adversarial) pairs. Row n of the result
    matches ``solve_weights`` on bank n.
    """
    config = config or SolverConfig()
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 2:
        raw = np.stack([1.0 - scores, scores], axis=-1)
    elif scores.ndim == 3 and scores.shape[-1] == 2:
        raw = scores
    else:
        raise DimensionError(f"expected (N, K) or (N, K, 2) scores, got shape {scores.shape}")
    if raw.shape[1] < 1:
        raise ValidationError("banks need at least one detector")
    if raw.shape[0] == 0:
        k = raw.shape[1]
        return BatchSolution(np.empty((0, k)), np.empty(0), np.empty(0), np.empty(0, dtype=int), np.empty(0, dtype=bool))
    if np.any(raw < 0.0) or np.any(raw > 1.0) or not np.all(np.isfinite(raw)):
        raise ValidationError("scores must lie in [0, 1]")
    w, mi, iterations, converged, _ = _solve(_clamp(raw, config.clamp), config)
    m = _mixture_array(w, raw)
    return BatchSolution(
        weights=w,
        p_adversarial=np.clip(m[:, 1] / m.sum(axis=-1), 0.0, 1.0),
        capacity_nats=mi,
        iterations=iterations,
        converged=converged,
    )

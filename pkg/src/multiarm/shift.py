"""Detection error under domain shift, on finite alphabets.

For a detector D and label oracles f_S, f_T on a finite alphabet X::

    err_T(D) <= err_S(D) + d(noise_S, noise_T)
                + min(E_S |f_S - f_T|, E_T |f_S - f_T|)

where ``d(p, q) = 2 sup_B |p(B) - q(B)| = sum_x |p(x) - q(x)|``. The error
and disagreement terms use the full input marginals; the distance term uses
the adversarial-noise conditionals when an instance carries them and the
marginals otherwise. With noise conditionals the inequality relies on both
domains mixing the same natural distribution with noise at the same rate
(see :meth:`ShiftInstance.from_mixture`); arbitrary unrelated marginals can
violate it, which :func:`report` flags through ``holds``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from multiarm.errors import DimensionError, ValidationError


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        support = tuple(self.support)
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if len(support) != probs.size:
            raise DimensionError(f"{probs.size} probabilities for {len(support)} symbols")
        if len(set(support)) != len(support):
            raise ValidationError("support symbols must be unique")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
            raise ValidationError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValidationError(f"probabilities sum to {probs.sum()}, not 1")
        probs = probs / probs.sum()
        probs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return len(self.support)

    def prob(self, subset) -> float:
        """Probability of a set of symbols."""
        subset = set(subset)
        return float(sum(p for x, p in zip(self.support, self.probs) if x in subset))


def _same_support(p: DiscreteDistribution, q: DiscreteDistribution) -> None:
    if p.support != q.support:
        raise DimensionError("distributions are defined on different alphabets")


def _labels(values, support, what: str) -> np.ndarray:
    if isinstance(values, dict):
        try:
            values = [values[x] for x in support]
        except KeyError as exc:
            raise ValidationError(f"{what} is undefined at {exc.args[0]!r}") from None
    arr = np.array(values)
    if arr.shape != (len(support),):
        raise DimensionError(f"{what} needs one label per symbol, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValidationError(f"{what} must map every symbol to 0 or 1")
    return arr.astype(int)


def l1_distance(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    _same_support(p, q)
    return float(np.abs(p.probs - q.probs).sum())


def error(dist: DiscreteDistribution, detector, oracle) -> float:
    """P_dist(detector(x) != oracle(x))."""
    d = _labels(detector, dist.support, "detector")
    f = _labels(oracle, dist.support, "oracle")
    return float(dist.probs[d != f].sum())


@dataclass(frozen=True, eq=False)
class ShiftInstance:
    source_dist: DiscreteDistribution
    target_dist: DiscreteDistribution
    f_source: np.ndarray
    f_target: np.ndarray
    detector: np.ndarray
    source_noise: DiscreteDistribution | None = None
    target_noise: DiscreteDistribution | None = None

    def __post_init__(self):
        _same_support(self.source_dist, self.target_dist)
        support = self.source_dist.support
        if (self.source_noise is None) != (self.target_noise is None):
            raise ValidationError("give both noise distributions or neither")
        if self.source_noise is not None:
            _same_support(self.source_dist, self.source_noise)
            _same_support(self.source_dist, self.target_noise)
        for name in ("f_source", "f_target", "detector"):
            object.__setattr__(self, name, _labels(getattr(self, name), support, name))

    @property
    def support(self) -> tuple:
        return self.source_dist.support

    @classmethod
    def from_mixture(
        cls,
        support: Sequence,
        natural: Sequence[float],
        rate: float,
        source_noise: Sequence[float],
        target_noise: Sequence[float],
        f_source,
        f_target,
        detector,
    ) -> ShiftInstance:
        """Domains sharing a natural distribution, perturbed at the same rate.

        Each marginal is ``(1 - rate) * natural + rate * noise``.
        """
        if not 0.0 <= rate <= 1.0:
            raise ValidationError(f"rate must lie in [0, 1], got {rate}")
        nat = DiscreteDistribution(support, natural)
        ns = DiscreteDistribution(support, source_noise)
        nt = DiscreteDistribution(support, target_noise)
        src = DiscreteDistribution(support, (1 - rate) * nat.probs + rate * ns.probs)
        tgt = DiscreteDistribution(support, (1 - rate) * nat.probs + rate * nt.probs)
        return cls(src, tgt, f_source, f_target, detector, ns, nt)

    def to_dict(self) -> dict:
        out = {
            "support": list(self.support),
            "source_marginal": self.source_dist.probs.tolist(),
            "target_marginal": self.target_dist.probs.tolist(),
            "f_source": self.f_source.tolist(),
            "f_target": self.f_target.tolist(),
            "detector": self.detector.tolist(),
        }
        if self.source_noise is not None:
            out["source_noise"] = self.source_noise.probs.tolist()
            out["target_noise"] = self.target_noise.probs.tolist()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> ShiftInstance:
        """Accepts either explicit marginals or ``natural`` + ``rate`` + noises."""
        if not isinstance(obj, dict):
            raise ValidationError("shift instance must be a JSON object")
        try:
            support = obj["support"]
            labels = obj["f_source"], obj["f_target"], obj["detector"]
            if "natural" in obj:
                return cls.from_mixture(support, obj["natural"], float(obj["rate"]), obj["source_noise"], obj["target_noise"], *labels)
            noises = (None, None)
            if "source_noise" in obj or "target_noise" in obj:
                noises = (
                    DiscreteDistribution(support, obj["source_noise"]),
                    DiscreteDistribution(support, obj["target_noise"]),
                )
            return cls(
                DiscreteDistribution(support, obj["source_marginal"]),
                DiscreteDistribution(support, obj["target_marginal"]),
                *labels,
                *noises,
            )
        except KeyError as exc:
            raise ValidationError(f"shift instance is missing {exc.args[0]!r}") from None
        except TypeError as exc:
            raise ValidationError(f"malformed shift instance: {exc}") from None


def load_instance(stream: IO[str] | str) -> ShiftInstance:
    text = stream if isinstance(stream, str) else stream.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}") from None
    return ShiftInstance.from_dict(obj)


def source_error(inst: ShiftInstance) -> float:
    return error(inst.source_dist, inst.detector, inst.f_source)


def target_error(inst: ShiftInstance) -> float:
    return error(inst.target_dist, inst.detector, inst.f_target)


def noise_distance(inst: ShiftInstance) -> float:
    if inst.source_noise is not None:
        return l1_distance(inst.source_noise, inst.target_noise)
    return l1_distance(inst.source_dist, inst.target_dist)


def disagreement(inst: ShiftInstance) -> float:
    """min(E_S |f_S - f_T|, E_T |f_S - f_T|)."""
    diff = np.abs(inst.f_source - inst.f_target)
    return float(min(inst.source_dist.probs @ diff, inst.target_dist.probs @ diff))


def shift_bound(inst: ShiftInstance) -> float:
    return source_error(inst) + noise_distance(inst) + disagreement(inst)


@dataclass(frozen=True)
class ShiftReport:
    source_error: float
    target_error: float
    distance: float
    disagreement: float
    bound: float
    holds: bool

    def to_dict(self) -> dict:
        return {
            "source_error": self.source_error,
            "target_error": self.target_error,
            "distance": self.distance,
            "disagreement": self.disagreement,
            "bound": self.bound,
            "holds": self.holds,
        }


def report(inst: ShiftInstance) -> ShiftReport:
    src, dist, dis = source_error(inst), noise_distance(inst), disagreement(inst)
    bound = src + dist + dis
    tgt = target_error(inst)
    return ShiftReport(src, tgt, dist, dis, bound, bool(tgt <= bound + 1e-12))

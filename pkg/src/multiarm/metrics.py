"""ROC metrics under the multi-armed protocol.

A sample attacked by a group of attacks counts as detected at threshold
``gamma`` only when every valid perturbed version of it scores strictly
above ``gamma``. Reducing the per-attack scores with ``min`` gives one score
per sample whose thresholding reproduces exactly that rule, so the usual
ROC machinery applies to (natural scores, group scores).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from multiarm.capacity import DetectorBank, SolverConfig, solve_batch
from multiarm.errors import ManifestError, ValidationError
from multiarm.ingest import NATURAL, AttackGroup, ScoreTable

logger = logging.getLogger(__name__)

# Maps an (N, K) array of per-detector P(adversarial) to N aggregated scores.
Aggregator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScoreSample:
    sample_id: str
    score: float
    label: int

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score must lie in [0, 1], got {self.score}")
        if self.label not in (0, 1):
            raise ValidationError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Empirical ROC; point i is the operating point of ``score > thresholds[i]``."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist()))

    def area(self) -> float:
        """Trapezoidal area under the curve."""
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))


@dataclass(frozen=True)
class MetricsReport:
    auroc: float
    fpr_at_95_tpr: float
    n_natural: int
    n_groups: int
    group_id: str

    def to_dict(self, percent: bool = False) -> dict:
        scale = 100.0 if percent else 1.0
        return {
            "auroc": self.auroc * scale,
            "fpr_at_95_tpr": self.fpr_at_95_tpr * scale,
            "n_natural": self.n_natural,
            "n_groups": self.n_groups,
            "group_id": self.group_id,
        }


def _as_scores(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValidationError(f"{what} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} contains non-finite values")
    return arr


def group_score(per_attack_scores: Sequence[float]) -> float:
    """Score of a sample under a group of attacks: the least-detected arm."""
    arr = _as_scores(per_attack_scores, "per-attack score list")
    return float(arr.min())


def roc_curve(natural_scores, group_scores) -> RocCurve:
    neg = np.sort(_as_scores(natural_scores, "natural scores"))
    pos = np.sort(_as_scores(group_scores, "group scores"))
    observed = np.unique(np.concatenate([neg, pos]))[::-1]
    thresholds = np.concatenate([[np.inf], observed, [-np.inf]])
    # fraction strictly above each threshold
    fpr = (neg.size - np.searchsorted(neg, thresholds, side="right")) / neg.size
    tpr = (pos.size - np.searchsorted(pos, thresholds, side="right")) / pos.size
    return RocCurve(thresholds, fpr, tpr)


def auroc(natural_scores, group_scores) -> float:
    """Mann-Whitney estimate of P(group score > natural score), ties counted 1/2."""
    neg = np.sort(_as_scores(natural_scores, "natural scores"))
    pos = _as_scores(group_scores, "group scores")
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    wins = int(below.sum())
    ties = int((upto - below).sum())
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def fpr_at_tpr(curve: RocCurve, level: float = 0.95) -> float:
    """Smallest FPR over operating points with TPR >= level (no interpolation)."""
    if not 0.0 < level <= 1.0:
        raise ValidationError(f"level must lie in (0, 1], got {level}")
    # tpr values are k / n; absorb the rounding of level * n
    ok = curve.tpr >= level - 1e-12
    if not ok.any():
        return 1.0
    return float(curve.fpr[ok].min())


# -- aggregators -----------------------------------------------------------------


def minimax_aggregator(config: SolverConfig | None = None) -> Aggregator:
    """Per-sample capacity-achieving mixture of all detectors."""

    def aggregate(scores: np.ndarray) -> np.ndarray:
        return solve_batch(scores, config).p_adversarial

    return aggregate


def single_detector(index: int) -> Aggregator:
    def aggregate(scores: np.ndarray) -> np.ndarray:
        return np.asarray(scores, dtype=float)[:, index]

    return aggregate


def mean_aggregator(scores: np.ndarray) -> np.ndarray:
    return np.asarray(scores, dtype=float).mean(axis=1)


def max_aggregator(scores: np.ndarray) -> np.ndarray:
    return np.asarray(scores, dtype=float).max(axis=1)


def per_bank(fn: Callable[[DetectorBank], float], detector_ids: Sequence[str] = ()) -> Aggregator:
    """Lift a one-bank scoring function to an :data:`Aggregator`."""

    def aggregate(scores: np.ndarray) -> np.ndarray:
        return np.array([fn(DetectorBank.from_scores(row, detector_ids)) for row in np.asarray(scores, dtype=float)])

    return aggregate


# -- group evaluation -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GroupScores:
    """The two populations entering a group's ROC."""

    natural: np.ndarray
    positive: np.ndarray
    positive_ids: tuple[str, ...]


def _attacks_of(group) -> tuple[str, tuple[str, ...]]:
    if isinstance(group, AttackGroup):
        return group.name, tuple(group.attacks)
    attacks = tuple(group)
    return ",".join(attacks), attacks


def record_scores(table: ScoreTable, aggregator: Aggregator, sources: Iterable[str] | None = None) -> np.ndarray:
    """Aggregated score of every natural record and every valid record from ``sources``.

    Records not scored (invalid, or from other sources) are NaN.
    """
    wanted = None if sources is None else set(sources)
    rows = np.array(
        [i for i, s in enumerate(table.sources) if s == NATURAL or (table.valid[i] and (wanted is None or s in wanted))],
        dtype=int,
    )
    out = np.full(len(table), np.nan)
    if rows.size:
        agg = np.asarray(aggregator(table.scores[rows]), dtype=float).reshape(-1)
        if agg.shape != rows.shape:
            raise ValidationError(f"aggregator returned {agg.size} scores for {rows.size} records")
        out[rows] = agg
    return out


def group_populations(table: ScoreTable, group: AttackGroup | Sequence[str], aggregator: Aggregator | None = None, scores: np.ndarray | None = None) -> GroupScores:
    """Natural scores and per-sample group scores (min over valid attacks).

    Pass ``scores`` from :func:`record_scores` to reuse one aggregation pass
    across several groups.
    """
    name, attacks = _attacks_of(group)
    known = set(table.attacks)
    for a in attacks:
        if a not in known:
            raise ManifestError(f"group {name!r}: unknown attack id {a!r}")
    if scores is None:
        if aggregator is None:
            raise ValidationError("need an aggregator or precomputed scores")
        scores = record_scores(table, aggregator, attacks)

    wanted = set(attacks)
    natural = []
    per_sample: dict[str, float] = {}
    for i, src in enumerate(table.sources):
        if src == NATURAL:
            natural.append(scores[i])
        elif src in wanted and table.valid[i]:
            sid = table.sample_ids[i]
            per_sample[sid] = min(per_sample.get(sid, np.inf), float(scores[i]))
    return GroupScores(np.array(natural), np.array(list(per_sample.values())), tuple(per_sample))


def _report(pops: GroupScores, name: str) -> MetricsReport:
    if pops.natural.size == 0:
        raise ValidationError(f"group {name!r}: no natural samples")
    if pops.positive.size == 0:
        raise ValidationError(f"group {name!r}: no valid adversarial samples")
    curve = roc_curve(pops.natural, pops.positive)
    return MetricsReport(
        auroc=auroc(pops.natural, pops.positive),
        fpr_at_95_tpr=fpr_at_tpr(curve, 0.95),
        n_natural=int(pops.natural.size),
        n_groups=int(pops.positive.size),
        group_id=name,
    )


def evaluate_group(table: ScoreTable, group: AttackGroup | Sequence[str], aggregator: Aggregator) -> MetricsReport:
    """AUROC and FPR at 95% TPR of ``aggregator`` against one attack group.

    Raises ManifestError for attack ids absent from the table and
    ValidationError when either population ends up empty.
    """
    name, _ = _attacks_of(group)
    return _report(group_populations(table, group, aggregator), name)


def evaluate_groups(table: ScoreTable, groups: Iterable[AttackGroup], aggregator: Aggregator) -> tuple[list[MetricsReport], list[str]]:
    """Evaluate several groups with a single aggregation pass, ordered by name.

    Groups left without valid adversarial samples are skipped (and logged)
    rather than raised; their names are returned second.
    """
    groups = sorted(groups, key=lambda g: g.name)
    check = set(table.attacks)
    for g in groups:
        for a in g.attacks:
            if a not in check:
                raise ManifestError(f"group {g.name!r}: unknown attack id {a!r}")
    scores = record_scores(table, aggregator, {a for g in groups for a in g.attacks})
    reports, skipped = [], []
    for g in groups:
        try:
            reports.append(_report(group_populations(table, g, scores=scores), g.name))
        except ValidationError as exc:
            logger.warning("skipping group %s: %s", g.name, exc)
            skipped.append(g.name)
    return reports, skipped

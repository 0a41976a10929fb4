"""Seeded synthetic multi-armed scenarios with specialist detectors.

Scores are Beta-distributed. Detector d scores natural samples with
Beta(a_d, b_d) (default Beta(2, 8), mean 0.2). Against attack a it scores
with the same concentration ``a_d + b_d`` and mean moved from the natural
mean towards 0.9 in proportion to its skill ``s(d, a)``: skill 0 leaves the
detector blind to the attack, skill 1 makes it a specialist.

Random streams: the scores of detector j on source i (i = 0 for natural,
i = 1 + position of the attack in ``attack_ids``) come from one PCG64
generator seeded with ``SeedSequence(seed, spawn_key=(i, j))``; sample n
takes the n-th Beta draw of that stream. Each (source, detector) column is
therefore reproducible on its own.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO

import numpy as np

from multiarm.errors import DimensionError, ValidationError
from multiarm.ingest import NATURAL, ScoreTable

SPECIALIST_MEAN = 0.9
NATURAL_PARAMS = (2.0, 8.0)


@dataclass(frozen=True, eq=False)
class SkillMatrix:
    """``skill[d, a]`` in [0, 1]; ``natural[d]`` is the (a, b) Beta pair of detector d."""

    skill: np.ndarray
    natural: np.ndarray | None = None

    def __post_init__(self):
        skill = np.array(self.skill, dtype=float)
        if skill.ndim != 2:
            raise DimensionError(f"skill must be a detectors x attacks matrix, got shape {skill.shape}")
        if not np.all(np.isfinite(skill)) or np.any(skill < 0.0) or np.any(skill > 1.0):
            raise ValidationError("skill values must lie in [0, 1]")
        natural = np.tile(NATURAL_PARAMS, (skill.shape[0], 1)) if self.natural is None else np.array(self.natural, dtype=float)
        if natural.shape != (skill.shape[0], 2):
            raise DimensionError(f"need one (a, b) pair per detector, got shape {natural.shape}")
        if np.any(natural <= 0.0) or not np.all(np.isfinite(natural)):
            raise ValidationError("Beta parameters must be positive")
        if np.any(natural[:, 0] / natural.sum(axis=1) >= SPECIALIST_MEAN):
            raise ValidationError(f"natural score means must be below {SPECIALIST_MEAN}")
        skill.setflags(write=False)
        natural.setflags(write=False)
        object.__setattr__(self, "skill", skill)
        object.__setattr__(self, "natural", natural)

    @classmethod
    def diagonal(cls, n: int, on: float = 1.0, off: float = 0.0) -> SkillMatrix:
        return cls(np.where(np.eye(n, dtype=bool), on, off))

    def adversarial_params(self) -> np.ndarray:
        """(detectors, attacks, 2) Beta parameters of the adversarial scores."""
        a, b = self.natural[:, 0:1], self.natural[:, 1:2]
        conc = a + b
        mean = a / conc
        mu = mean + (SPECIALIST_MEAN - mean) * self.skill
        return np.stack([conc * mu, conc * (1.0 - mu)], axis=-1)


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    n_samples: int
    detector_ids: tuple[str, ...]
    attack_ids: tuple[str, ...]
    skill: SkillMatrix
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.n_samples, bool) or int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ValidationError(f"n_samples must be a positive integer, got {self.n_samples}")
        dets = tuple(str(d) for d in self.detector_ids)
        atts = tuple(str(a) for a in self.attack_ids)
        if not dets or len(set(dets)) != len(dets):
            raise ValidationError("detector ids must be nonempty and unique")
        if not atts or len(set(atts)) != len(atts):
            raise ValidationError("attack ids must be nonempty and unique")
        if NATURAL in atts:
            raise ValidationError(f"{NATURAL!r} is reserved and cannot be an attack id")
        if self.skill.skill.shape != (len(dets), len(atts)):
            raise DimensionError(f"skill shape {self.skill.skill.shape} != ({len(dets)}, {len(atts)})")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "n_samples", int(self.n_samples))
        object.__setattr__(self, "detector_ids", dets)
        object.__setattr__(self, "attack_ids", atts)
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "seed": self.seed,
            "detector_ids": list(self.detector_ids),
            "attack_ids": list(self.attack_ids),
            "skill": self.skill.skill.tolist(),
            "natural_params": self.skill.natural.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> ScenarioSpec:
        if not isinstance(obj, dict):
            raise ValidationError("scenario spec must be a JSON object")
        missing = [k for k in ("n_samples", "detector_ids", "attack_ids", "skill") if k not in obj]
        if missing:
            raise ValidationError(f"scenario spec is missing {missing}")
        try:
            skill = SkillMatrix(obj["skill"], obj.get("natural_params"))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad skill matrix: {exc}") from None
        return cls(obj["n_samples"], tuple(obj["detector_ids"]), tuple(obj["attack_ids"]), skill, obj.get("seed", 0))

    def with_seed(self, seed: int) -> ScenarioSpec:
        return ScenarioSpec(self.n_samples, self.detector_ids, self.attack_ids, self.skill, seed)


def load_spec(stream: IO[str] | str) -> ScenarioSpec:
    text = stream if isinstance(stream, str) else stream.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}") from None
    return ScenarioSpec.from_dict(obj)


def dump_spec(spec: ScenarioSpec, stream: IO[str]) -> None:
    json.dump(spec.to_dict(), stream, indent=2, sort_keys=True)
    stream.write("\n")


def _stream(seed: int, source: int, detector: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(source, detector))))


def sample_ids(n: int) -> list[str]:
    width = max(5, len(str(n - 1)))
    return [f"s{i:0{width}d}" for i in range(n)]


def generate_scenario(spec: ScenarioSpec) -> ScoreTable:
    """Score table with one natural record and one record per attack for every sample."""
    n, k = spec.n_samples, len(spec.detector_ids)
    sources = (NATURAL, *spec.attack_ids)
    adv = spec.skill.adversarial_params()
    # cube[i, n, j]: score of detector j on source i for sample n
    cube = np.empty((len(sources), n, k))
    for j in range(k):
        a, b = spec.skill.natural[j]
        cube[0, :, j] = _stream(spec.seed, 0, j).beta(a, b, size=n)
        for i in range(1, len(sources)):
            a, b = adv[j, i - 1]
            cube[i, :, j] = _stream(spec.seed, i, j).beta(a, b, size=n)
    ids = sample_ids(n)
    return ScoreTable(
        detectors=spec.detector_ids,
        sample_ids=tuple(sid for sid in ids for _ in sources),
        sources=sources * n,
        scores=cube.transpose(1, 0, 2).reshape(n * len(sources), k),
        valid=np.ones(n * len(sources), dtype=bool),
    )

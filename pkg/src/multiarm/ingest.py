"""Score tables and attack-group manifests.

Score files are CSV with header ``sample_id,source[,valid],<det_1>,...,<det_K>``.
``source`` is ``natural`` or an attack id; each detector column holds that
detector's P(adversarial) for the record. ``valid=0`` marks a perturbed
sample that failed to fool the target classifier and must be ignored.

Manifests are JSON::

    {"groups": [{"name": ..., "attacks": [...], "algorithm": ...,
                 "loss": ..., "norm": ..., "epsilon": 0.125 | null}]}
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Iterable, Sequence

import numpy as np

from multiarm.capacity import DetectorBank
from multiarm.errors import DimensionError, ManifestError, ParseError, RecordNotFound, ValidationError

NATURAL = "natural"
BOUNDARY_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Per-record detector scores.

    Row i is the record ``(sample_ids[i], sources[i])`` with detector scores
    ``scores[i]`` (ordered like ``detectors``) and validity flag ``valid[i]``.
    """

    detectors: tuple[str, ...]
    sample_ids: tuple[str, ...]
    sources: tuple[str, ...]
    scores: np.ndarray
    valid: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        detectors = tuple(str(d) for d in self.detectors)
        sample_ids = tuple(str(s) for s in self.sample_ids)
        sources = tuple(str(s) for s in self.sources)
        n, k = len(sample_ids), len(detectors)
        if k < 1:
            raise ValidationError("a score table needs at least one detector")
        if len(set(detectors)) != k:
            raise ValidationError(f"duplicate detector ids in {detectors}")
        scores = np.array(self.scores, dtype=float).reshape(n, k) if n else np.empty((0, k))
        valid = np.array(self.valid, dtype=bool).reshape(n)
        if len(sources) != n:
            raise DimensionError(f"{len(sources)} sources for {n} sample ids")
        if not np.all(np.isfinite(scores)) or np.any(scores < 0.0) or np.any(scores > 1.0):
            raise ValidationError("scores must lie in [0, 1]")
        index = {}
        for i, key in enumerate(zip(sample_ids, sources)):
            if key in index:
                raise ValidationError(f"duplicate record {key}")
            index[key] = i
            if key[1] == NATURAL and not valid[i]:
                raise ValidationError(f"natural record {key[0]!r} is marked invalid")
        scores.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "detectors", detectors)
        object.__setattr__(self, "sample_ids", sample_ids)
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.sample_ids)

    @property
    def attacks(self) -> tuple[str, ...]:
        """Attack ids in order of first appearance."""
        return tuple(dict.fromkeys(s for s in self.sources if s != NATURAL))

    def row(self, sample_id: str, source: str) -> int:
        try:
            return self._index[(str(sample_id), str(source))]
        except KeyError:
            raise RecordNotFound((sample_id, source)) from None

    def __contains__(self, key) -> bool:
        return tuple(key) in self._index

    def mask(self, source: str) -> np.ndarray:
        return np.array([s == source for s in self.sources], dtype=bool)


def bank_for(table: ScoreTable, sample_id: str, source: str) -> DetectorBank:
    """Detector bank for one record; row k is (1 - score_k, score_k)."""
    i = table.row(sample_id, source)
    return DetectorBank.from_scores(table.scores[i].tolist(), table.detectors)


def _parse_valid(text: str, line: int, name: str | None) -> bool:
    text = text.strip()
    if text == "1":
        return True
    if text == "0":
        return False
    raise ParseError(f"valid must be 0 or 1, got {text!r}", line, name)


def _parse_score(text: str, column: str, line: int, name: str | None) -> float:
    try:
        x = float(text)
    except ValueError:
        raise ParseError(f"non-numeric score {text!r} for detector {column!r}", line, name) from None
    if not math.isfinite(x):
        raise ParseError(f"non-finite score {text!r} for detector {column!r}", line, name)
    if x < 0.0:
        if x < -BOUNDARY_SLACK:
            raise ParseError(f"score {text} for detector {column!r} is outside [0, 1]", line, name)
        x = 0.0
    elif x > 1.0:
        if x > 1.0 + BOUNDARY_SLACK:
            raise ParseError(f"score {text} for detector {column!r} is outside [0, 1]", line, name)
        x = 1.0
    return x


def load_scores(stream: IO[str] | str, name: str | None = None) -> ScoreTable:
    """Parse a score CSV from an open text stream or a string."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    name = name or getattr(stream, "name", None)
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise ParseError("empty score file", 1, name)
    header = [h.strip() for h in header]
    if header[:2] != ["sample_id", "source"]:
        raise ParseError("header must start with 'sample_id,source'", 1, name)
    has_valid = len(header) > 2 and header[2] == "valid"
    detectors = header[3:] if has_valid else header[2:]
    if not detectors:
        raise ParseError("no detector columns", 1, name)
    if len(set(detectors)) != len(detectors) or any(not d for d in detectors):
        raise ParseError(f"detector columns must be nonempty and unique: {detectors}", 1, name)
    if set(detectors) & {"sample_id", "source", "valid"}:
        raise ParseError("detector ids may not reuse reserved column names", 1, name)

    width = len(header)
    first = 3 if has_valid else 2
    sample_ids, sources, valid, scores = [], [], [], []
    seen = {}
    for fields in reader:
        line = reader.line_num
        if not fields or (len(fields) == 1 and not fields[0].strip()):
            continue
        if len(fields) != width:
            raise ParseError(f"expected {width} fields, got {len(fields)}", line, name)
        sid, src = fields[0].strip(), fields[1].strip()
        if not sid or not src:
            raise ParseError("sample_id and source must be nonempty", line, name)
        if (sid, src) in seen:
            raise ParseError(f"duplicate record ({sid}, {src}), first seen on line {seen[(sid, src)]}", line, name)
        seen[(sid, src)] = line
        ok = _parse_valid(fields[2], line, name) if has_valid else True
        if src == NATURAL and not ok:
            raise ParseError("natural records must be valid", line, name)
        row = [_parse_score(text, col, line, name) for text, col in zip(fields[first:], detectors)]
        sample_ids.append(sid)
        sources.append(src)
        valid.append(ok)
        scores.append(row)
    return ScoreTable(
        detectors=tuple(detectors),
        sample_ids=tuple(sample_ids),
        sources=tuple(sources),
        scores=np.array(scores, dtype=float).reshape(len(scores), len(detectors)),
        valid=np.array(valid, dtype=bool),
    )


def write_scores(table: ScoreTable, stream: IO[str]) -> None:
    """Write ``table`` as CSV; floats use the shortest round-trip repr."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["sample_id", "source", "valid", *table.detectors])
    for sid, src, ok, row in zip(table.sample_ids, table.sources, table.valid, table.scores):
        writer.writerow([sid, src, int(ok), *(repr(float(x)) for x in row)])


def dumps_scores(table: ScoreTable) -> str:
    buf = io.StringIO()
    write_scores(table, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class AttackGroup:
    """Attacks mounted simultaneously against the same inputs."""

    name: str
    attacks: tuple[str, ...]
    algorithm: str = ""
    loss: str = ""
    norm: str = ""
    epsilon: float | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "attacks": list(self.attacks),
            "algorithm": self.algorithm,
            "loss": self.loss,
            "norm": self.norm,
            "epsilon": self.epsilon,
        }


@dataclass(frozen=True)
class GroupManifest:
    groups: tuple[AttackGroup, ...]

    def __post_init__(self):
        names = [g.name for g in self.groups]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ManifestError(f"duplicate group names: {dupes}")
        for g in self.groups:
            if not g.attacks:
                raise ManifestError(f"group {g.name!r} lists no attacks")
            if len(set(g.attacks)) != len(g.attacks):
                raise ManifestError(f"group {g.name!r} lists an attack twice")

    def __getitem__(self, name: str) -> AttackGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    def __iter__(self):
        return iter(self.groups)

    def __len__(self) -> int:
        return len(self.groups)

    def to_dict(self) -> dict:
        return {"groups": [g.to_dict() for g in self.groups]}


def _group_from_dict(obj, position: int) -> AttackGroup:
    if not isinstance(obj, dict):
        raise ManifestError(f"group #{position} is not an object")
    name = obj.get("name")
    attacks = obj.get("attacks")
    if not isinstance(name, str) or not name:
        raise ManifestError(f"group #{position} needs a nonempty string name")
    if not isinstance(attacks, list) or not all(isinstance(a, str) and a for a in attacks):
        raise ManifestError(f"group {name!r}: attacks must be a list of nonempty strings")
    eps = obj.get("epsilon")
    if eps is not None and (isinstance(eps, bool) or not isinstance(eps, (int, float))):
        raise ManifestError(f"group {name!r}: epsilon must be a number or null")
    meta = {}
    for key in ("algorithm", "loss", "norm"):
        value = obj.get(key, "")
        if not isinstance(value, str):
            raise ManifestError(f"group {name!r}: {key} must be a string")
        meta[key] = value
    return AttackGroup(name, tuple(attacks), epsilon=None if eps is None else float(eps), **meta)


def manifest_from_dict(obj) -> GroupManifest:
    if not isinstance(obj, dict) or not isinstance(obj.get("groups"), list):
        raise ManifestError('manifest must be an object with a "groups" list')
    return GroupManifest(tuple(_group_from_dict(g, i) for i, g in enumerate(obj["groups"])))


def load_manifest(stream: IO[str] | str) -> GroupManifest:
    text = stream if isinstance(stream, str) else stream.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"invalid JSON: {exc}") from None
    return manifest_from_dict(obj)


def dump_manifest(manifest: GroupManifest, stream: IO[str]) -> None:
    json.dump(manifest.to_dict(), stream, indent=2)
    stream.write("\n")


def check_manifest(manifest: GroupManifest | Iterable[AttackGroup], table: ScoreTable) -> None:
    """Raise ManifestError naming the first attack id absent from ``table``."""
    known = set(table.attacks)
    for g in manifest:
        for a in g.attacks:
            if a not in known:
                raise ManifestError(f"group {g.name!r}: unknown attack id {a!r}")


def bundled_path(name: str):
    """Path-like handle to a data file shipped with the package."""
    return resources.files("multiarm") / "data" / name


def load_bundled_manifest(name: str = "table1.json") -> GroupManifest:
    return load_manifest(bundled_path(name).read_text())


def from_records(
    detectors: Sequence[str],
    records: Iterable[tuple[str, str, Sequence[float]] | tuple[str, str, Sequence[float], bool]],
) -> ScoreTable:
    """Build a table from ``(sample_id, source, scores[, valid])`` tuples."""
    sids, srcs, rows, valid = [], [], [], []
    for rec in records:
        sids.append(rec[0])
        srcs.append(rec[1])
        rows.append(list(rec[2]))
        valid.append(rec[3] if len(rec) > 3 else True)
    return ScoreTable(tuple(detectors), tuple(sids), tuple(srcs), np.array(rows, dtype=float).reshape(len(rows), len(detectors)), np.array(valid, dtype=bool))

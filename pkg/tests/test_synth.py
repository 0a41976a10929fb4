import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiarm.errors import DimensionError, ValidationError
from multiarm.ingest import NATURAL, bundled_path, dumps_scores, load_scores
from multiarm.metrics import auroc
from multiarm.synth import SkillMatrix, ScenarioSpec, generate_scenario, load_spec, sample_ids

GOLDEN = Path(__file__).parent / "golden"
DETS = ("ACE", "KL", "FR", "Gini")
ATTS = ("a0", "a1", "a2", "a3")


def spec_with(skill, n=2000, seed=7):
    return ScenarioSpec(n, DETS, ATTS, SkillMatrix(skill), seed)


def pair_aurocs(table):
    src = np.array(table.sources)
    nat = table.scores[src == NATURAL]
    out = np.empty((len(table.detectors), len(table.attacks)))
    for a, att in enumerate(table.attacks):
        adv = table.scores[src == att]
        for d in range(len(table.detectors)):
            out[d, a] = auroc(nat[:, d], adv[:, d])
    return out


def test_deterministic_bytes():
    spec = spec_with(np.full((4, 4), 0.3), n=50)
    assert dumps_scores(generate_scenario(spec)) == dumps_scores(generate_scenario(spec))
    other = dumps_scores(generate_scenario(spec.with_seed(8)))
    assert other != dumps_scores(generate_scenario(spec))


def test_layout():
    spec = spec_with(np.zeros((4, 4)), n=3)
    table = generate_scenario(spec)
    assert len(table) == 3 * 5
    assert table.sources[:5] == (NATURAL, *ATTS)
    assert table.sample_ids[:6] == ("s00000",) * 5 + ("s00001",)
    assert table.valid.all()
    assert table.detectors == DETS


def test_columns_are_independent_streams():
    # growing the attack list leaves existing columns untouched
    small = generate_scenario(ScenarioSpec(20, DETS, ATTS[:2], SkillMatrix(np.zeros((4, 2))), 3))
    big = generate_scenario(ScenarioSpec(20, DETS, ATTS, SkillMatrix(np.zeros((4, 4))), 3))
    src_s, src_b = np.array(small.sources), np.array(big.sources)
    for s in (NATURAL, "a0", "a1"):
        np.testing.assert_array_equal(small.scores[src_s == s], big.scores[src_b == s])


def test_prefix_stability():
    spec = spec_with(np.eye(4), n=10)
    short = generate_scenario(spec)
    long = generate_scenario(ScenarioSpec(30, DETS, ATTS, spec.skill, spec.seed))
    np.testing.assert_array_equal(long.scores[: len(short)], short.scores)


def test_blind_detectors():
    table = generate_scenario(spec_with(np.zeros((4, 4))))
    a = pair_aurocs(table)
    assert np.all(np.abs(a - 0.5) <= 0.05), a


def test_diagonal_specialists():
    table = generate_scenario(spec_with(np.eye(4)))
    a = pair_aurocs(table)
    assert np.all(np.diag(a) >= 0.95), np.diag(a)
    assert np.all(a[~np.eye(4, dtype=bool)] <= 0.6)


@pytest.mark.parametrize("seed", [0, 1, 20240502])
def test_monotone_in_skill(seed):
    levels = [generate_scenario(spec_with(np.full((4, 4), s), seed=seed)) for s in (0.0, 0.5, 1.0)]
    a = [pair_aurocs(t) for t in levels]
    assert np.all(a[0] <= a[1]) and np.all(a[1] <= a[2])


def test_score_law_moments():
    skill = SkillMatrix([[0.0, 0.5, 1.0]])
    params = skill.adversarial_params()[0]
    np.testing.assert_allclose(params.sum(-1), 10.0)
    np.testing.assert_allclose(params[:, 0] / 10.0, [0.2, 0.55, 0.9])
    table = generate_scenario(ScenarioSpec(20000, ("d",), ("x", "y", "z"), skill, 11))
    src = np.array(table.sources)
    for s, mu in zip((NATURAL, "x", "y", "z"), (0.2, 0.2, 0.55, 0.9)):
        col = table.scores[src == s, 0]
        # Beta(10 mu, 10 (1 - mu)) has variance mu (1 - mu) / 11
        se = np.sqrt(mu * (1 - mu) / 11 / col.size)
        assert abs(col.mean() - mu) < 5 * se


def test_spec_validation():
    with pytest.raises(ValidationError):
        spec_with(np.zeros((4, 4)), n=0)
    with pytest.raises(ValidationError):
        ScenarioSpec(5, ("a", "a"), ("x",), SkillMatrix([[0], [0]]))
    with pytest.raises(ValidationError):
        ScenarioSpec(5, ("a",), ("natural",), SkillMatrix([[0]]))
    with pytest.raises(DimensionError):
        ScenarioSpec(5, ("a",), ("x", "y"), SkillMatrix([[0]]))
    with pytest.raises(ValidationError):
        SkillMatrix([[1.2]])
    with pytest.raises(ValidationError):
        SkillMatrix([[0.5]], natural=[[9.5, 0.5]])
    with pytest.raises(ValidationError):
        load_spec('{"n_samples": 3}')


@given(
    st.integers(1, 50),
    st.integers(0, 2**64 - 1),
    st.lists(st.floats(0, 1), min_size=2, max_size=2),
)
@settings(max_examples=30)
def test_spec_json_round_trip(n, seed, row):
    spec = ScenarioSpec(n, ("p", "q"), ("x",), SkillMatrix([[row[0]], [row[1]]]), seed)
    again = load_spec(json.dumps(spec.to_dict()))
    assert again.to_dict() == spec.to_dict()
    assert dumps_scores(generate_scenario(again)) == dumps_scores(generate_scenario(spec))


def test_sample_ids_sort_lexicographically():
    ids = sample_ids(100001)
    assert ids == sorted(ids)
    assert ids[0] == "s000000"


def test_golden_small_csv():
    spec = load_spec(bundled_path("specialist_spec.json").read_text())
    small = ScenarioSpec(5, spec.detector_ids, spec.attack_ids, spec.skill, spec.seed)
    assert dumps_scores(generate_scenario(small)) == (GOLDEN / "specialist_n5.csv").read_text()


@pytest.mark.parametrize("key, spec_name", [("specialist", "specialist_spec.json"), ("table1_linf_0.125", "table1_linf_0.125_spec.json")])
def test_golden_scenario_hash(key, spec_name):
    golden = json.loads((GOLDEN / "scenario_reports.json").read_text())[key]
    text = dumps_scores(generate_scenario(load_spec(bundled_path(spec_name).read_text())))
    assert text.count("\n") == golden["csv_lines"]
    assert hashlib.sha256(text.encode()).hexdigest() == golden["csv_sha256"]
    assert dumps_scores(load_scores(text)) == text

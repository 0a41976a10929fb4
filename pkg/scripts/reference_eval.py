"""Reference evaluation used to freeze the golden files in tests/golden.

Deliberately shares no numerics with the package: the capacity iteration is
the literal two-stage Blahut-Arimoto update in plain Python floats, AUROC is
an O(n^2) pair count, and FPR at 95% TPR is a threshold sweep. Only the
scenario generator is taken from the package, since the generated CSV is
itself one of the frozen artifacts.

    python scripts/reference_eval.py            # rewrite tests/golden/*
    python scripts/reference_eval.py --check    # compare against them
"""

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path

from multiarm.ingest import bundled_path, dumps_scores
from multiarm.synth import ScenarioSpec, generate_scenario, load_spec

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "tests" / "golden"
CLAMP = 1e-12
TOL = 1e-10
MAX_ITERS = 200_000


def clamp_row(p_adv):
    a = min(max(p_adv, CLAMP), 1 - CLAMP)
    n = min(max(1 - p_adv, CLAMP), 1 - CLAMP)
    s = a + n
    return (n / s, a / s)


def ba_reference(p_adv_list):
    q = [clamp_row(x) for x in p_adv_list]
    k = len(q)
    w = [1.0 / k] * k

    def bracket(w):
        m = [sum(w[j] * q[j][z] for j in range(k)) for z in range(2)]
        s = m[0] + m[1]
        m = [m[0] / s, m[1] / s]
        d = [sum(q[j][z] * math.log(q[j][z] / m[z]) for z in range(2)) for j in range(k)]
        mi = max(sum(w[j] * d[j] for j in range(k)), 0.0)
        return mi, max(d) - mi

    mi, gap = bracket(w)
    t = 0
    while gap >= TOL and t < MAX_ITERS:
        t += 1
        marg = [sum(w[j] * q[j][z] for j in range(k)) for z in range(2)]
        post = [[w[j] * q[j][z] / marg[z] for z in range(2)] for j in range(k)]
        new = [post[j][0] ** q[j][0] * post[j][1] ** q[j][1] for j in range(k)]
        s = sum(new)
        w = [x / s for x in new]
        mi, gap = bracket(w)
    raw = [(1 - x, x) for x in p_adv_list]
    m = [sum(w[j] * raw[j][z] for j in range(k)) for z in range(2)]
    return m[1] / (m[0] + m[1])


def pair_auroc(neg, pos):
    wins = ties = 0
    for a in pos:
        for n in neg:
            if a > n:
                wins += 1
            elif a == n:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def sweep_fpr95(neg, pos):
    import bisect

    neg_s, pos_s = sorted(neg), sorted(pos)
    best = 1.0
    for g in sorted(set(neg) | set(pos)) + [-math.inf]:
        tp = len(pos_s) - bisect.bisect_right(pos_s, g)
        fp = len(neg_s) - bisect.bisect_right(neg_s, g)
        if tp * 100 >= 95 * len(pos_s):
            best = min(best, fp / len(neg_s))
    return best


def read_rows(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    dets = [c for c in rows[0] if c not in ("sample_id", "source", "valid")]
    return rows, dets


def evaluate(rows, dets, groups, score_fn):
    cache = {}

    def score(r):
        key = (r["sample_id"], r["source"])
        if key not in cache:
            cache[key] = score_fn([float(r[d]) for d in dets])
        return cache[key]

    out = {}
    for g in groups:
        attacks = set(g["attacks"])
        neg = [score(r) for r in rows if r["source"] == "natural"]
        per = {}
        for r in rows:
            if r["source"] in attacks and r["valid"] == "1":
                per[r["sample_id"]] = min(per.get(r["sample_id"], math.inf), score(r))
        pos = list(per.values())
        out[g["name"]] = {
            "auroc": pair_auroc(neg, pos),
            "fpr_at_95_tpr": sweep_fpr95(neg, pos),
            "n_natural": len(neg),
            "n_groups": len(pos),
        }
    return out


def scenario_golden(spec_name, manifest_name, with_baselines):
    spec = load_spec(bundled_path(spec_name).read_text())
    text = dumps_scores(generate_scenario(spec))
    rows, dets = read_rows(text)
    groups = json.loads(bundled_path(manifest_name).read_text())["groups"]
    result = {
        "spec": spec_name,
        "manifest": manifest_name,
        "csv_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "csv_lines": text.count("\n"),
        "minimax": evaluate(rows, dets, groups, ba_reference),
    }
    if with_baselines:
        result["mean"] = evaluate(rows, dets, groups, lambda xs: sum(xs) / len(xs))
        result["detectors"] = {d: evaluate(rows, dets, groups, lambda xs, j=j: xs[j]) for j, d in enumerate(dets)}
    return result


def small_csv():
    spec = load_spec(bundled_path("specialist_spec.json").read_text())
    small = ScenarioSpec(5, spec.detector_ids, spec.attack_ids, spec.skill, spec.seed)
    return dumps_scores(generate_scenario(small))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true")
    args = ap.parse_args()
    t0 = time.time()
    golden = {
        "specialist": scenario_golden("specialist_spec.json", "specialist_manifest.json", True),
        "table1_linf_0.125": scenario_golden("table1_linf_0.125_spec.json", "table1_linf_0.125.json", True),
    }
    small = small_csv()
    print(f"reference run took {time.time() - t0:.1f}s", file=sys.stderr)
    report_path = GOLDEN / "scenario_reports.json"
    csv_path = GOLDEN / "specialist_n5.csv"
    text = json.dumps(golden, indent=2, sort_keys=True) + "\n"
    if args.check:
        ok = report_path.read_text() == text and csv_path.read_text() == small
        print("golden files match" if ok else "golden files differ")
        return 0 if ok else 1
    GOLDEN.mkdir(parents=True, exist_ok=True)
    report_path.write_text(text)
    csv_path.write_text(small)
    return 0


if __name__ == "__main__":
    sys.exit(main())

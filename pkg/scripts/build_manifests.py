"""Regenerate the attack-group manifests shipped in src/multiarm/data.

Groups follow the simultaneous-attack grid of the MEAD evaluation: one group
per (norm, epsilon) cell, where a starred algorithm contributes one attack per
loss (ACE, KL, FR, Gini).
"""

import json
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "multiarm" / "data"
LOSSES = ["ace", "kl", "fr", "gini"]


def attack_id(alg, norm, eps, loss=None):
    parts = [alg.lower()] + ([loss] if loss else []) + [norm.lower()] + ([f"{eps:g}"] if eps is not None else [])
    return "-".join(parts)


def cell(norm, eps, starred=(), plain=()):
    attacks = [attack_id(a, norm, eps, loss) for a in starred for loss in LOSSES]
    attacks += [attack_id(a, norm, eps) for a in plain]
    label = ",".join([f"{a}*" for a in starred] + list(plain))
    return {
        "name": f"{norm} eps={eps:g}" if eps is not None else f"{norm} {label}",
        "attacks": attacks,
        "algorithm": label,
        "loss": ",".join(l.upper() if l != "gini" else "Gini" for l in LOSSES) if starred else "",
        "norm": norm,
        "epsilon": eps,
    }


def table1():
    groups = [cell("L2", 0.01, plain=["CW2"]), cell("L2", 0.1, plain=["HOP"])]
    for eps in [0.125, 0.25, 0.3125, 0.5, 1, 1.5, 2]:
        groups.append(cell("L2", eps, starred=["PGD2"]))
    for eps in [0.03125, 0.0625, 0.125, 0.25, 0.3125, 0.5]:
        plain = {0.125: ["SA"], 0.3125: ["CWi"]}.get(eps, [])
        groups.append(cell("Linf", eps, starred=["PGDi", "FGSM", "BIM"], plain=plain))
    for eps in [5, 10, 15, 20, 25, 30, 40]:
        groups.append(cell("L1", eps, starred=["PGD1"]))
    groups.append(cell("L2", None, plain=["DF"]))
    groups.append(cell("none", None, plain=["STA"]))
    return {"groups": groups}


def specialist():
    eps = 0.03125
    attacks = [attack_id("PGDi", "Linf", eps, loss) for loss in LOSSES]
    groups = [{"name": "all", "attacks": attacks, "algorithm": "PGDi*", "loss": "ACE,KL,FR,Gini", "norm": "Linf", "epsilon": eps}]
    for loss, a in zip(LOSSES, attacks):
        groups.append({"name": f"only-{loss}", "attacks": [a], "algorithm": "PGDi", "loss": loss, "norm": "Linf", "epsilon": eps})
    return {"groups": groups}


def scenario_specs():
    """Seeded scenarios for the specialist manifest and the Linf eps=0.125 cell."""
    from multiarm.synth import ScenarioSpec, SkillMatrix

    dets = ("ACE", "KL", "FR", "Gini")
    spec = ScenarioSpec(2000, dets, tuple(specialist()["groups"][0]["attacks"]), SkillMatrix.diagonal(4), 20240502)
    # own-loss skill per algorithm; other losses 0.1, SA 0.2
    own = {"pgdi": 1.0, "fgsm": 0.6, "bim": 0.8}
    attacks = [a for a in table1()["groups"] if a["name"] == "Linf eps=0.125"][0]["attacks"]
    skill = [[own[a.split("-")[0]] if a.split("-")[1] == loss else (0.2 if a.startswith("sa-") else 0.1) for a in attacks] for loss in LOSSES]
    cell_spec = ScenarioSpec(500, dets, tuple(attacks), SkillMatrix(skill), 125)
    return {"specialist_spec.json": spec, "table1_linf_0.125_spec.json": cell_spec}


def write(name, obj):
    (DATA / name).write_text(json.dumps(obj, indent=2) + "\n")


if __name__ == "__main__":
    t1 = table1()
    write("table1.json", t1)
    write("table1_linf_0.125.json", {"groups": [g for g in t1["groups"] if g["name"] == "Linf eps=0.125"]})
    write("specialist_manifest.json", specialist())
    from multiarm.synth import dump_spec

    for name, spec in scenario_specs().items():
        with open(DATA / name, "w") as fh:
            dump_spec(spec, fh)

"""Writes the synthetic example plans in this directory.

None of these scripts are recordings of real trainees; they are built from the
first pattern alternative of each MARCHp step with made-up timing.
"""

import json
import pathlib

HERE = pathlib.Path(__file__).resolve().parent
SCENARIO = json.loads((HERE.parent / "scenarios" / "marchp_hemorrhage.json").read_text())


def chain():
    steps = {s["stepId"]: s for s in SCENARIO["steps"]}
    out, cur = [], SCENARIO["entryStepId"]
    while cur:
        out.append(steps[cur])
        cur = steps[cur]["next"]
    return out


def script(name, total, skip=(), chatter_at=None, imp=None):
    steps = chain()
    gap = total / len(steps)
    lines = []
    for k, step in enumerate(steps, start=1):
        at = round(gap * k * 4) / 4
        if k == len(steps):
            at = total
        if chatter_at is not None and k == chatter_at:
            lines.append({"at": at - gap / 2, "text": "um okay hold on", "accurate": False})
        if step["stepId"] in skip:
            continue
        line = {"at": at, "text": step["patterns"].split("/")[0], "accurate": True}
        if imp == step["ordinal"]:
            line["implementationError"] = imp
        lines.append(line)
    return {"name": name, "lines": lines}


def accurate_training():
    return {
        "description": "Synthetic: 19 experiment participants speaking every step accurately.",
        "scenarioId": "marchp",
        "scenarioFile": "../scenarios/marchp_hemorrhage.json",
        "cohorts": [
            {"group": "Experiment", "participants": 19, "scripts": [script("accurate", 39)]},
        ],
    }


def cohorts():
    experiment, control = [], []
    for p in range(1, 9):
        experiment += [
            dict(script(f"exp-p{p}-1", 70 + 2 * p, skip=("M9",), chatter_at=4), participant=p, iteration=1),
            dict(script(f"exp-p{p}-2", 58 + p, chatter_at=7), participant=p, iteration=2),
            dict(script(f"exp-p{p}-3", 42 + p / 2), participant=p, iteration=3),
        ]
        control += [
            dict(script(f"ctl-p{p}-1", 72 + 2 * p, skip=("M9",), chatter_at=4, imp=3), participant=p, iteration=1),
            dict(script(f"ctl-p{p}-2", 68 + 2 * p, skip=("M12",), chatter_at=7), participant=p, iteration=2),
            dict(script(f"ctl-p{p}-3", 64 + p, skip=("M4",)), participant=p, iteration=3),
        ]
    return {
        "description": "Synthetic: an experiment cohort that speeds up and stops skipping steps, "
        "against a control cohort that does not, with light recognition noise.",
        "scenarioId": "marchp",
        "scenarioFile": "../scenarios/marchp_hemorrhage.json",
        "noise": {"fnRate": 0.03, "fpRate": 0.05, "seed": 11},
        "cohorts": [
            {"group": "Experiment", "participants": 8, "scripts": experiment},
            {"group": "Control", "participants": 8, "scripts": control},
        ],
    }


if __name__ == "__main__":
    (HERE / "accurate_training.json").write_text(json.dumps(accurate_training(), indent=2) + "\n")
    (HERE / "cohort_comparison.json").write_text(json.dumps(cohorts(), indent=2) + "\n")

"""Scoring two candidate models on the three-axis breeding benchmark.

Trials are recorded model answers plus any manual judgments; ballots are
per-test rank scores. The report aggregates accuracy (kind-specific),
stability (within +-10 % or a manual text flag, split by protocol), and
reasoning (each model's share of the total rank mass).
"""

import numpy as np

from breedkit import bench

rng = np.random.default_rng(5)
trials = []

# Yield estimation: model "tuned" answers within a few percent, "stock" is wild.
for model, spread in (("tuned", 0.03), ("stock", 0.25)):
    for i in range(12):
        truth = 4000.0 + 120.0 * i
        answer = truth * (1.0 + spread * rng.normal())
        trials.append(bench.TrialRecord(
            model_id=model,
            task_spec=bench.TaskSpec("phenotyping_estimation", "Yield"),
            question_id=f"y{i}", trial_index=0,
            answer_numeric=answer, reference_value=truth,
        ))

# Weed-level classification and a judged germplasm-screening subtask.
levels = ("no_weeds", "slight", "moderate", "severe")
for model, flip in (("tuned", 0.1), ("stock", 0.45)):
    for i in range(12):
        truth = levels[i % 4]
        answer = truth if rng.random() > flip else levels[(i + 1) % 4]
        trials.append(bench.TrialRecord(
            model_id=model,
            task_spec=bench.TaskSpec("environmental_stress", "WL"),
            question_id=f"wl{i}", trial_index=0,
            answer_label=answer, reference_label=truth,
        ))
    for i in range(12):
        trials.append(bench.TrialRecord(
            model_id=model,
            task_spec=bench.TaskSpec("germplasm_screening", "DR"),
            question_id=f"dr{i}", trial_index=0,
            judged_correct=bool(rng.random() > flip),
        ))

# Price answers are consistent when within +-10 % of the knowledge base.
for model, spread in (("tuned", 0.05), ("stock", 0.3)):
    for i in range(12):
        trials.append(bench.TrialRecord(
            model_id=model,
            task_spec=bench.TaskSpec("seed_price_query", "SP"),
            question_id=f"sp{i}", trial_index=0,
            answer_numeric=150.0 * (1.0 + spread * rng.normal()),
            reference_value=150.0,
        ))

# Stability protocols: consistency (cross-domain re-asks) and robustness
# (small input perturbations), tagged on the trial.
for model, spread in (("tuned", 0.06), ("stock", 0.2)):
    for protocol in ("consistency", "robustness"):
        for i in range(10):
            truth = 60.0
            trials.append(bench.TrialRecord(
                model_id=model,
                task_spec=bench.TaskSpec("phenotyping_estimation", "Yield"),
                question_id=f"{protocol}{i}", trial_index=0,
                answer_numeric=truth * (1.0 + spread * rng.normal()),
                reference_value=truth, stability_protocol=protocol,
            ))

# Reasoning ballots: each test hands out ranks 1..x exactly once.
ballots = []
for t in range(9):
    axis = ("logical_deduction", "inductive_reasoning", "explanation")[t % 3]
    tuned_wins = rng.random() < 0.8
    scores = {"tuned": 2, "stock": 1} if tuned_wins else {"tuned": 1, "stock": 2}
    ballots.append(bench.ReasoningBallot(test_id=f"t{t}", scores=scores, axis=axis))

report = bench.build_report(trials, ballots)
for model in report.models:
    print(f"model {model}:")
    for subtask, metrics in sorted(report.accuracy[model].items()):
        shown = {k: round(v, 3) for k, v in metrics.items() if k not in ("kind", "n")}
        print(f"  accuracy {subtask:5s} {shown}")
    stability = report.stability[model]["Yield"]
    print(f"  stability consistency={stability.consistency:.2f} "
          f"robustness={stability.robustness:.2f}")
    axes = {k: round(v, 3) for k, v in report.reasoning[model].items()}
    print(f"  reasoning {axes}")

total = sum(report.reasoning[m]["explanation"] for m in report.models)
print(f"\nreasoning shares sum to {total} per axis (rank mass is conserved)")

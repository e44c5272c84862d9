"""Scoring for the three-axis breeding benchmark: accuracy, stability, reasoning.

Model answers and the human judgments over them are recorded inputs (trial
and ballot CSVs); this module is the bookkeeping and scoring engine.

Accuracy is subtask-kind specific: R^2/RMSE for numeric regression (shared
implementation with :func:`breedkit.fusion.metrics`), exact-label accuracy
for categorical subtasks, correct/total for manually judged subtasks, and
the fraction of answers within +-10 % of the knowledge-base price for the
price subtask. Stability is the fraction of trials whose numeric answer is
within +-10 % of the reference (text trials use the recorded manual flag),
split by the consistency/robustness protocol tag. Reasoning is each model's
share of the total rank score: with x models per ballot scored 1..x once
each, a ballot's score mass is (1 + x) * x / 2.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

from .errors import (
    EmptyInput,
    InvalidBallot,
    InvalidInput,
    InvalidTrialSet,
    ParseError,
    UndefinedDeviation,
)
from .fusion import metrics

TASK_SUBTASKS = {
    "phenotyping_estimation": ("Yield", "SPAD", "LAI", "CH", "CV", "WH", "PL"),
    "environmental_stress": ("WL", "FVC"),
    "germplasm_screening": ("HQ", "DS", "DR", "MP", "AM"),
    "cultivation_recommendation": ("CT", "PPT"),
    "seed_price_query": ("SP",),
}

SUBTASK_KIND = {
    "Yield": "numeric_regression",
    "SPAD": "numeric_regression",
    "LAI": "numeric_regression",
    "CH": "numeric_regression",
    "CV": "numeric_regression",
    "WH": "numeric_regression",
    "FVC": "numeric_regression",
    "PL": "categorical",
    "WL": "categorical",
    "HQ": "judged_correctness",
    "DS": "judged_correctness",
    "DR": "judged_correctness",
    "MP": "judged_correctness",
    "AM": "judged_correctness",
    "CT": "judged_correctness",
    "PPT": "judged_correctness",
    "SP": "price_consistency",
}

REASONING_AXES = ("logical_deduction", "inductive_reasoning", "explanation")

STABILITY_PROTOCOLS = ("consistency", "robustness")

RELATIVE_TOLERANCE = 0.10  # "within +-10 %", boundary inclusive


@dataclass(frozen=True)
class TaskSpec:
    """A benchmark (task, subtask) pair; the answer kind follows the subtask."""

    task: str
    subtask: str

    def __post_init__(self):
        if self.task not in TASK_SUBTASKS:
            raise InvalidInput(f"unknown task {self.task!r}")
        if self.subtask not in TASK_SUBTASKS[self.task]:
            raise InvalidInput(
                f"subtask {self.subtask!r} does not belong to task {self.task!r}"
            )

    @property
    def answer_kind(self) -> str:
        return SUBTASK_KIND[self.subtask]


def task_of_subtask(subtask: str) -> str:
    for task, subtasks in TASK_SUBTASKS.items():
        if subtask in subtasks:
            return task
    raise InvalidInput(f"unknown subtask {subtask!r}")


@dataclass(frozen=True)
class TrialRecord:
    """One recorded model answer (plus any manual judgment) for one test."""

    model_id: str
    task_spec: TaskSpec
    question_id: str
    trial_index: int
    answer_numeric: float | None = None
    answer_label: str | None = None
    judged_correct: bool | None = None
    reference_value: float | None = None
    reference_label: str | None = None
    stability_protocol: str | None = None
    text_pass: bool | None = None

    def __post_init__(self):
        if self.trial_index < 0:
            raise InvalidInput("trial_index must be >= 0")
        if self.stability_protocol is not None and self.stability_protocol not in STABILITY_PROTOCOLS:
            raise InvalidInput(
                f"stability_protocol must be one of {STABILITY_PROTOCOLS}"
            )


@dataclass(frozen=True)
class ReasoningBallot:
    """One test's manual ranking: each model gets a distinct score in 1..x."""

    test_id: str
    scores: dict
    axis: str = "overall"

    def __post_init__(self):
        if self.axis != "overall" and self.axis not in REASONING_AXES:
            raise InvalidInput(f"axis must be 'overall' or one of {REASONING_AXES}")
        validate_ballot(self)


def validate_ballot(ballot: ReasoningBallot) -> int:
    """Number of models x, after checking the scores are a permutation of 1..x."""
    x = len(ballot.scores)
    if x < 1:
        raise InvalidBallot(f"ballot {ballot.test_id}: no scores")
    if sorted(ballot.scores.values()) != list(range(1, x + 1)):
        raise InvalidBallot(
            f"ballot {ballot.test_id}: scores must be a permutation of 1..{x}"
        )
    return x


def within_relative_tolerance(answer: float, reference: float,
                              tolerance: float = RELATIVE_TOLERANCE) -> bool:
    """True iff |answer - reference| <= tolerance * |reference| (inclusive)."""
    if reference == 0.0:
        raise UndefinedDeviation("relative deviation undefined for reference 0")
    return abs(answer - reference) <= tolerance * abs(reference)


def _single_group(trials) -> tuple[str, TaskSpec, list]:
    trials = list(trials)
    if not trials:
        raise EmptyInput("no trials")
    model_ids = {t.model_id for t in trials}
    specs = {t.task_spec for t in trials}
    if len(model_ids) != 1 or len(specs) != 1:
        raise InvalidTrialSet(
            f"trials mix models {sorted(model_ids)} / subtasks "
            f"{sorted(s.subtask for s in specs)}"
        )
    index_keys = [(t.question_id, t.trial_index) for t in trials]
    if len(set(index_keys)) != len(index_keys):
        raise InvalidTrialSet("duplicate (question_id, trial_index)")
    return trials[0].model_id, trials[0].task_spec, trials


def score_accuracy(trials) -> dict:
    """Accuracy metrics for one model on one subtask.

    Returns {"kind": ..., "n": ...} plus kind-specific entries: r2/rmse for
    regression, accuracy for categorical, proportion_correct for judged
    subtasks, and price_consistency for the price subtask.
    """
    _, spec, trials = _single_group(trials)
    kind = spec.answer_kind
    result = {"kind": kind, "n": len(trials)}

    if kind == "numeric_regression":
        if any(t.answer_numeric is None or t.reference_value is None for t in trials):
            raise InvalidTrialSet(f"{spec.subtask}: regression trials need answer_numeric and reference_value")
        y_true = [t.reference_value for t in trials]
        y_pred = [t.answer_numeric for t in trials]
        r2, rmse = metrics(y_true, y_pred)
        result.update(r2=r2, rmse=rmse)
    elif kind == "categorical":
        if any(t.answer_label is None or t.reference_label is None for t in trials):
            raise InvalidTrialSet(f"{spec.subtask}: categorical trials need answer_label and reference_label")
        hits = sum(1 for t in trials if t.answer_label == t.reference_label)
        result.update(accuracy=hits / len(trials))
    elif kind == "judged_correctness":
        if any(t.judged_correct is None for t in trials):
            raise InvalidTrialSet(f"{spec.subtask}: judged trials need judged_correct")
        hits = sum(1 for t in trials if t.judged_correct)
        result.update(proportion_correct=hits / len(trials))
    else:  # price_consistency
        if any(t.answer_numeric is None or t.reference_value is None for t in trials):
            raise InvalidTrialSet("SP: price trials need answer_numeric and reference_value")
        hits = sum(
            1 for t in trials
            if within_relative_tolerance(t.answer_numeric, t.reference_value)
        )
        result.update(price_consistency=hits / len(trials))
    return result


@dataclass(frozen=True)
class StabilityScore:
    """Pass proportions per protocol; excluded trials are reported, not scored."""

    consistency: float | None
    robustness: float | None
    n_consistency: int
    n_robustness: int
    excluded: tuple = ()


def score_stability(trials) -> StabilityScore:
    """Proportion of stability trials passing the +-10 % / manual-flag rule.

    A trial passes when its numeric answer is within +-10 % of the reference
    (inclusive), or its recorded text flag is true. Numeric trials with a
    zero reference have no defined deviation; they are excluded and listed.
    """
    trials = list(trials)
    if not trials:
        raise EmptyInput("no stability trials")
    index_keys = [(t.model_id, t.question_id, t.trial_index) for t in trials]
    if len(set(index_keys)) != len(index_keys):
        raise InvalidTrialSet("duplicate (model_id, question_id, trial_index)")
    passes = {p: 0 for p in STABILITY_PROTOCOLS}
    counts = {p: 0 for p in STABILITY_PROTOCOLS}
    excluded = []
    for t in trials:
        if t.stability_protocol is None:
            raise InvalidTrialSet(
                f"trial {t.question_id}/{t.trial_index} has no stability_protocol tag"
            )
        if t.answer_numeric is not None and t.reference_value is not None:
            try:
                ok = within_relative_tolerance(t.answer_numeric, t.reference_value)
            except UndefinedDeviation:
                excluded.append((t.question_id, t.trial_index, "reference 0"))
                continue
        elif t.text_pass is not None:
            ok = bool(t.text_pass)
        else:
            raise InvalidTrialSet(
                f"trial {t.question_id}/{t.trial_index} needs numeric answer+reference or text_pass"
            )
        counts[t.stability_protocol] += 1
        passes[t.stability_protocol] += int(ok)
    return StabilityScore(
        consistency=(passes["consistency"] / counts["consistency"]) if counts["consistency"] else None,
        robustness=(passes["robustness"] / counts["robustness"]) if counts["robustness"] else None,
        n_consistency=counts["consistency"],
        n_robustness=counts["robustness"],
        excluded=tuple(excluded),
    )


def score_reasoning(ballots, model_id: str, n_models: int | None = None,
                    n_tests: int | None = None) -> float:
    """A model's share of all reasoning score mass over N ballots.

    proportion = sum of the model's scores / (N * (1 + x) * x / 2).
    """
    ballots = list(ballots)
    if not ballots:
        raise EmptyInput("no ballots")
    xs = {validate_ballot(b) for b in ballots}
    if len(xs) != 1:
        raise InvalidBallot(f"ballots disagree on the number of models: {sorted(xs)}")
    x = xs.pop()
    if n_models is not None and n_models != x:
        raise InvalidBallot(f"ballots cover {x} models, expected {n_models}")
    if n_tests is not None and n_tests != len(ballots):
        raise InvalidBallot(f"{len(ballots)} ballots, expected {n_tests}")
    for b in ballots:
        if model_id not in b.scores:
            raise InvalidBallot(f"ballot {b.test_id} does not score model {model_id!r}")
    total = sum(b.scores[model_id] for b in ballots)
    return total / (len(ballots) * (1 + x) * x / 2)


@dataclass(frozen=True)
class BenchmarkReport:
    """All scores for a set of candidate models, ready for tabulation."""

    accuracy: dict  # model_id -> subtask -> metric dict
    stability: dict  # model_id -> subtask -> StabilityScore
    reasoning: dict  # model_id -> axis -> proportion (empty when no ballots)
    models: tuple

    def to_json_dict(self) -> dict:
        out = {"models": list(self.models), "accuracy": {}, "stability": {}, "reasoning": {}}
        for model in self.models:
            out["accuracy"][model] = {
                sub: dict(sorted(vals.items())) for sub, vals in sorted(self.accuracy.get(model, {}).items())
            }
            out["stability"][model] = {
                sub: {
                    "consistency": s.consistency,
                    "robustness": s.robustness,
                    "n_consistency": s.n_consistency,
                    "n_robustness": s.n_robustness,
                    "excluded": [list(e) for e in s.excluded],
                }
                for sub, s in sorted(self.stability.get(model, {}).items())
            }
            if model in self.reasoning:
                out["reasoning"][model] = dict(sorted(self.reasoning[model].items()))
        return out

    def accuracy_rows(self) -> list[tuple]:
        rows = []
        for model in self.models:
            for subtask, vals in sorted(self.accuracy.get(model, {}).items()):
                for metric_name in sorted(vals):
                    if metric_name in ("kind", "n"):
                        continue
                    rows.append((model, task_of_subtask(subtask), subtask, metric_name, vals[metric_name]))
        return rows

    def stability_rows(self) -> list[tuple]:
        rows = []
        for model in self.models:
            for subtask, s in sorted(self.stability.get(model, {}).items()):
                if s.consistency is not None:
                    rows.append((model, subtask, "consistency", s.consistency, s.n_consistency))
                if s.robustness is not None:
                    rows.append((model, subtask, "robustness", s.robustness, s.n_robustness))
        return rows

    def reasoning_rows(self) -> list[tuple]:
        rows = []
        for model in self.models:
            for axis, value in sorted(self.reasoning.get(model, {}).items()):
                rows.append((model, axis, value))
        return rows


def build_report(trials, ballots=()) -> BenchmarkReport:
    """Score every (model, subtask) group and every reasoning axis.

    Trials tagged with a stability protocol feed the stability section; the
    rest feed accuracy. Output is independent of input ordering.
    """
    trials = list(trials)
    ballots = list(ballots)
    if not trials and not ballots:
        raise EmptyInput("no trials or ballots")

    accuracy_groups: dict = {}
    stability_groups: dict = {}
    models = set()
    for t in trials:
        models.add(t.model_id)
        target = stability_groups if t.stability_protocol is not None else accuracy_groups
        target.setdefault((t.model_id, t.task_spec.subtask), []).append(t)

    accuracy: dict = {}
    for (model, subtask), group in sorted(accuracy_groups.items()):
        group = sorted(group, key=lambda t: (t.question_id, t.trial_index))
        accuracy.setdefault(model, {})[subtask] = score_accuracy(group)

    stability: dict = {}
    for (model, subtask), group in sorted(stability_groups.items()):
        group = sorted(group, key=lambda t: (t.question_id, t.trial_index))
        stability.setdefault(model, {})[subtask] = score_stability(group)

    reasoning: dict = {}
    if ballots:
        by_axis: dict = {}
        for b in ballots:
            by_axis.setdefault(b.axis, []).append(b)
        ballot_models = sorted({m for b in ballots for m in b.scores})
        models.update(ballot_models)
        for axis, axis_ballots in sorted(by_axis.items()):
            axis_ballots = sorted(axis_ballots, key=lambda b: b.test_id)
            for model in ballot_models:
                reasoning.setdefault(model, {})[axis] = score_reasoning(axis_ballots, model)

    return BenchmarkReport(
        accuracy=accuracy,
        stability=stability,
        reasoning=reasoning,
        models=tuple(sorted(models)),
    )


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

TRIAL_CSV_COLUMNS = (
    "model_id", "task", "subtask", "question_id", "trial_index",
    "answer_numeric", "answer_label", "judged_correct",
    "reference_value", "reference_label", "stability_protocol", "text_pass",
)


def _opt_float(raw):
    raw = (raw or "").strip()
    return float(raw) if raw else None


def _opt_bool(raw, lineno):
    raw = (raw or "").strip().lower()
    if not raw:
        return None
    if raw in ("1", "true", "yes"):
        return True
    if raw in ("0", "false", "no"):
        return False
    raise ParseError(f"bad boolean {raw!r}", line=lineno)


def load_trials(path) -> list[TrialRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"model_id", "task", "subtask", "question_id", "trial_index"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise ParseError(f"{path}: need columns {sorted(needed)}", line=1)
        trials = []
        for i, rec in enumerate(reader, start=2):
            try:
                trials.append(
                    TrialRecord(
                        model_id=rec["model_id"].strip(),
                        task_spec=TaskSpec(task=rec["task"].strip(), subtask=rec["subtask"].strip()),
                        question_id=rec["question_id"].strip(),
                        trial_index=int(rec["trial_index"]),
                        answer_numeric=_opt_float(rec.get("answer_numeric")),
                        answer_label=(rec.get("answer_label") or "").strip() or None,
                        judged_correct=_opt_bool(rec.get("judged_correct"), i),
                        reference_value=_opt_float(rec.get("reference_value")),
                        reference_label=(rec.get("reference_label") or "").strip() or None,
                        stability_protocol=(rec.get("stability_protocol") or "").strip() or None,
                        text_pass=_opt_bool(rec.get("text_pass"), i),
                    )
                )
            except (ValueError, InvalidInput) as exc:
                raise ParseError(f"bad trial row: {exc}", line=i)
    if not trials:
        raise EmptyInput(f"no trials in {path}")
    return trials


def load_ballots(path) -> list[ReasoningBallot]:
    """Ballot CSV rows (test_id, model_id, score [, axis]) grouped per test."""
    grouped: dict = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"test_id", "model_id", "score"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise ParseError(f"{path}: need columns {sorted(needed)}", line=1)
        has_axis = "axis" in reader.fieldnames
        for i, rec in enumerate(reader, start=2):
            test_id = rec["test_id"].strip()
            axis = (rec.get("axis") or "").strip() if has_axis else ""
            key = (test_id, axis or "overall")
            entry = grouped.setdefault(key, {})
            model = rec["model_id"].strip()
            if model in entry:
                raise ParseError(f"ballot {test_id}: duplicate model {model}", line=i)
            try:
                entry[model] = int(rec["score"])
            except ValueError:
                raise ParseError(f"non-integer score {rec['score']!r}", line=i)
    if not grouped:
        raise EmptyInput(f"no ballots in {path}")
    return [
        ReasoningBallot(test_id=test_id, scores=scores, axis=axis)
        for (test_id, axis), scores in sorted(grouped.items())
    ]


def write_report(report: BenchmarkReport, out_dir) -> dict:
    """Write report.json plus one CSV per figure family; returns the paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["report"] = json_path

    tables = (
        ("accuracy", ("model_id", "task", "subtask", "metric", "value"), report.accuracy_rows()),
        ("stability", ("model_id", "subtask", "protocol", "proportion", "n"), report.stability_rows()),
        ("reasoning", ("model_id", "axis", "proportion"), report.reasoning_rows()),
    )
    for name, header, rows in tables:
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
        paths[name] = path
    return paths

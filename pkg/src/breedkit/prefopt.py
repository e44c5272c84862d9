"""Preference-optimization objectives at a fully verifiable toy scale.

The answer policy is tabular: one logit row per (prompt, answer prefix)
state, softmax-normalized over the vocabulary. That makes every quantity
exactly computable and gradient-checkable:

  * answer log probability: sum of per-step log softmax terms
  * supervised fine-tuning loss: negative mean answer log probability
  * reward-model loss: -mean log sigmoid(score_preferred - score_rejected)
  * combined reward: r(x, y) = r(x, y) - beta * (log pi(y|x) - log ref(y|x))
  * policy updates: clipped-surrogate policy gradient (PPO-style) on the
    combined reward, seeded sampling, plain gradient ascent

The reward model is linear in prompt/answer token-count features, so its
gradient is exact as well. Training loops are single-threaded and
deterministic given the seed.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyInput,
    InvalidInput,
    InvalidRanking,
    InvalidToken,
    NumericalError,
    ParseError,
)

# exact KL is enumerated over all V**T answers up to this budget
_EXACT_KL_BUDGET = 4096


def _as_tokens(seq, vocab_size: int, what: str) -> tuple:
    tokens = tuple(int(t) for t in seq)
    for t in tokens:
        if not (0 <= t < vocab_size):
            raise InvalidToken(f"{what} token {t} outside vocabulary of size {vocab_size}")
    return tokens


class PolicyModel:
    """Tabular softmax policy over short answers.

    Logit rows are created lazily per (prompt, prefix) state: zeros when
    ``init_scale`` is 0 (uniform policy), otherwise seeded Gaussian noise
    derived from a stable per-state digest so results do not depend on touch
    order. A reference-role model is frozen: its rows may be read but never
    written or updated.
    """

    def __init__(self, vocab_size: int, context_length: int, init_scale: float = 0.0,
                 seed: int = 0, role: str = "policy"):
        if vocab_size < 2:
            raise InvalidInput("vocab_size must be >= 2")
        if context_length < 1:
            raise InvalidInput("context_length must be >= 1")
        if role not in ("policy", "reference"):
            raise InvalidInput(f"role must be policy or reference, got {role!r}")
        self.vocab_size = vocab_size
        self.context_length = context_length
        self.init_scale = float(init_scale)
        self.seed = int(seed)
        self.role = role
        self.frozen = role == "reference"
        self._rows: dict[tuple, np.ndarray] = {}

    # -- state access -------------------------------------------------

    def _make_row(self, key) -> np.ndarray:
        if self.init_scale == 0.0:
            return np.zeros(self.vocab_size)
        digest = zlib.crc32(repr(key).encode()) ^ (self.seed & 0xFFFFFFFF)
        rng = np.random.default_rng(digest)
        return self.init_scale * rng.standard_normal(self.vocab_size)

    def logits_row(self, x, prefix) -> np.ndarray:
        x = _as_tokens(x, self.vocab_size, "prompt")
        prefix = _as_tokens(prefix, self.vocab_size, "answer")
        if len(prefix) >= self.context_length:
            raise InvalidInput(
                f"prefix length {len(prefix)} exceeds context_length {self.context_length}"
            )
        key = (x, prefix)
        row = self._rows.get(key)
        if row is None:
            row = self._make_row(key)
            if self.frozen:
                return row  # do not grow a frozen model's table
            self._rows[key] = row
        return row

    def log_softmax_row(self, x, prefix) -> np.ndarray:
        logits = self.logits_row(x, prefix)
        shifted = logits - logits.max()
        return shifted - np.log(np.sum(np.exp(shifted)))

    def step_probabilities(self, x, prefix) -> np.ndarray:
        return np.exp(self.log_softmax_row(x, prefix))

    # -- mutation -----------------------------------------------------

    def set_logits(self, x, prefix, logits) -> None:
        if self.frozen:
            raise InvalidInput("reference model is frozen")
        logits = np.asarray(logits, dtype=np.float64)
        if logits.shape != (self.vocab_size,):
            raise InvalidInput(f"logit row must have shape ({self.vocab_size},)")
        key = (_as_tokens(x, self.vocab_size, "prompt"),
               _as_tokens(prefix, self.vocab_size, "answer"))
        self._rows[key] = logits.copy()

    def apply_gradient(self, grads: dict, learning_rate: float) -> None:
        """Gradient-ascent step: logits += lr * grad, row by row."""
        if self.frozen:
            raise InvalidInput("reference model is frozen")
        for key, grad in grads.items():
            row = self._rows.get(key)
            if row is None:
                row = self._make_row(key)
            self._rows[key] = row + learning_rate * grad

    def snapshot(self, role: str = "reference") -> "PolicyModel":
        """Frozen copy of the current parameters."""
        copy = PolicyModel(self.vocab_size, self.context_length,
                           init_scale=self.init_scale, seed=self.seed, role=role)
        copy.frozen = role == "reference"
        copy._rows = {k: v.copy() for k, v in self._rows.items()}
        return copy

    # -- sampling and enumeration --------------------------------------

    def sample_answer(self, x, rng: np.random.Generator, length: int | None = None) -> tuple:
        length = self.context_length if length is None else length
        answer = ()
        for _ in range(length):
            probs = self.step_probabilities(x, answer)
            answer = answer + (int(rng.choice(self.vocab_size, p=probs)),)
        return answer

    def enumerate_answers(self, length: int | None = None):
        length = self.context_length if length is None else length
        total = self.vocab_size ** length
        if total > _EXACT_KL_BUDGET:
            raise InvalidInput(f"answer space {total} too large to enumerate")
        answers = [()]
        for _ in range(length):
            answers = [a + (v,) for a in answers for v in range(self.vocab_size)]
        return answers


def answer_log_prob(policy: PolicyModel, x, y) -> float:
    """log pi(y|x) = sum over steps of log pi(y_t | x, y_{1:t-1})."""
    y = _as_tokens(y, policy.vocab_size, "answer")
    total = 0.0
    for t, token in enumerate(y):
        total += float(policy.log_softmax_row(x, y[:t])[token])
    return total


def sft_loss_and_grad(policy: PolicyModel, dataset) -> tuple[float, dict]:
    """Negative mean answer log probability and its exact logits gradient.

    The gradient maps (prompt, prefix) state -> d loss / d logits row, the
    per-step softmax-cross-entropy gradient (softmax - onehot) / n_pairs.
    """
    pairs = list(dataset)
    if not pairs:
        raise EmptyInput("SFT dataset is empty")
    loss = 0.0
    grads: dict[tuple, np.ndarray] = {}
    for x, y in pairs:
        x = _as_tokens(x, policy.vocab_size, "prompt")
        y = _as_tokens(y, policy.vocab_size, "answer")
        for t, token in enumerate(y):
            prefix = y[:t]
            log_probs = policy.log_softmax_row(x, prefix)
            loss -= float(log_probs[token])
            g = grads.setdefault((x, prefix), np.zeros(policy.vocab_size))
            g += np.exp(log_probs)
            g[token] -= 1.0
    n = len(pairs)
    return loss / n, {k: v / n for k, v in grads.items()}


@dataclass(frozen=True)
class PreferenceExample:
    """A prompt with one preferred and one rejected answer."""

    prompt: tuple
    preferred: tuple
    rejected: tuple

    def __post_init__(self):
        object.__setattr__(self, "prompt", tuple(int(t) for t in self.prompt))
        object.__setattr__(self, "preferred", tuple(int(t) for t in self.preferred))
        object.__setattr__(self, "rejected", tuple(int(t) for t in self.rejected))
        if self.preferred == self.rejected:
            raise InvalidRanking("preferred and rejected answers must differ")


class RewardModel:
    """Linear scalar scorer of (prompt, answer) token-count features.

    features = [prompt token counts | answer token counts | 1]; the score is
    weights . features, so gradients are exact.
    """

    def __init__(self, vocab_size: int, weights=None):
        if vocab_size < 2:
            raise InvalidInput("vocab_size must be >= 2")
        self.vocab_size = vocab_size
        n = 2 * vocab_size + 1
        if weights is None:
            self.weights = np.zeros(n)
        else:
            self.weights = np.asarray(weights, dtype=np.float64).copy()
            if self.weights.shape != (n,):
                raise InvalidInput(f"weights must have shape ({n},)")

    def features(self, x, y) -> np.ndarray:
        x = _as_tokens(x, self.vocab_size, "prompt")
        y = _as_tokens(y, self.vocab_size, "answer")
        phi = np.zeros(2 * self.vocab_size + 1)
        for t in x:
            phi[t] += 1.0
        for t in y:
            phi[self.vocab_size + t] += 1.0
        phi[-1] = 1.0
        return phi

    def score(self, x, y) -> float:
        return float(self.weights @ self.features(x, y))


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    ez = np.exp(z)
    return ez / (1.0 + ez)


def rm_loss_and_grad(rm: RewardModel, dataset) -> tuple[float, np.ndarray]:
    """-mean log sigmoid(score_w - score_l) and its exact weight gradient."""
    examples = list(dataset)
    if not examples:
        raise EmptyInput("preference dataset is empty")
    loss = 0.0
    grad = np.zeros_like(rm.weights)
    for ex in examples:
        delta_phi = rm.features(ex.prompt, ex.preferred) - rm.features(ex.prompt, ex.rejected)
        gap = float(rm.weights @ delta_phi)
        # -log sigmoid(gap), computed stably
        loss += float(np.logaddexp(0.0, -gap))
        # d/dw = -(1 - sigmoid(gap)) * delta_phi = -sigmoid(-gap) * delta_phi
        grad -= _sigmoid(-gap) * delta_phi
    n = len(examples)
    return loss / n, grad / n


def pairwise_expand(prompt, answers, ranking=None) -> list[PreferenceExample]:
    """All K(K-1)/2 (better, worse) pairs from K ranked answers.

    ``ranking``: optional index order, best first; by default the answers
    are taken as already ordered best to worst.
    """
    answers = [tuple(int(t) for t in a) for a in answers]
    if len(answers) < 2:
        raise InvalidInput("need at least K=2 answers to form pairs")
    if ranking is None:
        ranking = list(range(len(answers)))
    ranking = [int(i) for i in ranking]
    if sorted(ranking) != list(range(len(answers))):
        raise InvalidRanking(f"ranking must be a total order of 0..{len(answers) - 1}")
    ordered = [answers[i] for i in ranking]
    if len(set(ordered)) != len(ordered):
        raise InvalidRanking("duplicate answers in ranking")
    prompt = tuple(int(t) for t in prompt)
    return [
        PreferenceExample(prompt=prompt, preferred=ordered[i], rejected=ordered[j])
        for i in range(len(ordered))
        for j in range(i + 1, len(ordered))
    ]


def combined_reward(rm: RewardModel, policy: PolicyModel, reference: PolicyModel,
                    x, y, beta: float) -> float:
    """r(x, y) = r_rm(x, y) - beta * (log pi(y|x) - log ref(y|x))."""
    if beta < 0:
        raise InvalidInput("beta must be >= 0")
    if not reference.frozen:
        raise InvalidInput("reference model must be frozen")
    penalty = 0.0
    if beta != 0.0:
        penalty = beta * (answer_log_prob(policy, x, y) - answer_log_prob(reference, x, y))
    return rm.score(x, y) - penalty


def mean_kl(policy: PolicyModel, reference: PolicyModel, prompts,
            rng: np.random.Generator | None = None, n_samples: int = 256) -> float:
    """KL(pi || ref) of the answer distribution, averaged over prompts.

    Exact enumeration when the answer space fits the budget; otherwise a
    seeded sample estimate of E_pi[log pi - log ref].
    """
    prompts = [tuple(int(t) for t in x) for x in prompts]
    total = 0.0
    for x in prompts:
        if policy.vocab_size ** policy.context_length <= _EXACT_KL_BUDGET:
            kl = 0.0
            for y in policy.enumerate_answers():
                lp = answer_log_prob(policy, x, y)
                kl += float(np.exp(lp)) * (lp - answer_log_prob(reference, x, y))
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            draws = [policy.sample_answer(x, rng) for _ in range(n_samples)]
            kl = float(np.mean([
                answer_log_prob(policy, x, y) - answer_log_prob(reference, x, y)
                for y in draws
            ]))
        total += kl
    return total / len(prompts)


@dataclass(frozen=True)
class RLHFConfig:
    """Hyperparameters for the policy-optimization stage."""

    beta: float = 0.1
    learning_rate: float = 0.1
    ppo_clip: float = 0.2
    iterations: int = 100
    seed: int = 0
    samples_per_prompt: int = 4
    epochs: int = 1

    def __post_init__(self):
        if self.beta < 0:
            raise InvalidInput("beta must be >= 0")
        if not (0.0 < self.ppo_clip < 1.0):
            raise InvalidInput("ppo_clip must be in (0, 1)")
        if self.learning_rate < 0:
            raise InvalidInput("learning_rate must be >= 0")
        if self.iterations < 0 or self.samples_per_prompt < 1 or self.epochs < 1:
            raise InvalidInput("iterations >= 0, samples_per_prompt >= 1, epochs >= 1")


def rlhf_step(policy: PolicyModel, reference: PolicyModel, rm: RewardModel,
              prompts, config: RLHFConfig, rng: np.random.Generator,
              iteration: int = 0) -> dict:
    """One PPO-style iteration: sample, score, clipped-surrogate update.

    Answers are sampled from the current policy; each sample's advantage is
    its combined reward. The surrogate min(ratio * A, clip(ratio) * A) is
    ascended once per epoch; with a single epoch the ratio is identically 1,
    so clipping only engages for epochs > 1.
    """
    prompts = [tuple(int(t) for t in x) for x in prompts]
    if not prompts:
        raise EmptyInput("no prompts")
    if not reference.frozen:
        raise InvalidInput("reference model must be frozen")

    batch = []
    rewards = []
    for x in prompts:
        for _ in range(config.samples_per_prompt):
            y = policy.sample_answer(x, rng)
            reward = combined_reward(rm, policy, reference, x, y, config.beta)
            old_logp = answer_log_prob(policy, x, y)
            batch.append((x, y, old_logp, reward))
            rewards.append(reward)

    clip_lo, clip_hi = 1.0 - config.ppo_clip, 1.0 + config.ppo_clip
    clipped = 0
    total = 0
    for _ in range(config.epochs):
        grads: dict[tuple, np.ndarray] = {}
        for x, y, old_logp, advantage in batch:
            new_logp = answer_log_prob(policy, x, y)
            ratio = float(np.exp(new_logp - old_logp))
            total += 1
            if not (clip_lo <= ratio <= clip_hi):
                clipped += 1
                unclipped = ratio * advantage
                capped = min(max(ratio, clip_lo), clip_hi) * advantage
                if capped <= unclipped:
                    continue  # clipped branch is the min: zero gradient
            # d surrogate / d logits = A * ratio * d log pi / d logits
            scale = advantage * ratio / len(batch)
            for t, token in enumerate(y):
                prefix = y[:t]
                probs = policy.step_probabilities(x, prefix)
                g = grads.setdefault((x, prefix), np.zeros(policy.vocab_size))
                g -= scale * probs
                g[token] += scale
        for key, grad in grads.items():
            if not np.isfinite(grad).all():
                raise NumericalError("non-finite policy gradient", iteration=iteration)
        policy.apply_gradient(grads, config.learning_rate)

    return {
        "iteration": iteration,
        "mean_reward": float(np.mean(rewards)),
        "mean_kl": mean_kl(policy, reference, prompts, rng=rng),
        "clip_fraction": clipped / total if total else 0.0,
    }


def run_rlhf(policy: PolicyModel, reference: PolicyModel, rm: RewardModel,
             prompts, config: RLHFConfig) -> list[dict]:
    """config.iterations PPO iterations; one diagnostics dict per iteration."""
    rng = np.random.default_rng(config.seed)
    return [
        rlhf_step(policy, reference, rm, prompts, config, rng, iteration=i)
        for i in range(config.iterations)
    ]


def train_sft(policy: PolicyModel, dataset, learning_rate: float = 0.5,
              iterations: int = 100) -> list[dict]:
    """Full-batch gradient descent on the SFT loss; per-iteration diagnostics."""
    history = []
    for i in range(iterations):
        loss, grads = sft_loss_and_grad(policy, dataset)
        if not np.isfinite(loss):
            raise NumericalError("non-finite SFT loss", iteration=i)
        # descend the loss: logits -= lr * dL/dlogits
        policy.apply_gradient({k: -g for k, g in grads.items()}, learning_rate)
        history.append({"iteration": i, "loss": loss})
    return history


def train_reward(rm: RewardModel, dataset, learning_rate: float = 0.5,
                 iterations: int = 100) -> list[dict]:
    """Full-batch gradient descent on the pairwise reward loss."""
    history = []
    for i in range(iterations):
        loss, grad = rm_loss_and_grad(rm, dataset)
        if not np.isfinite(loss) or not np.isfinite(grad).all():
            raise NumericalError("non-finite reward-model loss/gradient", iteration=i)
        rm.weights = rm.weights - learning_rate * grad
        history.append({"iteration": i, "loss": loss})
    return history


def alternate_rm_ppo(policy: PolicyModel, reference: PolicyModel, rm: RewardModel,
                     prompts, preference_oracle, config: RLHFConfig,
                     rounds: int = 2, answers_per_prompt: int = 4,
                     rm_learning_rate: float = 0.5, rm_iterations: int = 50) -> list[dict]:
    """Iterate reward-model refresh and policy optimization.

    Each round samples ``answers_per_prompt`` distinct answers per prompt
    from the current policy, ranks them with ``preference_oracle(prompt,
    answers) -> index order (best first)``, expands the ranking into pairs,
    retrains the reward model on the fresh pairs, then resumes PPO.
    """
    if answers_per_prompt < 2:
        raise InvalidInput("answers_per_prompt must be >= 2")
    rng = np.random.default_rng(config.seed)
    history = []
    for round_index in range(rounds):
        examples = []
        for x in prompts:
            x = tuple(int(t) for t in x)
            answers, seen = [], set()
            attempts = 0
            while len(answers) < answers_per_prompt and attempts < 64 * answers_per_prompt:
                y = policy.sample_answer(x, rng)
                attempts += 1
                if y not in seen:
                    seen.add(y)
                    answers.append(y)
            if len(answers) < 2:
                continue  # policy has collapsed for this prompt; nothing to rank
            ranking = preference_oracle(x, answers)
            examples.extend(pairwise_expand(x, answers, ranking))
        if examples:
            train_reward(rm, examples, learning_rate=rm_learning_rate, iterations=rm_iterations)
        for i in range(config.iterations):
            diag = rlhf_step(policy, reference, rm, prompts, config, rng,
                             iteration=round_index * config.iterations + i)
            diag["round"] = round_index
            history.append(diag)
    return history


# ---------------------------------------------------------------------------
# Line-delimited JSON datasets
# ---------------------------------------------------------------------------


def _load_jsonl(path, required: tuple) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, ln in enumerate(fh, start=1):
            if not ln.strip():
                continue
            try:
                obj = json.loads(ln)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON: {exc}", line=lineno)
            for key in required:
                if key not in obj or not isinstance(obj[key], list):
                    raise ParseError(f"need list field {key!r}", line=lineno)
            rows.append(obj)
    if not rows:
        raise EmptyInput(f"no records in {path}")
    return rows


def load_sft_dataset(path) -> list[tuple]:
    """{"prompt": [ints], "answer": [ints]} per line."""
    return [
        (tuple(obj["prompt"]), tuple(obj["answer"]))
        for obj in _load_jsonl(path, ("prompt", "answer"))
    ]


def load_preference_dataset(path) -> list[PreferenceExample]:
    """{"prompt": [...], "chosen": [...], "rejected": [...]} per line."""
    return [
        PreferenceExample(prompt=obj["prompt"], preferred=obj["chosen"], rejected=obj["rejected"])
        for obj in _load_jsonl(path, ("prompt", "chosen", "rejected"))
    ]


def load_prompt_dataset(path) -> list[tuple]:
    """{"prompt": [...]} per line."""
    return [tuple(obj["prompt"]) for obj in _load_jsonl(path, ("prompt",))]


# ---------------------------------------------------------------------------
# Model persistence (JSON, deterministic key order)
# ---------------------------------------------------------------------------


def _encode_state(key) -> str:
    prompt, prefix = key
    return ",".join(map(str, prompt)) + ";" + ",".join(map(str, prefix))


def _decode_state(text: str) -> tuple:
    prompt_part, _, prefix_part = text.partition(";")
    prompt = tuple(int(t) for t in prompt_part.split(",") if t != "")
    prefix = tuple(int(t) for t in prefix_part.split(",") if t != "")
    return prompt, prefix


def save_policy(policy: PolicyModel, path) -> None:
    payload = {
        "vocab_size": policy.vocab_size,
        "context_length": policy.context_length,
        "init_scale": policy.init_scale,
        "seed": policy.seed,
        "role": policy.role,
        "rows": {
            _encode_state(k): [repr(float(v)) for v in row]
            for k, row in policy._rows.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_policy(path) -> PolicyModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    policy = PolicyModel(
        vocab_size=int(payload["vocab_size"]),
        context_length=int(payload["context_length"]),
        init_scale=float(payload["init_scale"]),
        seed=int(payload["seed"]),
        role=payload["role"],
    )
    rows = {
        _decode_state(k): np.array([float(v) for v in row], dtype=np.float64)
        for k, row in payload["rows"].items()
    }
    policy._rows = rows
    return policy


def save_reward_model(rm: RewardModel, path) -> None:
    payload = {
        "vocab_size": rm.vocab_size,
        "weights": [repr(float(w)) for w in rm.weights],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_reward_model(path) -> RewardModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return RewardModel(
        vocab_size=int(payload["vocab_size"]),
        weights=[float(w) for w in payload["weights"]],
    )

"""Group-relative policy optimization with asymmetric (clip-higher) clipping.

One training step samples ``tasks_per_batch`` tasks, draws ``group_size``
responses for each, turns verifier outcomes into shaped rewards, normalizes
them within the group, and runs ``epochs_per_batch`` Adam ascent epochs on the
token-mean clipped surrogate.  The loss has no entropy bonus and no KL term.
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from typing import Sequence

import numpy as np

from .certainty import sequence_certainty
from .dace import DaceConfig, ResponseGroup, estimate_difficulty, shape_group
from .optim import Adam
from .seq_env import MAX_RESPONSE_LEN, SHORTCUT, TaskInstance, verify
from .seq_policy import BOS, TabularPolicy, log_softmax, sample_rollouts


class TrainingDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 16
    eps_low: float = 0.2
    eps_high: float = 0.28
    learning_rate: float = 0.05
    epochs_per_batch: int = 4
    tasks_per_batch: int = 8
    std_floor: float = 1e-6
    steps: int = 200
    max_len: int = MAX_RESPONSE_LEN

    def __post_init__(self):
        if self.group_size < 1 or self.tasks_per_batch < 1 or self.steps < 1:
            raise ValueError("group_size, tasks_per_batch and steps must be >= 1")
        if self.epochs_per_batch < 1:
            raise ValueError("epochs_per_batch must be >= 1")
        if not (self.eps_low > 0 and self.eps_high > 0):
            raise ValueError("clip epsilons must be positive")
        if self.eps_low >= 1:
            raise ValueError("eps_low must be < 1 so the lower clip bound stays positive")
        if not self.std_floor > 0:
            raise ValueError("std_floor must be positive")
        if not (1 <= self.max_len <= MAX_RESPONSE_LEN):
            raise ValueError(f"max_len must lie in [1, {MAX_RESPONSE_LEN}]")


@dataclass(frozen=True)
class TrainingMetricsRecord:
    step: int
    mean_total_reward: float
    mean_external_reward: float
    mean_raw_certainty: float
    mean_step_entropy: float
    mean_response_length: float
    fraction_hard: float
    shortcut_rate: float


METRICS_HEADER = tuple(f.name for f in fields(TrainingMetricsRecord))


def group_advantages(total_rewards: Sequence[float], std_floor: float = 1e-6) -> list[float]:
    """``(r - mean) / std`` with population std; all zeros below ``std_floor``."""
    r = np.asarray(total_rewards, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("cannot compute advantages of an empty group")
    std = float(np.std(r))
    if std < std_floor:
        return [0.0] * int(r.size)
    return [float(a) for a in (r - np.mean(r)) / max(std, std_floor)]


def clipped_surrogate(ratio: float, advantage: float, eps_low: float, eps_high: float) -> float:
    if not ratio > 0:
        raise ValueError(f"probability ratio must be positive, got {ratio!r}")
    clipped = min(max(ratio, 1.0 - eps_low), 1.0 + eps_high)
    return min(ratio * advantage, clipped * advantage)


@dataclass
class _Batch:
    """Flat per-token view of one step's rollouts."""

    rows: np.ndarray
    tokens: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray


def surrogate_and_gradient(
    policy: TabularPolicy, batch: _Batch, eps_low: float, eps_high: float
) -> tuple[float, np.ndarray]:
    """Token-mean clipped surrogate and its gradient w.r.t. the whole table."""
    n = batch.tokens.shape[0]
    grad = np.zeros_like(policy.table)
    if n == 0:
        return 0.0, grad
    logp = log_softmax(policy.table[batch.rows] / policy.temperature)
    idx = np.arange(n)
    ratio = np.exp(logp[idx, batch.tokens] - batch.old_log_probs)
    unclipped = ratio * batch.advantages
    clipped = np.clip(ratio, 1.0 - eps_low, 1.0 + eps_high) * batch.advantages
    value = float(np.mean(np.minimum(unclipped, clipped)))
    weight = np.where(unclipped <= clipped, unclipped, 0.0) / n
    # d log p(t) / d logits = (onehot(t) - p) / T
    per_token = -np.exp(logp) * weight[:, None]
    per_token[idx, batch.tokens] += weight
    np.add.at(grad, batch.rows, per_token / policy.temperature)
    grad[0] = 0.0
    return value, grad


def _rollout_batch(policy, rollouts, advantages, keep) -> _Batch:
    rows, toks, old = [], [], []
    per_token_adv = []
    for i in np.flatnonzero(keep):
        r = rollouts[i]
        prev = [BOS] + list(r.tokens[:-1])
        rows.extend((r.task_id, pos, p) for pos, p in enumerate(prev))
        toks.extend(r.tokens)
        old.extend(r.token_log_probs)
        per_token_adv.extend([advantages[i]] * r.length)
    return _Batch(
        rows=policy.row_ids(rows, create=True),
        tokens=np.asarray(toks, dtype=np.intp),
        old_log_probs=np.asarray(old, dtype=float),
        advantages=np.asarray(per_token_adv, dtype=float),
    )


def _write_row(writer, fh, record: TrainingMetricsRecord) -> None:
    writer.writerow([str(record.step)] + [repr(float(v)) for v in astuple(record)[1:]])
    fh.flush()


def train(
    policy: TabularPolicy,
    tasks: Sequence[TaskInstance],
    grpo_cfg: GrpoConfig,
    dace_cfg: DaceConfig | None,
    seed: int,
    metrics_path=None,
) -> tuple[TabularPolicy, list[TrainingMetricsRecord]]:
    """Train ``policy`` in place; ``dace_cfg=None`` gives plain GRPO on verifier outcomes.

    Returns the policy and one metrics record per step.  When ``metrics_path``
    is given, records are also streamed there as CSV, flushed every step.
    """
    if not tasks:
        raise ValueError("task set is empty")
    by_id = {t.task_id: t for t in tasks}
    rng = np.random.default_rng(seed)
    opt = Adam(policy.table.shape, lr=grpo_cfg.learning_rate)
    beta_log = dace_cfg.beta_threshold if dace_cfg is not None else DaceConfig().beta_threshold
    n = grpo_cfg.group_size
    history: list[TrainingMetricsRecord] = []

    fh = open(metrics_path, "w", newline="") if metrics_path is not None else None
    writer = csv.writer(fh, lineterminator="\n") if fh else None
    if writer:
        writer.writerow(METRICS_HEADER)
    try:
        for step in range(grpo_cfg.steps):
            if not np.all(np.isfinite(policy.table)):
                raise TrainingDivergenceError(f"non-finite logits before step {step}")
            k = min(grpo_cfg.tasks_per_batch, len(tasks))
            picked = [tasks[i] for i in rng.choice(len(tasks), size=k, replace=False)]
            task_ids = np.repeat([t.task_id for t in picked], n)
            rollouts = sample_rollouts(policy, task_ids, grpo_cfg.max_len, rng)

            totals, externals, advantages, keep, hard = [], [], [], [], 0
            for g, task in enumerate(picked):
                group = rollouts[g * n:(g + 1) * n]
                outcomes = [verify(by_id[r.task_id], r.tokens).correct for r in group]
                if dace_cfg is None:
                    ext = [float(o) for o in outcomes]
                    tot = ext
                    difficulty = estimate_difficulty(outcomes)
                else:
                    shaped = shape_group(
                        ResponseGroup(task.task_id, [r.tokens for r in group],
                                      [r.token_log_probs for r in group], outcomes),
                        dace_cfg,
                    )
                    ext = [b.external for b in shaped]
                    tot = [b.total for b in shaped]
                    difficulty = shaped[0].difficulty
                hard += difficulty > beta_log
                externals += ext
                totals += tot
                adv = group_advantages(tot, grpo_cfg.std_floor)
                advantages += adv
                # degenerate groups drop out of the loss entirely
                keep += [any(a != 0.0 for a in adv)] * n

            batch = _rollout_batch(policy, rollouts, advantages, keep)
            opt.grow(policy.n_rows)
            if batch.tokens.size:
                for _ in range(grpo_cfg.epochs_per_batch):
                    value, grad = surrogate_and_gradient(policy, batch, grpo_cfg.eps_low, grpo_cfg.eps_high)
                    if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                        raise TrainingDivergenceError(
                            f"non-finite surrogate at step {step}: value={value!r}, "
                            f"max |logit|={float(np.max(np.abs(policy.table)))!r}"
                        )
                    policy.add_to_rows(opt.step(grad))

            record = TrainingMetricsRecord(
                step=step,
                mean_total_reward=float(np.mean(totals)),
                mean_external_reward=float(np.mean(externals)),
                mean_raw_certainty=float(np.mean([sequence_certainty(r.token_log_probs).raw for r in rollouts])),
                mean_step_entropy=float(np.mean(np.concatenate([r.step_entropies for r in rollouts]))),
                mean_response_length=float(np.mean([r.length for r in rollouts])),
                fraction_hard=hard / len(picked),
                shortcut_rate=float(np.mean([r.tokens[0] == SHORTCUT for r in rollouts])),
            )
            history.append(record)
            if writer:
                _write_row(writer, fh, record)
    finally:
        if fh:
            fh.close()
    return policy, history


def sample_correctness(
    policy: TabularPolicy, tasks: Sequence[TaskInstance], k: int, rng: np.random.Generator,
    max_len: int = MAX_RESPONSE_LEN,
) -> np.ndarray:
    """Boolean ``(len(tasks), k)`` matrix of genuine (non-shortcut) successes."""
    task_ids = np.repeat([t.task_id for t in tasks], k)
    rollouts = sample_rollouts(policy, task_ids, max_len, rng)
    by_id = {t.task_id: t for t in tasks}
    flat = []
    for r in rollouts:
        out = verify(by_id[r.task_id], r.tokens)
        flat.append(bool(out.correct) and not out.via_shortcut)
    return np.asarray(flat, dtype=bool).reshape(len(tasks), k)


def pass_at_k_curve(correct: np.ndarray, ks: Sequence[int]) -> list[float]:
    """pass@k using the first ``k`` samples of a fixed pool for every ``k``."""
    correct = np.asarray(correct, dtype=bool)
    out = []
    for k in ks:
        if not (1 <= k <= correct.shape[1]):
            raise ValueError(f"k={k} outside the sample pool of size {correct.shape[1]}")
        out.append(float(np.mean(np.any(correct[:, :k], axis=1))))
    return out


def evaluate(
    policy: TabularPolicy, tasks: Sequence[TaskInstance], samples_per_task: int, seed: int,
    max_len: int = MAX_RESPONSE_LEN,
) -> tuple[float, float]:
    """Return ``(mean@k, pass@k)``; shortcut-led successes count as failures."""
    if samples_per_task < 1:
        raise ValueError("samples_per_task must be >= 1")
    correct = sample_correctness(policy, tasks, samples_per_task, np.random.default_rng(seed), max_len)
    return float(np.mean(correct)), float(np.mean(np.any(correct, axis=1)))

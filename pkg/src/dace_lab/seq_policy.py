"""Tabular autoregressive softmax policy over the task vocabulary.

Logits live in a table keyed by the context ``(task_id, position,
previous_token)``; position 0 uses ``BOS`` as its previous token.  Contexts
that were never written read as all-zero logits, i.e. a uniform distribution.
All probabilities, log-probabilities and entropies are those of the
temperature-adjusted distribution ``softmax(logits / temperature)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .seq_env import EOS, MAX_RESPONSE_LEN, VOCAB_SIZE, TaskInstance, check_tokens, token_id, token_name

BOS = -1

Context = tuple[int, int, int]


def _prev_name(prev: int) -> str:
    return "BOS" if prev == BOS else token_name(prev)


def format_context(ctx: Context) -> str:
    task_id, pos, prev = ctx
    return f"{task_id}:{pos}:{_prev_name(prev)}"


def parse_context(text: str) -> Context:
    task_id, pos, prev = text.split(":")
    return int(task_id), int(pos), BOS if prev == "BOS" else token_id(prev)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def entropy_from_log_probs(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp)
    return -np.sum(np.where(p > 0, p * logp, 0.0), axis=-1)


class TabularPolicy:
    """Sparse logit table with dense row storage.

    Row 0 of the backing array is a permanent all-zero row that every unseen
    context resolves to.
    """

    def __init__(self, temperature: float = 0.6, vocab_size: int = VOCAB_SIZE):
        if not temperature > 0:
            raise ValueError("temperature must be positive")
        self.temperature = float(temperature)
        self.vocab_size = vocab_size
        self._index: dict[Context, int] = {}
        self._table = np.zeros((1, vocab_size))

    # -- table access -----------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self._table.shape[0]

    @property
    def table(self) -> np.ndarray:
        return self._table

    def contexts(self) -> list[Context]:
        return sorted(self._index)

    def row_ids(self, keys: Iterable[Context], create: bool = False) -> np.ndarray:
        if not create:
            get = self._index.get
            return np.fromiter((get(k, 0) for k in keys), dtype=np.intp)
        out = []
        new = 0
        for k in keys:
            r = self._index.get(k)
            if r is None:
                r = self._table.shape[0] + new
                self._index[k] = r
                new += 1
            out.append(r)
        if new:
            self._table = np.vstack([self._table, np.zeros((new, self.vocab_size))])
        return np.asarray(out, dtype=np.intp)

    def logits(self, ctx: Context) -> np.ndarray:
        return self._table[self._index.get(ctx, 0)].copy()

    def set_logits(self, ctx: Context, values: Sequence[float]) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.vocab_size,):
            raise ValueError(f"expected {self.vocab_size} logits")
        row = self.row_ids([ctx], create=True)[0]
        self._table[row] = values

    def add_to_rows(self, delta: np.ndarray) -> None:
        """Add a full-table delta; the sentinel row stays zero."""
        self._table += delta
        self._table[0] = 0.0

    def log_probs(self, ctx: Context) -> np.ndarray:
        return log_softmax(self.logits(ctx) / self.temperature)

    def probs(self, ctx: Context) -> np.ndarray:
        return np.exp(self.log_probs(ctx))

    def copy(self) -> "TabularPolicy":
        other = TabularPolicy(self.temperature, self.vocab_size)
        other._index = dict(self._index)
        other._table = self._table.copy()
        return other

    # -- checkpoints --------------------------------------------------------

    def dumps(self) -> str:
        lines = [f"# temperature={self.temperature!r}\n"]
        for ctx in self.contexts():
            row = self._table[self._index[ctx]]
            for tok in range(self.vocab_size):
                if row[tok] != 0.0:
                    lines.append(f"{format_context(ctx)}\t{token_name(tok)}\t{float(row[tok])!r}\n")
        return "".join(lines)

    @classmethod
    def loads(cls, text: str) -> "TabularPolicy":
        temperature = None
        entries = []
        for line in text.splitlines():
            if line.startswith("# temperature="):
                temperature = float(line.split("=", 1)[1])
            elif line.strip() and not line.startswith("#"):
                ctx, tok, value = line.split("\t")
                entries.append((parse_context(ctx), token_id(tok), float(value)))
        if temperature is None:
            raise ValueError("checkpoint is missing its temperature header")
        policy = cls(temperature)
        for ctx, tok, value in entries:
            row = policy.row_ids([ctx], create=True)[0]
            policy._table[row, tok] = value
        return policy


@dataclass(frozen=True)
class Rollout:
    task_id: int
    tokens: tuple[int, ...]
    token_log_probs: tuple[float, ...]
    step_entropies: tuple[float, ...]
    length: int


def sample_rollouts(
    policy: TabularPolicy, task_ids: Sequence[int], max_len: int, rng: np.random.Generator
) -> list[Rollout]:
    """Sample one response per entry of ``task_ids``, all in lockstep."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    task_ids = np.asarray(task_ids, dtype=np.intp)
    b = task_ids.shape[0]
    tokens = np.full((b, max_len), -1, dtype=np.intp)
    logps = np.zeros((b, max_len))
    ents = np.zeros((b, max_len))
    lengths = np.zeros(b, dtype=np.intp)
    prev = np.full(b, BOS, dtype=np.intp)
    active = np.arange(b)

    for pos in range(max_len):
        if active.size == 0:
            break
        rows = policy.row_ids(zip(task_ids[active].tolist(), [pos] * active.size, prev[active].tolist()))
        lp = log_softmax(policy.table[rows] / policy.temperature)
        cdf = np.cumsum(np.exp(lp), axis=1)
        u = rng.random(active.size) * cdf[:, -1]
        tok = np.minimum(np.sum(cdf <= u[:, None], axis=1), policy.vocab_size - 1)
        tokens[active, pos] = tok
        logps[active, pos] = lp[np.arange(active.size), tok]
        ents[active, pos] = entropy_from_log_probs(lp)
        lengths[active] = pos + 1
        prev[active] = tok
        active = active[tok != EOS]

    return [
        Rollout(
            task_id=int(task_ids[i]),
            tokens=tuple(int(t) for t in tokens[i, : lengths[i]]),
            token_log_probs=tuple(float(x) for x in logps[i, : lengths[i]]),
            step_entropies=tuple(float(x) for x in ents[i, : lengths[i]]),
            length=int(lengths[i]),
        )
        for i in range(b)
    ]


def sample_response(
    policy: TabularPolicy, task: TaskInstance, max_len: int = MAX_RESPONSE_LEN, rng: np.random.Generator | None = None
) -> Rollout:
    if rng is None:
        raise ValueError("an explicit rng is required for reproducible sampling")
    return sample_rollouts(policy, [task.task_id], max_len, rng)[0]


def response_contexts(task_id: int, tokens: Sequence[int]) -> list[Context]:
    prev = [BOS] + [int(t) for t in tokens[:-1]]
    return [(task_id, pos, p) for pos, p in enumerate(prev)]


def sequence_log_prob(policy: TabularPolicy, task: TaskInstance, tokens: Sequence[int]) -> float:
    check_tokens(tokens)
    return float(sum(policy.log_probs(ctx)[tok] for ctx, tok in zip(response_contexts(task.task_id, tokens), tokens)))


def logprob_gradient(policy: TabularPolicy, task: TaskInstance, tokens: Sequence[int]) -> dict[Context, np.ndarray]:
    """Gradient of the total sequence log-probability w.r.t. touched logits.

    At each step ``d log p(t) / d logit(t') = (1[t == t'] - p(t')) / T``.
    """
    check_tokens(tokens)
    grad: dict[Context, np.ndarray] = {}
    for ctx, tok in zip(response_contexts(task.task_id, tokens), tokens):
        g = -policy.probs(ctx)
        g[tok] += 1.0
        g /= policy.temperature
        if ctx in grad:
            grad[ctx] = grad[ctx] + g
        else:
            grad[ctx] = g
    return grad


def policy_entropy(policy: TabularPolicy, ctx: Context) -> float:
    return float(entropy_from_log_probs(policy.log_probs(ctx)))


def max_entropy(vocab_size: int = VOCAB_SIZE) -> float:
    return math.log(vocab_size)


def init_prior(
    policy: TabularPolicy,
    tasks: Sequence[TaskInstance],
    logit_scale: float,
    answer_bonus: float,
    seed: int,
    max_len: int = MAX_RESPONSE_LEN,
) -> TabularPolicy:
    """Write a seeded "pretrained" starting point into ``policy``.

    Every context reachable for each task gets logits drawn from
    ``N(0, logit_scale^2)``; along the reference answer path the correct next
    token additionally receives ``answer_bonus``.  With both set to zero the
    policy is left untouched (uniform everywhere).
    """
    if logit_scale < 0:
        raise ValueError("logit_scale must be >= 0")
    if logit_scale == 0 and answer_bonus == 0:
        return policy
    rng = np.random.default_rng(seed)
    for task in sorted(tasks, key=lambda t: t.task_id):
        for pos in range(max_len):
            prevs = [BOS] if pos == 0 else range(policy.vocab_size)
            for prev in prevs:
                row = rng.normal(0.0, logit_scale, policy.vocab_size) if logit_scale > 0 else np.zeros(policy.vocab_size)
                if pos < len(task.answer) and (pos == 0 or prev == task.answer[pos - 1]):
                    row[task.answer[pos]] += answer_bonus
                policy.set_logits((task.task_id, pos, prev), row)
    return policy

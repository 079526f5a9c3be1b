"""Difficulty-aware certainty shaping of verifier rewards.

For each group of ``n`` responses to one task:

1. responses matching a forbidden pattern get external reward 0 (optional);
2. difficulty is the failure rate of the post-mitigation rewards;
3. one coefficient ``alpha_scale * sign(beta_threshold - difficulty)`` is
   shared by the whole group;
4. raw certainties are normalized into [0, 1] within the group;
5. ``total = external + coefficient * normalized_certainty``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Collection, Iterable, Sequence

from .certainty import normalize_group, sequence_certainty
from .seq_env import SHORTCUT

CERTAINTY_SIGNS = ("log_prob", "neg_log_prob")

BREAKDOWN_HEADER = (
    "task_id",
    "response_idx",
    "external",
    "intrinsic",
    "total",
    "difficulty",
    "coefficient",
    "hack_flag",
)


@dataclass(frozen=True)
class DaceConfig:
    """Shaping hyperparameters.

    ``certainty_sign`` picks the score that gets normalized and rewarded:
    ``"log_prob"`` (mean token log-probability, so a positive coefficient
    rewards confident responses) or ``"neg_log_prob"`` (its negation, so a
    positive coefficient rewards uncertain responses).
    """

    alpha_scale: float = 0.05
    beta_threshold: float = 0.4
    hack_penalty_enabled: bool = True
    intrinsic_enabled: bool = True
    certainty_sign: str = "log_prob"

    def __post_init__(self):
        if not (0.0 <= self.alpha_scale < 1.0):
            raise ValueError("alpha_scale must lie in [0, 1) so shaping cannot flip outcomes")
        if not (0.0 <= self.beta_threshold <= 1.0):
            raise ValueError("beta_threshold must lie in [0, 1]")
        if self.certainty_sign not in CERTAINTY_SIGNS:
            raise ValueError(f"certainty_sign must be one of {CERTAINTY_SIGNS}")


@dataclass(frozen=True)
class ResponseGroup:
    task_id: int
    responses: Sequence[Sequence[int]]
    token_log_probs: Sequence[Sequence[float]]
    verifier_outcomes: Sequence[int]

    def __post_init__(self):
        n = len(self.responses)
        if n < 1:
            raise ValueError("a response group needs at least one response")
        if len(self.token_log_probs) != n or len(self.verifier_outcomes) != n:
            raise ValueError("responses, log-probs and outcomes must have equal length")
        if any(o not in (0, 1) for o in self.verifier_outcomes):
            raise ValueError("verifier outcomes must be exactly 0 or 1")

    @property
    def group_size(self) -> int:
        return len(self.responses)


@dataclass(frozen=True)
class RewardBreakdown:
    external: float
    intrinsic: float
    total: float
    coefficient: float
    normalized_certainty: float
    hack_flag: bool
    difficulty: float


def estimate_difficulty(outcomes: Sequence[int]) -> float:
    """Failure rate ``1 - successes / n`` of a group of binary outcomes."""
    n = len(outcomes)
    if n == 0:
        raise ValueError("cannot estimate difficulty from an empty group")
    if any(o not in (0, 1) for o in outcomes):
        raise ValueError("outcomes must be exactly 0 or 1")
    return 1.0 - sum(int(o) for o in outcomes) / n


def adaptive_coefficient(difficulty: float, cfg: DaceConfig) -> float:
    if not (0.0 <= difficulty <= 1.0) or math.isnan(difficulty):
        raise ValueError(f"difficulty must lie in [0, 1], got {difficulty!r}")
    if not cfg.intrinsic_enabled:
        return 0.0
    gap = cfg.beta_threshold - difficulty
    if gap > 0:
        return cfg.alpha_scale
    if gap < 0:
        return -cfg.alpha_scale
    return 0.0


def detect_hack(response: Iterable[int], forbidden: Collection[int] = (SHORTCUT,)) -> bool:
    """True iff any forbidden token occurs anywhere in ``response``."""
    return any(tok in forbidden for tok in response)


def shape_group(
    group: ResponseGroup,
    cfg: DaceConfig,
    hack_detector: Callable[[Sequence[int]], bool] = detect_hack,
) -> list[RewardBreakdown]:
    flags = [bool(hack_detector(r)) for r in group.responses]
    if cfg.hack_penalty_enabled:
        external = [0 if f else int(o) for f, o in zip(flags, group.verifier_outcomes)]
    else:
        external = [int(o) for o in group.verifier_outcomes]

    difficulty = estimate_difficulty(external)
    coefficient = adaptive_coefficient(difficulty, cfg)

    raw = [sequence_certainty(lp).raw for lp in group.token_log_probs]
    if cfg.certainty_sign == "neg_log_prob":
        raw = [-r for r in raw]
    normalized = normalize_group(raw)

    out = []
    for ext, nc, flag in zip(external, normalized, flags):
        intrinsic = coefficient * nc
        out.append(
            RewardBreakdown(
                external=float(ext),
                intrinsic=intrinsic,
                total=float(ext) + intrinsic,
                coefficient=coefficient,
                normalized_certainty=nc,
                hack_flag=flag,
                difficulty=difficulty,
            )
        )
    return out


def breakdown_rows(task_id: int, breakdowns: Sequence[RewardBreakdown]) -> list[list[str]]:
    return [
        [
            str(task_id),
            str(i),
            repr(b.external),
            repr(b.intrinsic),
            repr(b.total),
            repr(b.difficulty),
            repr(b.coefficient),
            str(int(b.hack_flag)),
        ]
        for i, b in enumerate(breakdowns)
    ]


def write_breakdown_csv(path, shaped: Iterable[tuple[int, Sequence[RewardBreakdown]]]) -> None:
    """Write ``(task_id, breakdowns)`` pairs as one CSV row per response."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BREAKDOWN_HEADER)
        for task_id, breakdowns in shaped:
            writer.writerows(breakdown_rows(task_id, breakdowns))

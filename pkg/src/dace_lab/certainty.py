"""Response-level self-certainty and its group-wise normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEGENERATE_STD = 1e-9
NEUTRAL_VALUE = 0.5


@dataclass(frozen=True)
class CertaintyScore:
    """Mean per-token log-probability of a sampled response.

    ``raw`` is higher for more confident responses and is the score used for
    reward shaping.  ``neg_mean_log_prob`` is its negation, i.e. the average
    surprisal in nats/token.
    """

    raw: float
    neg_mean_log_prob: float
    token_count: int


def sequence_certainty(token_log_probs: Sequence[float]) -> CertaintyScore:
    lp = np.asarray(token_log_probs, dtype=float)
    if lp.ndim != 1 or lp.size == 0:
        raise ValueError("a response needs at least one token to have a certainty")
    if not np.all(np.isfinite(lp)):
        raise ValueError("token log-probabilities must be finite")
    if np.any(lp > 0):
        raise ValueError("token log-probabilities must be <= 0")
    raw = float(np.mean(lp))
    return CertaintyScore(raw=raw, neg_mean_log_prob=-raw, token_count=int(lp.size))


def normalize_group(scores: Sequence[float]) -> list[float]:
    """Z-score (population std) then min-max scale a group into [0, 1].

    A group whose population std is below ``1e-9`` (including a singleton)
    maps to 0.5 everywhere.
    """
    x = np.asarray(scores, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("cannot normalize an empty group")
    if not np.all(np.isfinite(x)):
        raise ValueError("certainty scores must be finite")
    std = float(np.std(x))
    if std < DEGENERATE_STD or not math.isfinite(std):
        return [NEUTRAL_VALUE] * int(x.size)
    z = (x - np.mean(x)) / std
    lo, hi = float(np.min(z)), float(np.max(z))
    out = (z - lo) / (hi - lo)
    # guard against rounding just outside the unit interval
    return [float(v) for v in np.clip(out, 0.0, 1.0)]

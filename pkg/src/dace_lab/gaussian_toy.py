"""One-dimensional Gaussian policy on a bimodal reward landscape.

The policy ``N(mean, exp(log_std)^2)`` is trained with PPO on the objective
``E[R(a)] + alpha * log_std``.  Positive ``alpha`` forces the policy to widen
(explore), negative ``alpha`` forces it to narrow (exploit).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .optim import Adam

LOG_STD_MIN = math.log(1e-3)
LOG_STD_MAX = math.log(1e3)
MEAN_LIMIT = 1e6


class ToyDivergenceError(RuntimeError):
    """Raised when a toy PPO run leaves the numerically sane region."""


@dataclass(frozen=True)
class GaussianPolicyParams:
    mean: float
    log_std: float

    @property
    def std(self) -> float:
        return math.exp(self.log_std)

    @classmethod
    def from_std(cls, mean: float, std: float) -> "GaussianPolicyParams":
        if not std > 0:
            raise ValueError(f"std must be positive, got {std}")
        return cls(float(mean), math.log(std))


@dataclass(frozen=True)
class RewardLandscapeConfig:
    """Two unnormalized Gaussian bumps of peak 1.

    The first bump sits at ``-mode_offset`` with width ``narrow_width``; the
    second sits at ``+mode_offset`` with width ``wide_width``.
    """

    mode_offset: float = 2.0
    narrow_width: float = 1.0
    wide_width: float = 1.0

    def __post_init__(self):
        if not (self.narrow_width > 0 and self.wide_width > 0):
            raise ValueError("landscape widths must be positive")
        if not math.isfinite(self.mode_offset):
            raise ValueError("mode_offset must be finite")

    def modes(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return ((-self.mode_offset, self.narrow_width), (self.mode_offset, self.wide_width))


@dataclass(frozen=True)
class ToyTrainConfig:
    alpha: float = 0.0
    learning_rate: float = 0.01
    clip_epsilon: float = 0.2
    epochs_per_update: int = 10
    batch_size: int = 64
    iterations: int = 34
    # Logging cadence only; every iteration draws ``batch_size`` fresh samples.
    steps_per_iteration: int = 32
    init_mean: float = 0.0
    init_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.iterations < 1 or self.epochs_per_update < 1:
            raise ValueError("iterations and epochs_per_update must be >= 1")
        if not self.init_std > 0:
            raise ValueError("init_std must be positive")
        if not self.clip_epsilon > 0:
            raise ValueError("clip_epsilon must be positive")


@dataclass(frozen=True)
class ToyTraceRecord:
    iteration: int
    mean: float
    std: float
    expected_reward: float
    surrogate_loss: float


@dataclass
class ToyTrainTrace:
    records: list[ToyTraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final(self) -> ToyTraceRecord:
        return self.records[-1]


def landscape_reward(action, cfg: RewardLandscapeConfig):
    """Reward at ``action`` (scalar or array); values lie in (0, 2]."""
    a = np.asarray(action, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("action must be finite")
    total = np.zeros_like(a)
    for center, width in cfg.modes():
        total = total + np.exp(-((a - center) ** 2) / (2.0 * width * width))
    if total.ndim == 0:
        return float(total)
    return total


def expected_reward(policy: GaussianPolicyParams, cfg: RewardLandscapeConfig) -> float:
    """Exact ``E_{a~policy}[R(a)]`` via the Gaussian convolution of each bump."""
    var_p = policy.std ** 2
    total = 0.0
    for center, width in cfg.modes():
        var = width * width + var_p
        total += width / math.sqrt(var) * math.exp(-((policy.mean - center) ** 2) / (2.0 * var))
    return total


def gaussian_log_prob(actions: np.ndarray, mean: float, log_std: float) -> np.ndarray:
    z = (actions - mean) * math.exp(-log_std)
    return -0.5 * z * z - log_std - 0.5 * math.log(2.0 * math.pi)


def surrogate_objective(
    params: np.ndarray,
    actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    clip_epsilon: float,
    alpha: float,
) -> float:
    """Clipped PPO surrogate (batch mean) plus ``alpha * log_std``."""
    mean, log_std = params
    ratio = np.exp(gaussian_log_prob(actions, mean, log_std) - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantages
    return float(np.mean(np.minimum(unclipped, clipped)) + alpha * log_std)


def surrogate_gradient(
    params: np.ndarray,
    actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    clip_epsilon: float,
    alpha: float,
) -> np.ndarray:
    """Analytic gradient of :func:`surrogate_objective` w.r.t. (mean, log_std)."""
    mean, log_std = params
    inv_var = math.exp(-2.0 * log_std)
    diff = actions - mean
    ratio = np.exp(gaussian_log_prob(actions, mean, log_std) - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantages
    # the clipped branch is constant in the parameters whenever it is the min
    active = unclipped <= clipped
    weight = np.where(active, unclipped, 0.0)
    d_mean = diff * inv_var
    d_log_std = diff * diff * inv_var - 1.0
    n = actions.shape[0]
    return np.array([np.sum(weight * d_mean) / n, np.sum(weight * d_log_std) / n + alpha])


def ppo_toy_train(train_cfg: ToyTrainConfig, land_cfg: RewardLandscapeConfig) -> ToyTrainTrace:
    """Run PPO on the toy objective and return one record per iteration.

    Each iteration draws ``batch_size`` actions from the current policy, uses
    reward minus the batch mean as advantage, and takes ``epochs_per_update``
    Adam ascent steps on the clipped surrogate plus ``alpha * log_std``.
    """
    rng = np.random.default_rng(train_cfg.seed)
    params = np.array([train_cfg.init_mean, math.log(train_cfg.init_std)], dtype=float)
    params[1] = min(max(params[1], LOG_STD_MIN), LOG_STD_MAX)
    opt = Adam(params.shape, lr=train_cfg.learning_rate)
    trace = ToyTrainTrace()

    for it in range(train_cfg.iterations):
        mean, log_std = params
        actions = mean + math.exp(log_std) * rng.standard_normal(train_cfg.batch_size)
        rewards = landscape_reward(actions, land_cfg)
        advantages = rewards - rewards.mean()
        old_log_probs = gaussian_log_prob(actions, mean, log_std)

        objective = 0.0
        for _ in range(train_cfg.epochs_per_update):
            grad = surrogate_gradient(
                params, actions, old_log_probs, advantages, train_cfg.clip_epsilon, train_cfg.alpha
            )
            params = params + opt.step(grad)
            params[1] = min(max(params[1], LOG_STD_MIN), LOG_STD_MAX)
            objective = surrogate_objective(
                params, actions, old_log_probs, advantages, train_cfg.clip_epsilon, train_cfg.alpha
            )

        policy = GaussianPolicyParams(float(params[0]), float(params[1]))
        value = expected_reward(policy, land_cfg)
        if abs(policy.mean) > MEAN_LIMIT or not math.isfinite(value):
            raise ToyDivergenceError(
                f"toy PPO diverged at iteration {it}: mean={policy.mean!r}, "
                f"log_std={policy.log_std!r}, expected_reward={value!r}"
            )
        trace.records.append(ToyTraceRecord(it, policy.mean, policy.std, value, -objective))
    return trace


SWEEP_HEADER = ("alpha", "sigma_r1", "seed", "final_mean", "final_std", "final_expected_reward")
TRACE_HEADER = ("alpha", "sigma_r1", "seed", "iteration", "mean", "std", "expected_reward", "surrogate_loss")


def fmt6(x: float) -> str:
    return f"{x:.6g}"


@dataclass(frozen=True)
class SweepRow:
    """Final state of one (alpha, width, seed) run; ``error`` is set when it failed."""

    alpha: float
    sigma_r1: float
    seed: int
    final_mean: float = math.nan
    final_std: float = math.nan
    final_expected_reward: float = math.nan
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def csv_fields(self) -> list[str]:
        return [fmt6(self.alpha), fmt6(self.sigma_r1), str(self.seed),
                fmt6(self.final_mean), fmt6(self.final_std), fmt6(self.final_expected_reward)]


@dataclass(frozen=True)
class SweepCellSummary:
    alpha: float
    sigma_r1: float
    n_ok: int
    n_failed: int
    mean: float
    std: float

    @property
    def status(self) -> str:
        return "ok" if self.n_failed == 0 else ("failed" if self.n_ok == 0 else "partial")


def _sweep_cell(args) -> tuple[SweepRow, ToyTrainTrace | None]:
    alpha, width, seed, train_cfg, land_cfg = args
    try:
        trace = ppo_toy_train(replace(train_cfg, alpha=alpha, seed=seed), replace(land_cfg, narrow_width=width))
    except (ToyDivergenceError, ValueError, FloatingPointError) as exc:
        return SweepRow(alpha, width, seed, error=f"{type(exc).__name__}: {exc}"), None
    f = trace.final
    return SweepRow(alpha, width, seed, f.mean, f.std, f.expected_reward), trace


def fixed_strategy_sweep(
    alphas: Sequence[float],
    widths: Sequence[float],
    seeds: Sequence[int],
    train_cfg: ToyTrainConfig = ToyTrainConfig(),
    land_cfg: RewardLandscapeConfig = RewardLandscapeConfig(),
    jobs: int = 1,
) -> tuple[list[SweepRow], list[ToyTrainTrace | None]]:
    """Train every (alpha, narrow width, seed) cell; one row per cell, grid order.

    A cell that raises is recorded as a failed row instead of aborting the
    sweep.  ``jobs > 1`` runs cells in worker processes; results do not
    depend on ``jobs``.
    """
    if not (alphas and widths and seeds):
        raise ValueError("alphas, widths and seeds must all be nonempty")
    cells = [(float(a), float(w), int(s), train_cfg, land_cfg) for a in alphas for w in widths for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, cells, chunksize=max(1, len(cells) // (4 * jobs))))
    else:
        results = [_sweep_cell(c) for c in cells]
    return [r for r, _ in results], [t for _, t in results]


def summarize_sweep(rows: Sequence[SweepRow]) -> list[SweepCellSummary]:
    """Per-(alpha, width) mean and population std of the *rendered* final rewards.

    Aggregating the 6-significant-digit values that land in the CSV keeps the
    summary exactly recomputable from the per-seed file.
    """
    cells: dict[tuple[float, float], list[SweepRow]] = {}
    for r in rows:
        cells.setdefault((r.alpha, r.sigma_r1), []).append(r)
    out = []
    for (alpha, width), group in cells.items():
        ok = [float(fmt6(r.final_expected_reward)) for r in group if not r.failed]
        mean = float(np.mean(ok)) if ok else math.nan
        std = float(np.std(ok)) if ok else math.nan
        out.append(SweepCellSummary(alpha, width, len(ok), len(group) - len(ok), mean, std))
    return out


def trace_rows(alpha: float, width: float, seed: int, trace: ToyTrainTrace) -> list[list[str]]:
    return [
        [repr(alpha), repr(width), str(seed), str(r.iteration), repr(r.mean), repr(r.std),
         repr(r.expected_reward), repr(r.surrogate_loss)]
        for r in trace.records
    ]

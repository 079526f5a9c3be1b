import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dace_lab.dace import DaceConfig
from dace_lab.grpo import (
    METRICS_HEADER,
    GrpoConfig,
    TrainingDivergenceError,
    _Batch,
    clipped_surrogate,
    evaluate,
    group_advantages,
    pass_at_k_curve,
    sample_correctness,
    surrogate_and_gradient,
    train,
)
from dace_lab.seq_env import EOS, VOCAB_SIZE, generate_tasks
from dace_lab.seq_policy import BOS, TabularPolicy, init_prior, log_softmax

from oracles import fd_gradient

TASKS = generate_tasks(6, {1: 0.5, 2: 0.5}, seed=3)
SMALL = GrpoConfig(steps=12, tasks_per_batch=3, group_size=8)


def test_group_advantage_examples():
    assert group_advantages([1, 1, 0, 0]) == [1.0, 1.0, -1.0, -1.0]
    assert group_advantages([1, 1, 1, 1]) == [0.0] * 4
    assert group_advantages([2, 0]) == [1.0, -1.0]
    with pytest.raises(ValueError):
        group_advantages([])


rewards = st.lists(st.floats(-5, 5), min_size=1, max_size=32)


@given(rewards)
def test_advantages_zero_mean(r):
    adv = group_advantages(r, 1e-6)
    if np.std(r) >= 1e-6:
        assert abs(np.mean(adv)) < 1e-12
    else:
        assert adv == [0.0] * len(r)


@given(rewards, st.floats(-10, 10))
def test_advantages_shift_invariant(r, c):
    if np.std(r) < 1e-3:
        return
    a = group_advantages(r)
    b = group_advantages([x + c for x in r])
    assert np.allclose(a, b, atol=1e-12, rtol=0)


def test_clipped_surrogate_examples():
    assert clipped_surrogate(1.5, 1.0, 0.2, 0.28) == 1.28
    assert clipped_surrogate(0.5, -1.0, 0.2, 0.28) == -0.8
    for adv in [-2.0, 0.3, 5.0]:
        assert clipped_surrogate(1.0, adv, 0.2, 0.28) == adv
    with pytest.raises(ValueError):
        clipped_surrogate(0.0, 1.0, 0.2, 0.28)


@pytest.mark.parametrize("kwargs", [dict(eps_low=0), dict(eps_high=-0.1), dict(eps_low=1.0), dict(group_size=0),
                                    dict(std_floor=0.0), dict(max_len=9), dict(epochs_per_batch=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        GrpoConfig(**kwargs)


def _random_batch(rng, pol, n_tokens=30):
    keys = [(int(rng.integers(3)), int(rng.integers(4)), int(rng.choice([BOS] + list(range(VOCAB_SIZE)))))
            for _ in range(n_tokens)]
    rows = pol.row_ids(keys, create=True)
    pol.table[1:] = rng.normal(0, 1.5, pol.table[1:].shape)
    tokens = rng.integers(VOCAB_SIZE, size=n_tokens)
    lp = log_softmax(pol.table[rows] / pol.temperature)[np.arange(n_tokens), tokens]
    old = lp + rng.normal(0, 0.3, n_tokens)
    return _Batch(rows, tokens, old, rng.normal(0, 1, n_tokens))


def _ratio_margin(pol, batch, lo, hi):
    lp = log_softmax(pol.table[batch.rows] / pol.temperature)[np.arange(batch.tokens.size), batch.tokens]
    r = np.exp(lp - batch.old_log_probs)
    return min(np.min(np.abs(r - lo)), np.min(np.abs(r - hi)))


def test_surrogate_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 25:
        pol = TabularPolicy(float(rng.uniform(0.4, 1.5)))
        batch = _random_batch(rng, pol)
        if _ratio_margin(pol, batch, 0.8, 1.28) < 1e-3:
            continue
        _, grad = surrogate_and_gradient(pol, batch, 0.2, 0.28)
        x0 = pol.table[1:].ravel().copy()

        def f(x):
            p = pol.copy()
            p.table[1:] = np.asarray(x).reshape(p.table[1:].shape)
            return surrogate_and_gradient(p, batch, 0.2, 0.28)[0]

        fd = np.asarray(fd_gradient(f, x0))
        an = grad[1:].ravel()
        assert np.linalg.norm(an - fd) / max(np.linalg.norm(an), np.linalg.norm(fd), 1e-12) < 1e-5
        checked += 1


def test_gradient_at_unit_ratio_is_advantage_times_logprob_gradient():
    rng = np.random.default_rng(1)
    pol = TabularPolicy(0.6)
    batch = _random_batch(rng, pol, 10)
    lp = log_softmax(pol.table[batch.rows] / pol.temperature)
    batch.old_log_probs = lp[np.arange(10), batch.tokens].copy()
    _, grad = surrogate_and_gradient(pol, batch, 0.2, 0.28)
    expected = np.zeros_like(pol.table)
    for i in range(10):
        g = -np.exp(lp[i])
        g[batch.tokens[i]] += 1
        expected[batch.rows[i]] += batch.advantages[i] * g / pol.temperature / 10
    expected[0] = 0
    assert np.allclose(grad, expected, atol=1e-15, rtol=0)


def _prior(seed=0):
    return init_prior(TabularPolicy(0.6), TASKS, 1.0, 1.0, seed)


def test_train_emits_one_record_per_step_and_streams_csv(tmp_path):
    path = tmp_path / "m.csv"
    _, hist = train(_prior(), TASKS, SMALL, DaceConfig(), seed=4, metrics_path=path)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == METRICS_HEADER
    assert len(rows) == SMALL.steps + 1 == len(hist) + 1
    assert [int(r[0]) for r in rows[1:]] == list(range(SMALL.steps))
    assert float(rows[5][4]) == hist[4].mean_step_entropy
    for h in hist:
        assert 0 <= h.fraction_hard <= 1 and 0 <= h.shortcut_rate <= 1
        assert 1 <= h.mean_response_length <= SMALL.max_len


def test_train_is_deterministic():
    a = train(_prior(), TASKS, SMALL, DaceConfig(), seed=9)
    b = train(_prior(), TASKS, SMALL, DaceConfig(), seed=9)
    assert a[1] == b[1]
    assert a[0].dumps() == b[0].dumps()


def test_baseline_reduction_is_bitwise():
    off = DaceConfig(intrinsic_enabled=False, hack_penalty_enabled=False)
    pol_a, hist_a = train(_prior(), TASKS, SMALL, off, seed=5)
    pol_b, hist_b = train(_prior(), TASKS, SMALL, None, seed=5)
    assert hist_a == hist_b
    assert np.array_equal(pol_a.table, pol_b.table)


def test_rejects_empty_task_set():
    with pytest.raises(ValueError):
        train(TabularPolicy(), [], SMALL, None, seed=0)


def test_divergence_is_reported():
    pol = _prior()
    pol.table[1, 0] = math.inf
    with pytest.raises(TrainingDivergenceError):
        train(pol, TASKS, GrpoConfig(steps=3, tasks_per_batch=6, group_size=8), DaceConfig(), seed=0)


def _deterministic_answer_policy(tasks):
    pol = TabularPolicy(0.6)
    for t in tasks:
        prev = BOS
        for pos, tok in enumerate(t.answer):
            row = np.zeros(VOCAB_SIZE)
            row[tok] = 60.0
            pol.set_logits((t.task_id, pos, prev), row)
            prev = tok
    return pol


def test_perfect_policy_metrics():
    pol = _deterministic_answer_policy(TASKS)
    for k in [1, 4, 16]:
        assert evaluate(pol, TASKS, k, seed=0) == (1.0, 1.0)


def test_shortcut_successes_count_as_failures():
    pol = TabularPolicy(0.6)
    for t in TASKS:
        row = np.zeros(VOCAB_SIZE)
        row[15] = 60.0
        pol.set_logits((t.task_id, 0, BOS), row)
    assert evaluate(pol, TASKS, 8, seed=0) == (0.0, 0.0)


def test_mean_at_one_equals_pass_at_one():
    m, p = evaluate(_prior(), TASKS, 1, seed=2)
    assert m == p


@given(st.integers(0, 1000), st.integers(1, 12))
@settings(max_examples=30, deadline=None)
def test_pass_at_k_bounds_and_monotone(seed, k):
    rng = np.random.default_rng(seed)
    correct = rng.random((7, 12)) < rng.uniform(0, 0.5)
    m, p = float(np.mean(correct[:, :k])), pass_at_k_curve(correct, [k])[0]
    assert 0 <= m <= p <= 1
    curve = pass_at_k_curve(correct, range(1, 13))
    assert all(a <= b for a, b in zip(curve, curve[1:]))


def test_pass_at_k_rejects_k_outside_pool():
    with pytest.raises(ValueError):
        pass_at_k_curve(np.ones((2, 3), dtype=bool), [4])


def fixed_p_policy(tasks, p):
    """First token is the answer digit with probability exactly ``p``; EOS follows it surely."""
    pol = TabularPolicy(1.0)
    for t in tasks:
        row = np.full(VOCAB_SIZE, -np.inf)
        row[t.answer[0]] = math.log(p)
        row[(t.answer[0] + 1) % 10] = math.log(1 - p)
        pol.set_logits((t.task_id, 0, BOS), np.where(np.isfinite(row), row, -700.0))
        eos = np.full(VOCAB_SIZE, -700.0)
        eos[EOS] = 0.0
        for d in range(10):
            pol.set_logits((t.task_id, 1, d), eos)
    return pol


def pass_at_k_vs_closed_form(p=0.1, n_tasks=10_000, ks=(1, 2, 4, 8, 16), seed=0):
    tasks = generate_tasks(n_tasks, {1: 1.0}, seed=seed)
    correct = sample_correctness(fixed_p_policy(tasks, p), tasks, max(ks), np.random.default_rng(seed))
    out = []
    for k, v in zip(ks, pass_at_k_curve(correct, ks)):
        q = 1 - (1 - p) ** k
        out.append((k, v, q, math.sqrt(q * (1 - q) / n_tasks)))
    return out


def test_fixed_p_policy_per_sample_rate():
    tasks = generate_tasks(2000, {1: 1.0}, seed=1)
    correct = sample_correctness(fixed_p_policy(tasks, 0.3), tasks, 4, np.random.default_rng(1))
    se = math.sqrt(0.3 * 0.7 / correct.size)
    assert abs(correct.mean() - 0.3) < 3 * se

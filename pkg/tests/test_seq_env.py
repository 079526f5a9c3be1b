import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dace_lab.seq_env import (
    EOS,
    MOD,
    PLUS,
    SHORTCUT,
    TIMES,
    VerifierOutcome,
    VOCAB_SIZE,
    VocabularyError,
    dump_tasks,
    encode_prompt,
    format_tokens,
    generate_tasks,
    load_tasks,
    make_task,
    parse_tokens,
    verify,
)
from dace_lab.seq_policy import TabularPolicy, sample_rollouts


def brute_eval(start, steps, modulus):
    v = start
    for op, d in steps:
        v = {"+": v + d, "-": v - d, "*": v * d}[op]
    return v % modulus


def test_vocabulary_is_dense():
    assert VOCAB_SIZE == 16 and EOS != SHORTCUT
    assert parse_tokens(format_tokens(range(VOCAB_SIZE))) == tuple(range(VOCAB_SIZE))


def test_hand_chain():
    prompt = encode_prompt(3, [(PLUS, 4), (TIMES, 2)], 10)
    assert format_tokens(prompt) == "d3 PLUS d4 TIMES d2 MOD d1 d0"
    task = make_task(0, prompt)
    assert task.answer == (4, EOS)
    assert task.chain_length == 2


def test_generate_counts_and_determinism():
    a = generate_tasks(100, {1: 0.5, 3: 0.5}, seed=7)
    b = generate_tasks(100, {1: 0.5, 3: 0.5}, seed=7)
    assert a == b
    assert [t.task_id for t in a] == list(range(100))
    assert sum(t.tier == 1 for t in a) == 50 and sum(t.tier == 3 for t in a) == 50


def test_answer_length_grows_with_tier():
    tasks = generate_tasks(30, {1: 1 / 3, 2: 1 / 3, 3: 1 / 3}, seed=1)
    lengths = {t.tier: len(t.answer_digits) for t in tasks}
    assert lengths == {1: 1, 2: 2, 3: 3}


def test_tier_one_answers_are_single_digit():
    assert all(len(t.answer) == 2 for t in generate_tasks(50, {1: 1.0}, seed=3))


@pytest.mark.parametrize("mix", [{}, {1: 0.5}, {1: 0.7, 2: 0.7}, {0: 1.0}, {1: -0.5, 2: 1.5}])
def test_invalid_mix(mix):
    with pytest.raises(ValueError):
        generate_tasks(10, mix, seed=0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_generated_answers_match_brute_force(seed, n):
    names = {PLUS: "+", 11: "-", TIMES: "*"}
    for t in generate_tasks(n, {1: 0.4, 2: 0.3, 4: 0.3}, seed=seed):
        mod_at = t.prompt.index(MOD)
        chain = t.prompt[:mod_at]
        modulus = int("".join(str(d) for d in t.prompt[mod_at + 1:]))
        steps = [(names[o], d) for o, d in zip(chain[1::2], chain[2::2])]
        expected = brute_eval(chain[0], steps, modulus)
        assert int("".join(str(d) for d in t.answer_digits)) == expected
        assert verify(t, t.answer) == VerifierOutcome(1, False)
        assert verify(t, (SHORTCUT, EOS)) == VerifierOutcome(1, True)


def test_verify_examples():
    task = make_task(0, encode_prompt(3, [(PLUS, 4), (TIMES, 2)], 10))
    assert verify(task, [4, EOS]).correct == 1
    assert verify(task, [SHORTCUT, EOS]) == VerifierOutcome(1, True)
    assert verify(task, [4, 0, EOS]).correct == 0
    assert verify(task, [4]).correct == 0
    assert verify(task, [4, SHORTCUT, EOS]).correct == 0
    with pytest.raises(ValueError):
        verify(task, [])
    with pytest.raises(VocabularyError):
        verify(task, [16])


def test_multi_digit_answers_are_zero_padded():
    task = make_task(0, encode_prompt(1, [(PLUS, 2)], 100))
    assert task.answer == (0, 3, EOS)
    assert verify(task, [3, EOS]).correct == 0


def test_task_file_round_trip():
    tasks = generate_tasks(40, {1: 0.5, 2: 0.25, 3: 0.25}, seed=11)
    text = dump_tasks(tasks)
    assert load_tasks(text) == tasks
    assert dump_tasks(load_tasks(text)) == text


def test_task_file_rejects_tampered_answer():
    text = dump_tasks(generate_tasks(1, {1: 1.0}, seed=0))
    tid, prompt, answer = text.rstrip("\n").split("\t")
    wrong = "d9 EOS" if answer != "d9 EOS" else "d8 EOS"
    with pytest.raises(ValueError):
        load_tasks(f"{tid}\t{prompt}\t{wrong}\n")


def test_uniform_policy_tier_one_success_rate():
    tasks = generate_tasks(20, {1: 1.0}, seed=5)
    rng = np.random.default_rng(0)
    n = 100_000
    ids = np.tile([t.task_id for t in tasks], n // len(tasks))
    by_id = {t.task_id: t for t in tasks}
    hits = sum(
        r.tokens[:2] == by_id[r.task_id].answer for r in sample_rollouts(TabularPolicy(), ids, 8, rng)
    )
    p = 1 / 256
    se = np.sqrt(p * (1 - p) / n)
    assert abs(hits / n - p) < 3 * se

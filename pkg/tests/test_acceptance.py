"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. The oracle-replay and corpus criteria generate their own corpus from
tests/fixtures/tasks.jsonl and never touch the sandbox runner: generation uses
the trusted in-process executor and episode replay uses the stub executor fed
with the reports recorded at generation time.
"""

import math
import random
import string
import time
from contextlib import contextmanager
from functools import lru_cache

import pytest

from golden_fixtures import GOLDENS
from patchpad.corruption import LinePool, Unsatisfiable, reject_pathological, sample_corruption
from patchpad.cli import ExperienceRecord, read_buffer, write_buffer
from patchpad.datagen import corpus_stats, generate_demonstrations, serialize_trace
from patchpad.dsl import (
    AddLine,
    DeleteLine,
    Exit,
    FormatViolation,
    ReplaceLine,
    ReplaceWord,
    format_command,
    parse,
)
from patchpad.editor import Snippet, apply_edit
from patchpad.episode import Episode, EpisodeConfig, oracle_agent, run_episode
from patchpad.rl import (
    GrpoConfig,
    RewardConfig,
    StateSummary,
    TrajectoryBatch,
    TurnRecord,
    compute_advantages,
    compute_returns,
    compute_reward,
    grpo_objective,
)
from patchpad.verify import InProcessExecutor, ReplayExecutor

from conftest import GOLDEN, load_fixture_sources


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"[ACCEPTANCE] {name}: PASS")


PRINTABLE = [chr(c) for c in range(32, 127)]


def random_text(rng: random.Random, max_len=30) -> str:
    return "".join(rng.choice(PRINTABLE) for _ in range(rng.randint(0, max_len)))


def random_command(rng: random.Random):
    kind = rng.randrange(5)
    line = rng.randint(1, 999)
    if kind == 0:
        return DeleteLine(line)
    if kind == 1:
        return AddLine(line, random_text(rng))
    if kind == 2:
        return ReplaceLine(line, random_text(rng))
    if kind == 3:
        while True:
            old = random_text(rng, 12)
            if old and " >>>" not in old:
                return ReplaceWord(line, old=old, new=random_text(rng, 12))
    return Exit()


def test_dsl_round_trip_10k():
    with criterion("DSL round-trip (10,000 commands, 0 failures, <5s)"):
        rng = random.Random(1)
        start = time.monotonic()
        failures = 0
        for _ in range(10_000):
            cmd = random_command(rng)
            if parse(format_command(cmd) + ";") != cmd:
                failures += 1
        elapsed = time.monotonic() - start
        assert failures == 0
        assert elapsed < 5.0, f"took {elapsed:.2f}s"


_VOCAB = ("for", "i", "in", "n", "range", "x", "if", "return", "a", "aa", "(n):", "==")


def random_code_line(rng: random.Random) -> str:
    """Code-like line with a tiny vocabulary so replace-all collisions occur."""
    return " ".join(rng.choice(_VOCAB) for _ in range(rng.randint(1, 6)))


def test_corruption_invertibility_5k():
    with criterion("Corruption invertibility (5,000 pairs, byte-exact, <30s)"):
        rng = random.Random(2)
        pool = LinePool(("    return None", "import math", "    x = x + 1", "def f():"))
        start = time.monotonic()
        checked = 0
        rejected = 0
        while checked < 5_000:
            lines = tuple(
                random_code_line(rng) if rng.random() < 0.7 else random_text(rng, 25)
                for _ in range(rng.randint(1, 10))
            )
            snippet = Snippet(lines)
            try:
                corrupted, record = sample_corruption(snippet, pool, rng)
            except Unsatisfiable:
                continue
            restored = apply_edit(corrupted, record.inverse)
            if reject_pathological(corrupted, record):
                rejected += 1
                assert record.kind == "typo_word"
                assert restored != snippet
            else:
                assert restored == snippet
            checked += 1
        elapsed = time.monotonic() - start
        assert rejected > 0, "expected some pathological REPW rejections"
        assert elapsed < 30.0, f"took {elapsed:.2f}s"


@pytest.fixture(scope="module")
def demo_corpus():
    """(demos, generation_seconds): >=500 demos from >=20 fixture tasks.

    Generation executes every intermediate snippet with the trusted in-process
    executor and records the reports, so episode replay needs no runner.
    """
    sources = load_fixture_sources()
    assert len(sources) >= 20
    start = time.monotonic()
    demos, _skipped = generate_demonstrations(
        sources, repetition=25, seed=42, executor=InProcessExecutor()
    )
    return demos, time.monotonic() - start


def test_oracle_replay_500_demos(demo_corpus):
    demos, generation_seconds = demo_corpus
    with criterion("Oracle replay (>=500 demos, pass@1 100%, C+1 turns, <5min)"):
        start = time.monotonic()
        assert len(demos) >= 500
        solved = 0
        for demo in demos:
            replay = ReplayExecutor(demo.replay_reports())
            result = run_episode(demo.task, oracle_agent(demo), EpisodeConfig(), replay)
            assert result.solved and result.exited_cleanly
            assert result.turns_used == demo.corruption_count + 1
            solved += 1
        elapsed = generation_seconds + (time.monotonic() - start)
        assert solved == len(demos)
        assert elapsed < 300.0, f"took {elapsed:.2f}s including generation"


def test_grpo_fixture_and_normalization():
    with criterion("GRPO fixture (+-0.86603, mean 0 / std 1, |G_t|=1 fallback)"):
        cfg = GrpoConfig()

        def batch_of(returns_lists):
            group = []
            for returns in returns_lists:
                group.append(
                    [
                        TurnRecord(
                            state_before=StateSummary(False, 0.0),
                            action_text="",
                            parse_ok=True,
                            state_after=StateSummary(False, 0.0),
                            reward=r,
                        )
                        for r in returns
                    ]
                )
            return TrajectoryBatch(query_id="q", group=group)

        fixture_returns = [[1.0], [0.0], [0.0], [1.0]]
        advantages = compute_advantages(
            batch_of(fixture_returns), cfg, returns=fixture_returns
        )
        # Hand derivation: mu=0.5, sample std=sqrt(1/3); |A| = 0.86603 to 5 dp.
        expected = 0.5 / math.sqrt(1.0 / 3.0)
        assert round(expected, 5) == 0.86603
        for adv, sign in zip(advantages, (1, -1, -1, 1)):
            assert abs(adv[0] - sign * expected) < 1e-6
            assert round(abs(adv[0]), 5) == 0.86603

        rng = random.Random(3)
        for _ in range(1_000):
            size = rng.randint(2, 8)
            returns = [[rng.uniform(-2, 2)] for _ in range(size)]
            values = [r[0] for r in returns]
            mean = sum(values) / size
            spread = math.sqrt(sum((v - mean) ** 2 for v in values) / (size - 1))
            if spread < 1e-6:
                continue
            advantages = compute_advantages(batch_of(returns), cfg, returns=returns)
            flat = [a[0] for a in advantages]
            a_mean = sum(flat) / size
            a_std = math.sqrt(sum((x - a_mean) ** 2 for x in flat) / (size - 1))
            assert abs(a_mean) < 1e-9
            assert abs(a_std - 1.0) < 1e-9

        lone = [[0.7]]
        assert compute_advantages(batch_of(lone), cfg, returns=lone) == [[0.7]]


def test_return_recurrence_1000_sequences():
    with criterion("Return recurrence (R_t - gamma*R_{t+1} == r_t, exact, 1,000 sequences)"):
        rng = random.Random(4)
        for _ in range(1_000):
            rewards = [rng.randint(-8, 8) / 4 for _ in range(rng.randint(1, 15))]
            gamma = rng.choice([1.0, 0.5])
            returns = compute_returns(rewards, gamma)
            for t, reward in enumerate(rewards):
                nxt = returns[t + 1] if t + 1 < len(returns) else 0.0
                assert returns[t] - gamma * nxt == reward


def test_reward_correctness_1000_trajectories():
    with criterion("Reward correctness (one +1.0 per solved trajectory, penalties -0.5)"):
        cfg = RewardConfig()
        rng = random.Random(5)
        for _ in range(1_000):
            length = rng.randint(1, 10)
            solve_at = rng.randint(1, length) if rng.random() < 0.7 else None
            rewards = []
            solved = False
            for turn in range(1, length + 1):
                parse_ok = rng.random() > 0.2
                # An invalid action cannot change state; otherwise the solve
                # lands once the solve turn is reached (absorbing afterwards).
                now_solved = solved or (
                    parse_ok and solve_at is not None and turn >= solve_at
                )
                exits = turn == length and rng.random() < 0.5
                action = Exit() if exits and parse_ok else (DeleteLine(1) if parse_ok else None)
                rewards.append(
                    compute_reward(
                        cfg,
                        StateSummary(solved, 0.0),
                        StateSummary(now_solved, 0.0),
                        parse_ok,
                        action,
                    )
                )
                solved = now_solved
                if exits and parse_ok:
                    break
            assert rewards.count(1.0) == (1 if solved else 0)

        unchanged = StateSummary(False, 0.0)
        assert compute_reward(cfg, unchanged, unchanged, False, None) == -0.5
        solved_state = StateSummary(True, 1.0)
        assert compute_reward(cfg, solved_state, solved_state, True, DeleteLine(1)) == -0.5


def test_objective_identities():
    with criterion("Objective identities (rho=1 sum, clip 1.2 / -2.0 exact)"):
        cfg = GrpoConfig(kl_weight=0.0)
        rng = random.Random(6)
        group = []
        for _ in range(4):
            group.append(
                [
                    TurnRecord(
                        state_before=StateSummary(False, 0.0),
                        action_text="",
                        parse_ok=True,
                        state_after=StateSummary(False, 0.0),
                        reward=rng.uniform(-1, 1),
                        log_prob_current=-1.5,
                        log_prob_old=-1.5,
                    )
                    for _ in range(rng.randint(1, 5))
                ]
            )
        batch = TrajectoryBatch(query_id="q", group=group)
        advantages = compute_advantages(batch, cfg)
        total = sum(a for traj in advantages for a in traj)
        assert abs(grpo_objective(batch, advantages, cfg) - total) < 1e-9

        delta = math.log(2.0)
        for _ in range(10):
            if math.exp(delta) == 2.0:
                break
            delta = math.nextafter(delta, 2.0 if math.exp(delta) < 2.0 else 0.0)
        assert math.exp(delta) == 2.0, "no float with exp == 2.0 found near log 2"
        one_turn = TrajectoryBatch(
            query_id="q",
            group=[
                [
                    TurnRecord(
                        state_before=StateSummary(False, 0.0),
                        action_text="",
                        parse_ok=True,
                        state_after=StateSummary(False, 0.0),
                        reward=0.0,
                        log_prob_current=delta,
                        log_prob_old=0.0,
                    )
                ]
            ],
        )
        assert grpo_objective(one_turn, [[1.0]], cfg) == 1.2
        assert grpo_objective(one_turn, [[-1.0]], cfg) == -2.0


def test_trace_golden_files():
    with criterion("Trace serialization golden files (byte-exact)"):
        for name, build in sorted(GOLDENS.items()):
            expected = (GOLDEN / name).read_text(encoding="utf-8")
            assert build() == expected, f"golden mismatch: {name}"


def test_desk_scale_corpus_stats(demo_corpus):
    demos, _ = demo_corpus
    with criterion("Desk-scale corpus stats (mean edit distance in [15, 70], oracle-checked)"):
        assert len(demos) >= 500
        stats = corpus_stats([demo.task for demo in demos])
        assert 15.0 <= stats.edit_distance_mean <= 70.0, stats.edit_distance_mean
        assert abs(sum(stats.failure_class_histogram.values()) - 1.0) <= 1e-9

        def oracle(a: str, b: str) -> int:
            @lru_cache(maxsize=None)
            def go(i, j):
                if i == 0:
                    return j
                if j == 0:
                    return i
                return min(
                    go(i - 1, j - 1) + (a[i - 1] != b[j - 1]),
                    go(i - 1, j) + 1,
                    go(i, j - 1) + 1,
                )

            return go(len(a), len(b))

        from patchpad.editdist import levenshtein

        rng = random.Random(7)
        alphabet = string.ascii_lowercase + " _()"
        for _ in range(100):
            a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 24)))
            b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 24)))
            assert levenshtein(a, b) == oracle(a, b)


def test_server_differential_100_sequences(demo_corpus):
    all_demos, _ = demo_corpus
    with criterion("Server/differential (100 scripted sequences match in-process)"):
        from patchpad.server import EpisodeServer
        import json

        rng = random.Random(8)
        demos = all_demos[:100]
        tasks = {f"t{i}": demo.task for i, demo in enumerate(demos)}
        server = EpisodeServer(tasks, EpisodeConfig(), InProcessExecutor())
        for i, demo in enumerate(demos):
            actions = []
            for cmd in demo.actions[:-1]:
                if rng.random() < 0.25:
                    actions.append("not a command")
                if rng.random() < 0.25:
                    actions.append(f"### DELL {rng.randint(500, 999)};")
                actions.append(format_command(cmd))
            actions.append("### EXIT;")
            actions = actions[:10]

            episode = Episode(demo.task, EpisodeConfig(), InProcessExecutor())
            reset = server.handle_line(
                json.dumps({"op": "reset", "task_id": f"t{i}", "episode": f"diff{i}"})
            )
            assert reset["state"] == episode.trace_text()
            assert reset["turn"] == 0
            for action in actions:
                if episode.done:
                    break
                local = episode.step(action)
                remote = server.handle_line(
                    json.dumps({"op": "step", "episode": f"diff{i}", "action": action})
                )
                assert remote["state"] == local.observation
                assert remote["reward"] == local.reward
                assert remote["done"] == local.done
                assert remote["info"]["solved"] == local.solved
                assert remote["info"]["violation"] == local.violation


def test_buffer_round_trip_lossless(tmp_path):
    with criterion("Experience buffer round-trip (byte-identical)"):
        rng = random.Random(9)
        records = [
            ExperienceRecord(
                query_id=f"q{rng.randint(0, 5)}",
                trajectory_index=i % 4,
                turn_index=i,
                state=random_text(rng, 40),
                action=random_text(rng, 20),
                reward=rng.randint(-2, 2) / 2,
                ret=rng.uniform(-2, 2),
                advantage=rng.uniform(-2, 2),
                log_prob_current=rng.uniform(-5, 0),
                log_prob_old=rng.uniform(-5, 0),
                log_prob_reference=rng.uniform(-5, 0),
                kl=rng.uniform(0, 1),
                terminal=bool(rng.randint(0, 1)),
            )
            for i in range(50)
        ]
        first = tmp_path / "first.jsonl"
        second = tmp_path / "second.jsonl"
        write_buffer(first, records)
        write_buffer(second, read_buffer(first))
        assert first.read_bytes() == second.read_bytes()

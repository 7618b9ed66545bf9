import json
import math
import random
from functools import lru_cache

import pytest

from patchpad.corruption import LinePool
from patchpad.datagen import (
    ClientError,
    Demonstration,
    GenerationFailed,
    RepairTask,
    ReplayCompletionClient,
    TaskSource,
    build_repair_benchmark,
    corpus_stats,
    demo_from_record,
    demo_to_record,
    generate_demonstration,
    generate_demonstrations,
    pools_excluding_own,
    resplit_records,
    serialize_trace,
    task_from_record,
    task_to_record,
    validate_sources,
    write_jsonl,
)
from patchpad.dsl import Exit
from patchpad.editor import Snippet, apply_edit
from patchpad.verify import ALL_PASSED, UnitTest, execute


@pytest.fixture(scope="module")
def small_sources(sources):
    return sources[:6]


@pytest.fixture(scope="module")
def pool(small_sources):
    return LinePool.from_snippets([s.ground_truth for s in small_sources[1:]])


def test_generate_demonstration_replays_to_ground_truth(small_sources, pool, executor):
    source = small_sources[0]
    for seed in range(8):
        demo = generate_demonstration(source, pool, random.Random(seed), executor)
        assert isinstance(demo.actions[-1], Exit)
        assert demo.corruption_count == len(demo.actions) - 1
        assert 1 <= demo.corruption_count <= 5
        assert demo.task.failure_status is not None
        assert demo.initial.report.status != ALL_PASSED
        snippet = demo.task.broken
        for action in demo.actions[:-1]:
            snippet = apply_edit(snippet, action)
        assert snippet == source.ground_truth
        assert demo.states[-1].report.status == ALL_PASSED


def test_generation_is_deterministic(small_sources, pool, executor):
    source = small_sources[2]
    first = generate_demonstration(source, pool, random.Random(41), executor)
    second = generate_demonstration(source, pool, random.Random(41), executor)
    assert serialize_trace(first) == serialize_trace(second)


def test_generate_demonstrations_dedups_and_seeds(small_sources, executor):
    demos_a, skipped_a = generate_demonstrations(small_sources, 3, 7, executor)
    demos_b, skipped_b = generate_demonstrations(small_sources, 3, 7, executor)
    assert [serialize_trace(d) for d in demos_a] == [serialize_trace(d) for d in demos_b]
    assert skipped_a == skipped_b
    traces = [serialize_trace(d) for d in demos_a]
    assert len(set(traces)) == len(traces)
    assert len(demos_a) > len(small_sources)


def test_trace_serialization_is_injective(small_sources, executor):
    demos, _ = generate_demonstrations(small_sources, 2, 13, executor)
    traces = {serialize_trace(d) for d in demos}
    assert len(traces) == len(demos)


def test_trace_structure(small_sources, pool, executor):
    demo = generate_demonstration(small_sources[1], pool, random.Random(3), executor)
    trace = serialize_trace(demo)
    assert trace.startswith("You are an expert Python programmer")
    assert "Here is your task: " + demo.task.description in trace
    assert "Your code should pass these tests:" in trace
    assert "Below is an initial malfunctioning code snippet to fix:" in trace
    assert "\n***\n" in trace
    assert trace.endswith("### EXIT;\n")
    # Every state and action is eoos-terminated.
    assert trace.count(";\n") >= 2 * demo.corruption_count + 1


def test_demo_record_round_trip(small_sources, pool, executor):
    demo = generate_demonstration(small_sources[3], pool, random.Random(11), executor)
    record = demo_to_record(demo, "demo-0")
    clone = demo_from_record(json.loads(json.dumps(record)))
    assert serialize_trace(clone) == serialize_trace(demo)
    assert clone.replay_reports() == demo.replay_reports()


def test_pools_exclude_own_lines(small_sources):
    pools = pools_excluding_own(small_sources)
    own = set(small_sources[0].ground_truth.lines)
    other_lines = {
        line
        for source in small_sources[1:]
        for line in source.ground_truth.lines
        if line.strip()
    }
    assert set(pools[0].lines) == other_lines - (own - other_lines)
    with pytest.raises(ValueError):
        pools_excluding_own(small_sources[:1])


def test_generation_failed_when_nothing_acceptable(executor):
    source = TaskSource(
        task_id="t",
        description="d",
        tests=(UnitTest("assert True", 1),),
        ground_truth=Snippet(("x = 1",)),
    )
    # A pool line identical to the only snippet line keeps many corruptions
    # no-ops; with max_restarts=1 the generator gives up quickly for some seed.
    pool = LinePool(("x = 1",))
    with pytest.raises(GenerationFailed):
        for seed in range(50):
            generate_demonstration(source, pool, random.Random(seed), executor, max_restarts=1)


# --- corpus stats ---------------------------------------------------------------


def brute_force_distance(a: str, b: str) -> int:
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


def make_task(broken: str, truth: str, status: str = "test_failed") -> RepairTask:
    return RepairTask(
        task_id="t",
        description="d",
        tests=(UnitTest("assert True", 1),),
        broken=Snippet.from_text(broken),
        ground_truth=Snippet.from_text(truth),
        failure_status=status,
    )


def test_corpus_stats_simple_cases():
    single = corpus_stats([make_task("abc", "abcd")])
    assert single.edit_distance_mean == 1.0
    assert single.edit_distance_std == 0.0
    assert single.failure_class_histogram == {"test_failed": 1.0}

    stats = corpus_stats(
        [
            make_task("same", "same"),
            make_task("ab", "abcd", status="syntax_error"),
        ]
    )
    assert stats.count == 2
    assert stats.edit_distance_mean == 1.0
    assert stats.edit_distance_std == pytest.approx(math.sqrt(2), abs=1e-12)
    assert sum(stats.failure_class_histogram.values()) == pytest.approx(1.0, abs=1e-9)


def test_corpus_stats_against_brute_force_oracle():
    rng = random.Random(6)
    alphabet = "abcde ()_="
    for _ in range(40):
        broken = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 18)))
        truth = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 18)))
        stats = corpus_stats([make_task(broken, truth)])
        assert stats.edit_distance_mean == brute_force_distance(broken, truth)


def test_corpus_stats_requires_statuses():
    with pytest.raises(ValueError):
        corpus_stats([make_task("a", "b", status=None)])
    with pytest.raises(ValueError):
        corpus_stats([])


# --- repair benchmark -------------------------------------------------------------


class FakeClient:
    def __init__(self, completions_by_prompt):
        self.completions = completions_by_prompt
        self.requests = []

    def complete(self, prompt, n, temperature, max_tokens):
        self.requests.append({"prompt": prompt, "n": n, "temperature": temperature})
        if prompt not in self.completions:
            raise ClientError("unknown prompt")
        return self.completions[prompt][:n]


TEMPLATE = "Fix this task: {description}\nTests:\n{tests}\n"


def test_build_repair_benchmark_filters_and_dedups(small_sources, executor):
    source = small_sources[0]
    prompt = TEMPLATE.format(
        description=source.description, tests="\n".join(t.code for t in source.tests)
    )
    passing = source.ground_truth.to_text()
    broken_a = "def first_repeated_char(s):\n    return None"
    client = FakeClient({prompt: [passing, broken_a, broken_a, "not even python ("]})
    tasks, stats, incomplete = build_repair_benchmark(
        [source], client, executor, TEMPLATE, n_samples=10, max_keep=20
    )
    assert incomplete == []
    assert client.requests[0]["temperature"] == 0.8
    # The passing candidate is filtered, the duplicate collapses, two survive.
    assert len(tasks) == 2
    assert all(task.failure_status != ALL_PASSED for task in tasks)
    assert tasks[0].broken.to_text() == broken_a
    assert stats.count == 2


def test_build_repair_benchmark_max_keep(small_sources, executor):
    source = small_sources[0]
    prompt = TEMPLATE.format(
        description=source.description, tests="\n".join(t.code for t in source.tests)
    )
    candidates = [f"def first_repeated_char(s):\n    return {i}" for i in range(30)]
    client = FakeClient({prompt: candidates})
    tasks, _, _ = build_repair_benchmark(
        [source], client, executor, TEMPLATE, n_samples=30, max_keep=5
    )
    assert len(tasks) == 5
    assert [t.task_id for t in tasks] == [f"{source.task_id}/r{i}" for i in range(5)]


def test_build_repair_benchmark_records_incomplete(small_sources, executor):
    client = FakeClient({})
    tasks, stats, incomplete = build_repair_benchmark(
        small_sources[:2], client, executor, TEMPLATE
    )
    assert tasks == []
    assert stats is None
    assert [entry["task_id"] for entry in incomplete] == [
        s.task_id for s in small_sources[:2]
    ]


def test_replay_completion_client(tmp_path):
    path = tmp_path / "completions.jsonl"
    write_jsonl(path, [{"prompt": "p1", "completions": ["a", "b", "c"]}])
    client = ReplayCompletionClient(path)
    assert client.complete("p1", 2, 0.8, 100) == ["a", "b"]
    with pytest.raises(ClientError):
        client.complete("p2", 1, 0.8, 100)


# --- ingestion ----------------------------------------------------------------------


def test_validate_sources_drops_bad_ground_truth(executor):
    records = [
        {
            "task_id": 1,
            "text": "add",
            "code": "def add(a, b):\n    return a + b",
            "test_list": ["assert add(1, 2) == 3"],
        },
        {
            "task_id": 2,
            "text": "broken ground truth",
            "code": "def mul(a, b):\n    return a + b",
            "test_list": ["assert mul(2, 3) == 6"],
        },
        {"task_id": 3, "text": "malformed"},
    ]
    sources, skipped = validate_sources(records, executor)
    assert [s.task_id for s in sources] == ["1"]
    assert len(skipped) == 2
    reasons = {entry["task_id"]: entry["reason"] for entry in skipped}
    assert "test_failed" in reasons["2"]
    assert "malformed" in reasons["3"]


def test_resplit_records_fraction():
    records = [
        {"task_id": i, "split": "train" if i < 4 else "test", "text": "t"} for i in range(8)
    ]
    out = resplit_records(records, {"train": ["train", "test:0.5"], "eval": ["test"]})
    train_ids = [r["task_id"] for r in out["train"]]
    assert train_ids == [0, 1, 2, 3, 4, 5]
    assert [r["task_id"] for r in out["eval"]] == [4, 5, 6, 7]


def test_task_record_round_trip():
    task = make_task("broken line", "truth line")
    clone = task_from_record(json.loads(json.dumps(task_to_record(task))))
    assert clone == task

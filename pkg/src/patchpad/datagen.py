"""Dataset construction: synthetic repair demonstrations, the LLM-failure
repair benchmark, trace serialization, and corpus statistics.

A demonstration is built by corrupting a verified ground-truth snippet C times
(C uniform in 1..5), then reversing the corruptions with DSL commands; the
trace interleaves editor states and actions, each terminated by the ";\\n"
end-of-output suffix. The repair benchmark instead collects model-generated
candidate solutions that fail verification.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import random
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from patchpad.corruption import (
    CorruptionRecord,
    LinePool,
    Unsatisfiable,
    reject_pathological,
    sample_corruption,
)
from patchpad.dsl import Command, Exit, format_command, parse
from patchpad.editdist import levenshtein
from patchpad.editor import Snippet, apply_edit
from patchpad.verify import (
    ALL_PASSED,
    DEFAULT_TIMEOUT_MS,
    EditorState,
    ExecutionReport,
    Executor,
    UnitTest,
    execute,
)

EOOS = ";\n"

PROMPT_HEADER = """\
You are an expert Python programmer whose goal is to fix all mistakes in a code snippet. You may interact with the code snippet only by applying the provided DSL commands. Valid DSL command templates are:
`### DELL <line_number>` to delete the line at the specified line number.
`### ADDL <line_number> >>><line_content>` to add a line at the specified line number with the specified content.
`### REPL <line_number> >>><line_content>` to replace the line at the specified line number with the specified content.
`### REPW <line_number> >>><string_to_replace> >>><string_to_insert>` to replace all specified strings in the line at the line number with the new string.
Here is your task: {description}
Your code should pass these tests:
{tests}
Below is an initial malfunctioning code snippet to fix:
"""

MIN_CORRUPTIONS = 1
MAX_CORRUPTIONS = 5


class GenerationFailed(RuntimeError):
    """No acceptable corruption sequence was found within the restart budget."""


def _timeless(report: ExecutionReport) -> ExecutionReport:
    # Dataset artifacts must be reproducible bit-exactly; wall-clock noise is not.
    return dataclasses.replace(report, duration_ms=0)


class ClientError(RuntimeError):
    """A completion client failed; carries task context when available."""


@dataclass(frozen=True)
class TaskSource:
    """A verified problem: description, tests, and a passing ground truth."""

    task_id: str
    description: str
    tests: tuple[UnitTest, ...]
    ground_truth: Snippet


@dataclass(frozen=True)
class RepairTask:
    """A broken snippet to fix; ground truth passes all tests, broken does not."""

    task_id: str
    description: str
    tests: tuple[UnitTest, ...]
    broken: Snippet
    ground_truth: Snippet
    failure_status: str | None = None


@dataclass(frozen=True)
class Demonstration:
    """Inverse-corruption trace: actions end with Exit, states follow each edit."""

    task: RepairTask
    actions: tuple[Command, ...]
    states: tuple[EditorState, ...]
    initial: EditorState

    def __post_init__(self):
        if not self.actions or not isinstance(self.actions[-1], Exit):
            raise ValueError("a demonstration's actions must end with Exit")
        if len(self.states) != len(self.actions) - 1:
            raise ValueError("one state per non-Exit action")

    @property
    def corruption_count(self) -> int:
        return len(self.actions) - 1

    def replay_reports(self) -> dict[str, ExecutionReport]:
        """Snippet-text -> recorded report map, for ReplayExecutor."""
        reports = {self.initial.snippet.to_text(): self.initial.report}
        for state in self.states:
            reports[state.snippet.to_text()] = state.report
        return reports


@dataclass(frozen=True)
class CorpusStats:
    count: int
    edit_distance_mean: float
    edit_distance_std: float
    failure_class_histogram: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "edit_distance_mean": self.edit_distance_mean,
            "edit_distance_std": self.edit_distance_std,
            "failure_class_histogram": dict(sorted(self.failure_class_histogram.items())),
        }


# --- trace serialization -----------------------------------------------------


def task_prompt_header(description: str, tests: Sequence[UnitTest]) -> str:
    return PROMPT_HEADER.format(
        description=description, tests="\n".join(t.code for t in tests)
    )


def serialize_state(state: EditorState) -> str:
    return state.render() + EOOS


def serialize_action(cmd: Command) -> str:
    return format_command(cmd) + EOOS


def serialize_task_prompt(task: RepairTask, initial_report: ExecutionReport) -> str:
    """Prefix prompt plus the initial state, as shown to an agent at reset."""
    header = task_prompt_header(task.description, task.tests)
    return header + serialize_state(EditorState(task.broken, initial_report))


def serialize_trace(demo: Demonstration) -> str:
    parts = [
        task_prompt_header(demo.task.description, demo.task.tests),
        serialize_state(demo.initial),
    ]
    for action, state in zip(demo.actions[:-1], demo.states, strict=True):
        parts.append(serialize_action(action))
        parts.append(serialize_state(state))
    parts.append(serialize_action(demo.actions[-1]))
    return "".join(parts)


# --- demonstration generation ------------------------------------------------


def generate_demonstration(
    source: TaskSource,
    pool: LinePool,
    rng: random.Random,
    executor: Executor,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
    max_restarts: int = 50,
) -> Demonstration:
    """Corrupt the ground truth C times (C uniform in 1..5) and reverse it.

    A whole sequence is discarded and redrawn when a corruption cannot be
    sampled, when a typo inverse fails to restore its line, or when the fully
    corrupted snippet still passes every test (no repair to demonstrate).
    """
    for _ in range(max_restarts):
        count = rng.randint(MIN_CORRUPTIONS, MAX_CORRUPTIONS)
        snapshots = [source.ground_truth]
        records: list[CorruptionRecord] = []
        ok = True
        for _ in range(count):
            try:
                corrupted, record = sample_corruption(snapshots[-1], pool, rng)
            except Unsatisfiable:
                ok = False
                break
            if reject_pathological(corrupted, record):
                ok = False
                break
            if apply_edit(corrupted, record.inverse) != snapshots[-1]:
                ok = False
                break
            records.append(record)
            snapshots.append(corrupted)
        if not ok:
            continue
        broken = snapshots[-1]
        initial_report = _timeless(execute(broken, source.tests, executor, timeout_ms))
        if initial_report.status == ALL_PASSED:
            continue
        actions: list[Command] = [records[c].inverse for c in range(count - 1, -1, -1)]
        states = []
        for step, _action in enumerate(actions):
            snippet_after = snapshots[count - 1 - step]
            report = _timeless(execute(snippet_after, source.tests, executor, timeout_ms))
            states.append(EditorState(snippet_after, report))
        if states[-1].report.status != ALL_PASSED:
            raise GenerationFailed(
                f"{source.task_id}: ground truth no longer passes after inversion"
            )
        task = RepairTask(
            task_id=source.task_id,
            description=source.description,
            tests=source.tests,
            broken=broken,
            ground_truth=source.ground_truth,
            failure_status=initial_report.status,
        )
        return Demonstration(
            task=task,
            actions=tuple(actions) + (Exit(),),
            states=tuple(states),
            initial=EditorState(broken, initial_report),
        )
    raise GenerationFailed(
        f"{source.task_id}: no acceptable corruption sequence in {max_restarts} restarts"
    )


def pools_excluding_own(sources: Sequence[TaskSource]) -> list[LinePool]:
    """Per-task line pools harvested from every other task's ground truth."""
    if len(sources) < 2:
        raise ValueError("line pools need at least two tasks")
    per_task = [
        [line for line in source.ground_truth.lines if line.strip()] for source in sources
    ]
    pools = []
    for i in range(len(sources)):
        lines = [line for j, other in enumerate(per_task) if j != i for line in other]
        pools.append(LinePool(tuple(lines)))
    return pools


def generate_demonstrations(
    sources: Sequence[TaskSource],
    repetition: int,
    seed: int,
    executor: Executor,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
    max_restarts: int = 50,
) -> tuple[list[Demonstration], list[dict]]:
    """Generate ``repetition`` demonstrations per source, deduplicated by trace.

    Each (task, repetition) pair gets its own seeded stream so output is
    reproducible bit-exactly and independent of iteration interleaving.
    """
    pools = pools_excluding_own(sources)
    demos: list[Demonstration] = []
    skipped: list[dict] = []
    seen: set[str] = set()
    for source, pool in zip(sources, pools):
        for rep in range(repetition):
            rng = random.Random(f"{seed}:{source.task_id}:{rep}")
            try:
                demo = generate_demonstration(
                    source, pool, rng, executor, timeout_ms, max_restarts
                )
            except GenerationFailed as exc:
                skipped.append({"task_id": source.task_id, "repetition": rep, "reason": str(exc)})
                continue
            digest = hashlib.sha256(serialize_trace(demo).encode("utf-8")).hexdigest()
            if digest in seen:
                continue
            seen.add(digest)
            demos.append(demo)
    return demos, skipped


# --- corpus statistics -------------------------------------------------------


def corpus_stats(tasks: Sequence[RepairTask]) -> CorpusStats:
    """Character edit-distance stats plus the failure-class histogram.

    Every task must carry the failure_status recorded when its broken snippet
    was verified; the histogram fractions sum to 1.
    """
    if not tasks:
        raise ValueError("corpus_stats needs at least one task")
    distances = [
        levenshtein(task.broken.to_text(), task.ground_truth.to_text()) for task in tasks
    ]
    mean = sum(distances) / len(distances)
    if len(distances) > 1:
        std = math.sqrt(sum((d - mean) ** 2 for d in distances) / (len(distances) - 1))
    else:
        std = 0.0
    counts: dict[str, int] = {}
    for task in tasks:
        if task.failure_status is None:
            raise ValueError(f"task {task.task_id!r} has no recorded failure status")
        counts[task.failure_status] = counts.get(task.failure_status, 0) + 1
    histogram = {status: count / len(tasks) for status, count in counts.items()}
    return CorpusStats(
        count=len(tasks),
        edit_distance_mean=mean,
        edit_distance_std=std,
        failure_class_histogram=histogram,
    )


# --- completion clients and the repair benchmark ------------------------------


class CompletionClient(Protocol):
    def complete(self, prompt: str, n: int, temperature: float, max_tokens: int) -> list[str]: ...


class ReplayCompletionClient:
    """Replays completions recorded in a JSONL file, keyed by exact prompt."""

    def __init__(self, path: str | Path):
        self._by_prompt: dict[str, list[str]] = {}
        for record in read_jsonl(path):
            self._by_prompt[record["prompt"]] = list(record["completions"])

    def complete(self, prompt: str, n: int, temperature: float, max_tokens: int) -> list[str]:
        try:
            recorded = self._by_prompt[prompt]
        except KeyError:
            raise ClientError("no recorded completions for this prompt") from None
        return recorded[:n]


class HttpCompletionClient:
    """POSTs the completion request to a JSON endpoint.

    Request body mirrors the client contract; the endpoint must answer
    ``{"completions": [str, ...]}``.
    """

    def __init__(self, url: str, timeout_s: float = 120.0):
        self.url = url
        self.timeout_s = timeout_s

    def complete(self, prompt: str, n: int, temperature: float, max_tokens: int) -> list[str]:
        body = json.dumps(
            {"prompt": prompt, "n": n, "temperature": temperature, "max_tokens": max_tokens}
        ).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout_s) as response:
                payload = json.loads(response.read().decode("utf-8"))
            completions = payload["completions"]
            if not isinstance(completions, list):
                raise TypeError("completions must be a list")
            return [str(c) for c in completions]
        except (urllib.error.URLError, ValueError, KeyError, TypeError) as exc:
            raise ClientError(f"completion endpoint failed: {exc}") from exc


def build_repair_benchmark(
    sources: Sequence[TaskSource],
    client: CompletionClient,
    executor: Executor,
    prompt_template: str,
    n_samples: int = 100,
    temperature: float = 0.8,
    max_keep: int = 20,
    max_tokens: int = 512,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> tuple[list[RepairTask], CorpusStats | None, list[dict]]:
    """Collect model-generated candidates that fail verification.

    Per task: sample ``n_samples`` completions, drop exact duplicates, verify
    each, and keep up to ``max_keep`` whose status is not all_passed. Client
    failures are recorded per task in the returned incomplete list and the
    remaining tasks still run.
    """
    tasks: list[RepairTask] = []
    incomplete: list[dict] = []
    for source in sources:
        prompt = prompt_template.format(
            description=source.description,
            tests="\n".join(t.code for t in source.tests),
        )
        try:
            completions = client.complete(prompt, n_samples, temperature, max_tokens)
        except ClientError as exc:
            incomplete.append({"task_id": source.task_id, "error": str(exc)})
            continue
        kept = 0
        for candidate in dict.fromkeys(completions):
            if kept >= max_keep:
                break
            broken = Snippet.from_text(candidate.rstrip("\n"))
            report = execute(broken, source.tests, executor, timeout_ms)
            if report.status == ALL_PASSED:
                continue
            tasks.append(
                RepairTask(
                    task_id=f"{source.task_id}/r{kept}",
                    description=source.description,
                    tests=source.tests,
                    broken=broken,
                    ground_truth=source.ground_truth,
                    failure_status=report.status,
                )
            )
            kept += 1
    stats = corpus_stats(tasks) if tasks else None
    return tasks, stats, incomplete


# --- MBPP-style ingestion ------------------------------------------------------


def resplit_records(records: Sequence[dict], spec: dict[str, list[str]]) -> dict[str, list[dict]]:
    """Reassign records to splits, e.g. {"train": ["train", "test:0.5"]}.

    ``"test:0.5"`` takes the first half of the source split after sorting by
    task_id; a bare name takes the whole split.
    """
    by_split: dict[str, list[dict]] = {}
    for record in records:
        by_split.setdefault(str(record.get("split", "")), []).append(record)
    for group in by_split.values():
        group.sort(key=lambda r: str(r.get("task_id", "")))
    out: dict[str, list[dict]] = {}
    for target, parts in spec.items():
        chosen: list[dict] = []
        for part in parts:
            name, _, fraction = part.partition(":")
            group = by_split.get(name, [])
            if fraction:
                chosen.extend(group[: int(len(group) * float(fraction))])
            else:
                chosen.extend(group)
        out[target] = chosen
    return out


def source_from_record(record: dict) -> TaskSource:
    tests = tuple(
        UnitTest(code=test, index=i) for i, test in enumerate(record["test_list"], start=1)
    )
    return TaskSource(
        task_id=str(record["task_id"]),
        description=record["text"],
        tests=tests,
        ground_truth=Snippet.from_text(record["code"].rstrip("\n")),
    )


def validate_sources(
    records: Sequence[dict],
    executor: Executor,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> tuple[list[TaskSource], list[dict]]:
    """Parse records and keep only those whose ground truth passes its tests."""
    sources: list[TaskSource] = []
    skipped: list[dict] = []
    for record in records:
        try:
            source = source_from_record(record)
        except (KeyError, TypeError, ValueError) as exc:
            skipped.append({"task_id": str(record.get("task_id")), "reason": f"malformed: {exc}"})
            continue
        report = execute(source.ground_truth, source.tests, executor, timeout_ms)
        if report.status != ALL_PASSED:
            skipped.append(
                {"task_id": source.task_id, "reason": f"ground truth {report.status}"}
            )
            continue
        sources.append(source)
    return sources, skipped


# --- record (de)serialization ---------------------------------------------------


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def task_to_record(task: RepairTask) -> dict:
    return {
        "task_id": task.task_id,
        "description": task.description,
        "tests": [t.code for t in task.tests],
        "broken": task.broken.to_text(),
        "ground_truth": task.ground_truth.to_text(),
        "failure_status": task.failure_status,
    }


def task_from_record(record: dict) -> RepairTask:
    return RepairTask(
        task_id=record["task_id"],
        description=record["description"],
        tests=tuple(UnitTest(code=t, index=i) for i, t in enumerate(record["tests"], start=1)),
        broken=Snippet.from_text(record["broken"]),
        ground_truth=Snippet.from_text(record["ground_truth"]),
        failure_status=record.get("failure_status"),
    )


def demo_to_record(demo: Demonstration, demo_id: str) -> dict:
    record = task_to_record(demo.task)
    record["demo_id"] = demo_id
    record["actions"] = [format_command(cmd) for cmd in demo.actions]
    record["initial_report"] = demo.initial.report.to_payload()
    record["state_reports"] = [state.report.to_payload() for state in demo.states]
    return record


def demo_from_record(record: dict) -> Demonstration:
    """Rebuild a demonstration, replaying its actions to recover the states."""
    task = task_from_record(record)
    actions = tuple(parse(text) for text in record["actions"])
    snippet = task.broken
    states = []
    for action, payload in zip(actions[:-1], record["state_reports"], strict=True):
        snippet = apply_edit(snippet, action)
        states.append(EditorState(snippet, ExecutionReport.from_payload(payload)))
    return Demonstration(
        task=task,
        actions=actions,
        states=tuple(states),
        initial=EditorState(task.broken, ExecutionReport.from_payload(record["initial_report"])),
    )

"""Multi-turn episode engine: agent loop, built-in agents, pass@k evaluation.

An episode couples an agent to the editor and verifier. Each turn the agent
sees the serialized trace so far and emits one action; malformed or
out-of-range actions consume the turn with a format penalty and leave the
state unchanged. The episode ends on Exit or at the turn cap.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from patchpad.datagen import (
    Demonstration,
    RepairTask,
    serialize_action,
    serialize_state,
    task_prompt_header,
)
from patchpad.dsl import (
    AddLine,
    Command,
    DeleteLine,
    Exit,
    FormatViolation,
    ReplaceLine,
    ReplaceWord,
    format_command,
    parse,
    strip_eoos,
)
from patchpad.editdist import fractional_edit_distance
from patchpad.editor import LineOutOfRange, Snippet, apply_edit
from patchpad.rl import RewardConfig, StateSummary, TurnRecord, compute_reward
from patchpad.verify import (
    ALL_PASSED,
    DEFAULT_TIMEOUT_MS,
    TEST_FAILED,
    EditorState,
    Executor,
    execute,
)

Agent = Callable[[str], str]
AgentFactory = Callable[[RepairTask, int], Agent]


class AgentFailure(RuntimeError):
    """The agent raised; partial turn records ride along."""

    def __init__(self, message: str, records: list[TurnRecord]):
        super().__init__(message)
        self.records = records


@dataclass(frozen=True)
class EpisodeConfig:
    max_turns: int = 10
    max_action_chars: int = 1000
    reward_config: RewardConfig = field(default_factory=RewardConfig)
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self):
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")


@dataclass(frozen=True)
class StepResult:
    observation: str
    reward: float
    done: bool
    solved: bool
    violation: bool


@dataclass
class EpisodeResult:
    solved: bool
    exited_cleanly: bool
    turns_used: int
    turn_records: list[TurnRecord]
    final_snippet: Snippet


def _fraction_passing(state: EditorState, test_count: int) -> float:
    if state.report.status == ALL_PASSED:
        return 1.0
    if state.report.status == TEST_FAILED:
        return (test_count - len(state.report.failed)) / test_count
    return 0.0


class Episode:
    """Stepwise episode state machine; also drives the wire-protocol server."""

    def __init__(self, task: RepairTask, cfg: EpisodeConfig, executor: Executor):
        self.task = task
        self.cfg = cfg
        self._executor = executor
        report = execute(task.broken, task.tests, executor, cfg.timeout_ms)
        self.state = EditorState(task.broken, report)
        self.ever_solved = self.state.solved
        self.turn = 0
        self.done = False
        self.exited_via_exit = False
        self.turn_records: list[TurnRecord] = []
        self._truth_text = task.ground_truth.to_text()
        self._trace_parts = [
            task_prompt_header(task.description, task.tests),
            serialize_state(self.state),
        ]

    @property
    def currently_solved(self) -> bool:
        return self.state.solved

    def trace_text(self) -> str:
        return "".join(self._trace_parts)

    def _summary(self, state: EditorState, sticky_solved: bool) -> StateSummary:
        return StateSummary(
            solved=sticky_solved,
            fraction_passing=_fraction_passing(state, len(self.task.tests)),
            frac_edit_distance=fractional_edit_distance(
                state.snippet.to_text(), self._truth_text
            ),
        )

    def step(self, action_text: str) -> StepResult:
        if self.done:
            raise RuntimeError("episode is already done")
        text = action_text[: self.cfg.max_action_chars]
        before = self._summary(self.state, self.ever_solved)

        cmd: Command | None = None
        violation = False
        try:
            cmd = parse(text)
        except FormatViolation:
            violation = True

        is_exit = isinstance(cmd, Exit)
        new_state = self.state
        if cmd is not None and not is_exit:
            try:
                new_snippet = apply_edit(self.state.snippet, cmd)
            except LineOutOfRange:
                violation = True
                cmd = None
            else:
                report = execute(
                    new_snippet, self.task.tests, self._executor, self.cfg.timeout_ms
                )
                new_state = EditorState(new_snippet, report)

        sticky_after = self.ever_solved or new_state.solved
        after = self._summary(new_state, sticky_after)
        reward = compute_reward(
            self.cfg.reward_config, before, after, parse_ok=not violation, action=cmd
        )

        self.state = new_state
        self.ever_solved = sticky_after
        self.turn += 1
        if is_exit:
            self.done = True
            self.exited_via_exit = True
        elif self.turn >= self.cfg.max_turns:
            self.done = True

        observation = ""
        self._trace_parts.append(
            serialize_action(cmd) if cmd is not None else strip_eoos(text) + ";\n"
        )
        if not is_exit:
            observation = serialize_state(self.state)
            self._trace_parts.append(observation)

        self.turn_records.append(
            TurnRecord(
                state_before=before,
                action_text=action_text,
                parse_ok=not violation,
                state_after=after,
                reward=reward,
                terminal=self.done,
            )
        )
        return StepResult(
            observation=observation,
            reward=reward,
            done=self.done,
            solved=self.currently_solved,
            violation=violation,
        )


def run_episode(
    task: RepairTask,
    agent: Agent,
    cfg: EpisodeConfig,
    executor: Executor,
) -> EpisodeResult:
    episode = Episode(task, cfg, executor)
    while not episode.done:
        try:
            action = agent(episode.trace_text())
        except Exception as exc:
            raise AgentFailure(f"agent failed on turn {episode.turn + 1}: {exc}",
                               episode.turn_records) from exc
        episode.step(action)
    return EpisodeResult(
        solved=episode.currently_solved,
        exited_cleanly=episode.exited_via_exit and episode.currently_solved,
        turns_used=episode.turn,
        turn_records=episode.turn_records,
        final_snippet=episode.state.snippet,
    )


def oracle_agent(demo: Demonstration) -> Agent:
    """Replays the demonstration's actions in order, ignoring observations."""
    actions = [format_command(cmd) for cmd in demo.actions]
    position = 0

    def agent(_trace: str) -> str:
        nonlocal position
        if position < len(actions):
            action = actions[position]
            position += 1
            return action
        return format_command(Exit())

    return agent


def scripted_agent(actions: Sequence[str]) -> Agent:
    """Emits the given raw action texts in order; Exit once exhausted."""
    iterator = iter(list(actions))

    def agent(_trace: str) -> str:
        return next(iterator, format_command(Exit()))

    return agent


class HttpAgentError(RuntimeError):
    """The external agent endpoint failed or answered garbage."""


def http_agent(url: str, temperature: float = 0.0, max_tokens: int = 250) -> Agent:
    """Adapter for an external completion endpoint acting as the policy.

    Sends the trace so far through the completion-client contract (n=1) and
    returns the single completion as the action text.
    """
    from patchpad.datagen import ClientError, HttpCompletionClient

    client = HttpCompletionClient(url)

    def agent(trace: str) -> str:
        try:
            completions = client.complete(trace, 1, temperature, max_tokens)
        except ClientError as exc:
            raise HttpAgentError(str(exc)) from exc
        if not completions:
            raise HttpAgentError("endpoint returned no completions")
        return completions[0]

    return agent


def random_agent(rng: random.Random, exit_probability: float = 0.1) -> Agent:
    """Baseline agent emitting random commands aimed at plausible lines."""

    def agent(trace: str) -> str:
        if rng.random() < exit_probability:
            return format_command(Exit())
        line = rng.randint(1, 20)
        roll = rng.random()
        if roll < 0.25:
            cmd: Command = DeleteLine(line)
        elif roll < 0.5:
            cmd = AddLine(line, "    pass")
        elif roll < 0.75:
            cmd = ReplaceLine(line, "    return None")
        else:
            cmd = ReplaceWord(line, old="return", new="yield")
        return format_command(cmd)

    return agent


@dataclass(frozen=True)
class PassRates:
    k: int
    pass_at_1: float
    pass_at_k: float
    per_task: tuple[dict, ...]


def evaluate_pass_at_k(
    tasks: Sequence[RepairTask],
    agent_factory: AgentFactory,
    k: int,
    cfg: EpisodeConfig,
    executor: Executor,
) -> PassRates:
    """pass@1 counts the first run per task; pass@k counts any-of-k solves."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not tasks:
        raise ValueError("no tasks to evaluate")
    per_task = []
    for task in tasks:
        outcomes = []
        for run_index in range(k):
            agent = agent_factory(task, run_index)
            result = run_episode(task, agent, cfg, executor)
            outcomes.append(result.solved)
        per_task.append(
            {"task_id": task.task_id, "outcomes": outcomes, "solved_any": any(outcomes)}
        )
    pass_1 = sum(1 for entry in per_task if entry["outcomes"][0]) / len(per_task)
    pass_k = sum(1 for entry in per_task if entry["solved_any"]) / len(per_task)
    return PassRates(k=k, pass_at_1=pass_1, pass_at_k=pass_k, per_task=tuple(per_task))

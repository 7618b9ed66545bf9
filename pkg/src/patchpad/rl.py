"""Reward functions, per-turn returns, group-normalized advantages, and the
clipped surrogate objective for multi-turn repair trajectories.

Returns are suffix sums of turn rewards (discount 1.0 by default). Advantages
normalize each turn's returns over the trajectories still alive at that turn:
subtract the group mean and divide by the sample standard deviation. A
single-survivor turn keeps its raw return; a degenerate spread (std below
``std_floor``) is only mean-centered. Per-turn log-probabilities are sums over
the turn's action tokens and the objective is not divided by token count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from patchpad.dsl import Command, Exit

ONLY_WHEN_SOLVED = "only_when_solved"
UNIT_TEST_FRACTION = "unit_test_fraction"
UNIT_TEST_FRACTION_PLUS_EDIT_BONUS = "unit_test_fraction_plus_edit_bonus"

TASK_REWARDS = (ONLY_WHEN_SOLVED, UNIT_TEST_FRACTION, UNIT_TEST_FRACTION_PLUS_EDIT_BONUS)


class EmptyGroup(ValueError):
    """A trajectory group with no trajectories has no advantages."""


class NonFiniteInput(ValueError):
    """A log-probability, advantage, or KL value was NaN or infinite."""


@dataclass(frozen=True)
class RewardConfig:
    task_reward: str = ONLY_WHEN_SOLVED
    format_penalty: float = -0.5
    missing_exit_penalty: float = -0.5
    edit_bonus_scale: float = 0.1
    reward_clip: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        if self.task_reward not in TASK_REWARDS:
            raise ValueError(f"unknown task reward {self.task_reward!r}")
        if self.format_penalty > 0 or self.missing_exit_penalty > 0:
            raise ValueError("penalties must be <= 0")
        low, high = self.reward_clip
        if not low <= 0 <= high:
            raise ValueError("reward_clip must contain 0")


@dataclass(frozen=True)
class StateSummary:
    """What the reward function sees of an editor state.

    ``solved`` is the absorbing has-been-solved flag (stays true for the rest
    of the episode once the snippet first passes), so only_when_solved pays at
    most once and the missing-Exit penalty applies to every post-solve edit.
    """

    solved: bool
    fraction_passing: float
    frac_edit_distance: float | None = None


@dataclass
class TurnRecord:
    state_before: StateSummary
    action_text: str
    parse_ok: bool
    state_after: StateSummary
    reward: float
    log_prob_current: float = 0.0
    log_prob_old: float = 0.0
    log_prob_reference: float = 0.0
    kl: float = 0.0
    terminal: bool = False

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise ValueError("reward must be finite")


@dataclass
class TrajectoryBatch:
    """Rollout group for one query; all trajectories share the query."""

    query_id: str
    group: list[list[TurnRecord]] = field(default_factory=list)

    @property
    def group_size(self) -> int:
        return len(self.group)


@dataclass(frozen=True)
class GrpoConfig:
    clip_epsilon: float = 0.2
    kl_weight: float = 0.01
    discount: float = 1.0
    std_floor: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must be in (0, 1)")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")


def compute_reward(
    cfg: RewardConfig,
    before: StateSummary,
    after: StateSummary,
    parse_ok: bool,
    action: Command | None,
) -> float:
    """Turn reward: task term plus format penalties.

    ``parse_ok`` is false both for unparseable emissions and for commands
    addressing a nonexistent line; either earns ``format_penalty``. An action
    other than Exit while the task is already solved earns
    ``missing_exit_penalty``. Both can stack.
    """
    if cfg.task_reward == ONLY_WHEN_SOLVED:
        task = 1.0 if after.solved and not before.solved else 0.0
    elif cfg.task_reward == UNIT_TEST_FRACTION:
        task = after.fraction_passing - before.fraction_passing
    else:
        if before.frac_edit_distance is None or after.frac_edit_distance is None:
            raise ValueError("edit-bonus reward needs fractional edit distances")
        task = after.fraction_passing - before.fraction_passing
        task += cfg.edit_bonus_scale * (before.frac_edit_distance - after.frac_edit_distance)
        low, high = cfg.reward_clip
        task = min(max(task, low), high)
    reward = task
    if not parse_ok:
        reward += cfg.format_penalty
    if before.solved and not isinstance(action, Exit):
        reward += cfg.missing_exit_penalty
    return reward


def compute_returns(rewards: list[float], discount: float = 1.0) -> list[float]:
    """Discounted suffix sums: R_t = r_t + discount * R_{t+1}."""
    if not rewards:
        raise ValueError("reward sequence must be nonempty")
    returns = [0.0] * len(rewards)
    tail = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        tail = rewards[t] + discount * tail
        returns[t] = tail
    return returns


def compute_group_returns(batch: TrajectoryBatch, cfg: GrpoConfig) -> list[list[float]]:
    return [
        compute_returns([rec.reward for rec in trajectory], cfg.discount)
        for trajectory in batch.group
    ]


def _sample_std(values: list[float], mean: float) -> float:
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))


def compute_advantages(
    batch: TrajectoryBatch,
    cfg: GrpoConfig,
    returns: list[list[float]] | None = None,
) -> list[list[float]]:
    """Per-turn advantages, normalized over the trajectories alive at each turn.

    ``returns`` may be precomputed; otherwise they are derived from the turn
    rewards with ``cfg.discount``. Trajectory i is alive at turn t while it
    still has a turn there, so a group mixing 2-turn and 5-turn trajectories
    normalizes turn 3 over the long trajectories only.
    """
    if batch.group_size == 0:
        raise EmptyGroup(f"query {batch.query_id!r} has no trajectories")
    if returns is None:
        returns = compute_group_returns(batch, cfg)
    advantages = [[0.0] * len(r) for r in returns]
    horizon = max(len(r) for r in returns)
    for t in range(horizon):
        alive = [i for i, r in enumerate(returns) if len(r) > t]
        if len(alive) == 1:
            i = alive[0]
            advantages[i][t] = returns[i][t]
            continue
        values = [returns[i][t] for i in alive]
        mean = sum(values) / len(values)
        std = _sample_std(values, mean)
        if std < cfg.std_floor:
            for i in alive:
                advantages[i][t] = returns[i][t] - mean
        else:
            for i in alive:
                advantages[i][t] = (returns[i][t] - mean) / std
    return advantages


def grpo_objective(
    batch: TrajectoryBatch,
    advantages: list[list[float]],
    cfg: GrpoConfig,
) -> float:
    """Clipped-surrogate objective value summed over trajectories and turns.

    rho is exp(log_prob_current - log_prob_old) per turn; each turn
    contributes min(rho * A, clip(rho, 1-eps, 1+eps) * A) - kl_weight * kl.
    Gradients are the trainer's job; this is the scalar.
    """
    total = 0.0
    for trajectory, trajectory_adv in zip(batch.group, advantages, strict=True):
        for record, advantage in zip(trajectory, trajectory_adv, strict=True):
            inputs = (
                record.log_prob_current,
                record.log_prob_old,
                advantage,
                record.kl,
            )
            if not all(math.isfinite(v) for v in inputs):
                raise NonFiniteInput(f"non-finite turn inputs: {inputs}")
            rho = math.exp(record.log_prob_current - record.log_prob_old)
            clipped = min(max(rho, 1.0 - cfg.clip_epsilon), 1.0 + cfg.clip_epsilon)
            total += min(rho * advantage, clipped * advantage) - cfg.kl_weight * record.kl
    return total

"""Command-line entry points and experience-buffer persistence.

Subcommands: gen-demos, build-repair, serve, rollout, eval, advantages.
Options come from an optional JSON config file plus flag overrides; the only
environment variables honored are PATCHPAD_RUNNER (runner launch command) and
PATCHPAD_BIND (server bind address).
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from patchpad import datagen
from patchpad.datagen import (
    Demonstration,
    HttpCompletionClient,
    RepairTask,
    ReplayCompletionClient,
    corpus_stats,
    demo_from_record,
    demo_to_record,
    read_jsonl,
    resplit_records,
    task_to_record,
    validate_sources,
    write_jsonl,
)
from patchpad.episode import (
    Agent,
    Episode,
    EpisodeConfig,
    HttpAgentError,
    PassRates,
    evaluate_pass_at_k,
    http_agent,
    oracle_agent,
    random_agent,
)
from patchpad.rl import GrpoConfig, StateSummary, TrajectoryBatch, TurnRecord
from patchpad.rl import compute_advantages, compute_group_returns, grpo_objective
from patchpad.server import EpisodeServer, serve_stdio, serve_tcp
from patchpad.verify import InProcessExecutor, SubprocessExecutor

SCHEMA_VERSION = 1

BIND_ENV_VAR = "PATCHPAD_BIND"


# --- experience buffer --------------------------------------------------------


@dataclass(frozen=True)
class ExperienceRecord:
    query_id: str
    trajectory_index: int
    turn_index: int
    state: str
    action: str
    reward: float
    ret: float | None
    advantage: float | None
    log_prob_current: float
    log_prob_old: float
    log_prob_reference: float
    kl: float
    terminal: bool

    def to_record(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "query_id": self.query_id,
            "trajectory_index": self.trajectory_index,
            "turn_index": self.turn_index,
            "state": self.state,
            "action": self.action,
            "reward": self.reward,
            "return": self.ret,
            "advantage": self.advantage,
            "log_prob_current": self.log_prob_current,
            "log_prob_old": self.log_prob_old,
            "log_prob_reference": self.log_prob_reference,
            "kl": self.kl,
            "terminal": self.terminal,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ExperienceRecord":
        if record.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {record.get('schema_version')!r}")
        return cls(
            query_id=record["query_id"],
            trajectory_index=record["trajectory_index"],
            turn_index=record["turn_index"],
            state=record["state"],
            action=record["action"],
            reward=record["reward"],
            ret=record["return"],
            advantage=record["advantage"],
            log_prob_current=record["log_prob_current"],
            log_prob_old=record["log_prob_old"],
            log_prob_reference=record["log_prob_reference"],
            kl=record["kl"],
            terminal=record["terminal"],
        )


def write_buffer(path: str | Path, records: Iterable[ExperienceRecord]) -> None:
    write_jsonl(path, (record.to_record() for record in records))


def read_buffer(path: str | Path) -> list[ExperienceRecord]:
    records = [ExperienceRecord.from_record(r) for r in read_jsonl(path)]
    keys = [(r.query_id, r.trajectory_index, r.turn_index) for r in records]
    if len(set(keys)) != len(keys):
        raise ValueError("buffer contains duplicate (query, trajectory, turn) keys")
    return records


# --- shared plumbing ------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as handle:
        config = json.load(handle)
    if not isinstance(config, dict):
        raise SystemExit("config file must contain a JSON object")
    return config


def _option(args_value, config: dict, key: str, default):
    if args_value is not None:
        return args_value
    if key in config:
        return config[key]
    return default


def _make_executor(kind: str):
    if kind == "in-process":
        return InProcessExecutor()
    if kind == "subprocess":
        return SubprocessExecutor()
    raise SystemExit(f"unknown executor {kind!r}")


def load_dataset(path: str | Path) -> tuple[dict[str, RepairTask], dict[str, Demonstration]]:
    """Load a tasks or demos JSONL file, keyed by demo_id/task_id."""
    tasks: dict[str, RepairTask] = {}
    demos: dict[str, Demonstration] = {}
    for record in read_jsonl(path):
        if "actions" in record:
            demo = demo_from_record(record)
            key = record.get("demo_id") or demo.task.task_id
            demos[key] = demo
            tasks[key] = demo.task
        else:
            task = datagen.task_from_record(record)
            tasks[task.task_id] = task
    return tasks, demos


def _make_agent_factory(spec: str, demos: dict[str, Demonstration], seed: int, keyed: dict[str, RepairTask]):
    key_by_task = {id(task): key for key, task in keyed.items()}

    def factory(task: RepairTask, run_index: int) -> Agent:
        if spec == "oracle":
            demo = demos.get(key_by_task[id(task)])
            if demo is None:
                raise SystemExit("oracle agent needs a demonstrations dataset")
            return oracle_agent(demo)
        if spec == "random":
            return random_agent(random.Random(f"{seed}:{key_by_task[id(task)]}:{run_index}"))
        if spec.startswith("http:") or spec.startswith("https:"):
            return http_agent(spec)
        raise SystemExit(f"unknown agent spec {spec!r} (oracle | random | http://...)")

    return factory


# --- subcommands ------------------------------------------------------------------


def cmd_gen_demos(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    input_path = _option(args.input, config, "input", None)
    output_dir = _option(args.output_dir, config, "output_dir", None)
    if not input_path or not output_dir:
        print("gen-demos needs --input and --output-dir (or config keys)", file=sys.stderr)
        return 2
    repetition = int(_option(args.repetition, config, "repetition", 1))
    seed = int(_option(args.seed, config, "seed", 0))
    split = _option(args.split, config, "split", None)
    limit = _option(args.limit, config, "limit", None)
    resplit = config.get("resplit")

    records = read_jsonl(input_path)
    if resplit:
        if not split:
            print("a resplit config needs --split to pick a target", file=sys.stderr)
            return 2
        records = resplit_records(records, resplit).get(split, [])
    elif split:
        records = [r for r in records if r.get("split") == split]
    if limit:
        records = records[: int(limit)]

    executor = _make_executor(_option(args.executor, config, "executor", "subprocess"))
    sources, ingest_skipped = validate_sources(records, executor)
    if not sources:
        print("no valid task sources after validation", file=sys.stderr)
        return 1
    demos, gen_skipped = datagen.generate_demonstrations(sources, repetition, seed, executor)
    if not demos:
        print("generation produced no demonstrations", file=sys.stderr)
        return 1

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    demo_records = [demo_to_record(demo, f"{demo.task.task_id}/d{i}") for i, demo in enumerate(demos)]
    write_jsonl(out / "demos.jsonl", demo_records)
    stats = corpus_stats([demo.task for demo in demos])
    (out / "stats.json").write_text(json.dumps(stats.to_dict(), indent=2) + "\n")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "demonstrations",
        "input": str(input_path),
        "split": split,
        "repetition": repetition,
        "seed": seed,
        "source_count": len(sources),
        "demo_count": len(demos),
        "skipped_sources": ingest_skipped,
        "skipped_generations": gen_skipped,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(
        f"wrote {len(demos)} demonstrations from {len(sources)} tasks to {out / 'demos.jsonl'} "
        f"(mean edit distance {stats.edit_distance_mean:.2f})"
    )
    return 0


def cmd_build_repair(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    input_path = _option(args.input, config, "input", None)
    output_dir = _option(args.output_dir, config, "output_dir", None)
    template_path = _option(args.template, config, "template", None)
    client_spec = _option(args.client, config, "client", None)
    if not input_path or not output_dir or not template_path or not client_spec:
        print(
            "build-repair needs --input, --output-dir, --template and --client",
            file=sys.stderr,
        )
        return 2
    n_samples = int(_option(args.samples, config, "samples", 100))
    temperature = float(_option(args.temperature, config, "temperature", 0.8))
    max_keep = int(_option(args.max_keep, config, "max_keep", 20))
    max_tokens = int(_option(args.max_tokens, config, "max_tokens", 512))

    if client_spec.startswith("replay:"):
        client = ReplayCompletionClient(client_spec[len("replay:"):])
    elif client_spec.startswith("http:") or client_spec.startswith("https:"):
        client = HttpCompletionClient(client_spec)
    else:
        print(f"unknown client spec {client_spec!r} (replay:FILE | http://...)", file=sys.stderr)
        return 2

    executor = _make_executor(_option(args.executor, config, "executor", "subprocess"))
    sources, ingest_skipped = validate_sources(read_jsonl(input_path), executor)
    template = Path(template_path).read_text(encoding="utf-8")
    tasks, stats, incomplete = datagen.build_repair_benchmark(
        sources,
        client,
        executor,
        template,
        n_samples=n_samples,
        temperature=temperature,
        max_keep=max_keep,
        max_tokens=max_tokens,
    )

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "tasks.jsonl", (task_to_record(task) for task in tasks))
    if stats is not None:
        (out / "stats.json").write_text(json.dumps(stats.to_dict(), indent=2) + "\n")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "repair_benchmark",
        "input": str(input_path),
        "samples": n_samples,
        "temperature": temperature,
        "max_keep": max_keep,
        "task_count": len(tasks),
        "skipped_sources": ingest_skipped,
        "incomplete_tasks": incomplete,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(tasks)} repair tasks to {out / 'tasks.jsonl'}")
    if incomplete:
        print(f"{len(incomplete)} tasks incomplete (see manifest.json)", file=sys.stderr)
        return 1
    return 0


def _episode_config(args: argparse.Namespace, config: dict) -> EpisodeConfig:
    return EpisodeConfig(
        max_turns=int(_option(args.max_turns, config, "max_turns", 10)),
        max_action_chars=int(_option(args.max_action_chars, config, "max_action_chars", 1000)),
    )


def cmd_serve(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    dataset = _option(args.dataset, config, "dataset", None)
    if not dataset:
        print("serve needs --dataset", file=sys.stderr)
        return 2
    tasks, _demos = load_dataset(dataset)
    executor = _make_executor(_option(args.executor, config, "executor", "subprocess"))
    server = EpisodeServer(tasks, _episode_config(args, config), executor)
    bind = args.bind or os.environ.get(BIND_ENV_VAR)
    if args.stdio or not bind:
        serve_stdio(server)
        return 0
    host, _, port = bind.rpartition(":")
    tcp = serve_tcp(server, host or "127.0.0.1", int(port))
    print(f"serving {len(tasks)} tasks on {tcp.server_address[0]}:{tcp.server_address[1]}")
    try:
        tcp.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        tcp.server_close()
    return 0


def _rollout_records(
    tasks: dict[str, RepairTask],
    demos: dict[str, Demonstration],
    agent_spec: str,
    group_size: int,
    cfg: EpisodeConfig,
    executor,
    seed: int,
) -> list[ExperienceRecord]:
    factory = _make_agent_factory(agent_spec, demos, seed, tasks)
    records: list[ExperienceRecord] = []
    for key in sorted(tasks):
        task = tasks[key]
        for trajectory_index in range(group_size):
            agent = factory(task, trajectory_index)
            episode = Episode(task, cfg, executor)
            turn_index = 0
            while not episode.done:
                action = agent(episode.trace_text())
                step = episode.step(action)
                turn = episode.turn_records[-1]
                records.append(
                    ExperienceRecord(
                        query_id=key,
                        trajectory_index=trajectory_index,
                        turn_index=turn_index,
                        state=step.observation,
                        action=action,
                        reward=step.reward,
                        ret=None,
                        advantage=None,
                        log_prob_current=turn.log_prob_current,
                        log_prob_old=turn.log_prob_old,
                        log_prob_reference=turn.log_prob_reference,
                        kl=turn.kl,
                        terminal=turn.terminal,
                    )
                )
                turn_index += 1
    return records


def cmd_rollout(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    dataset = _option(args.dataset, config, "dataset", None)
    out_path = _option(args.out, config, "out", None)
    if not dataset or not out_path:
        print("rollout needs --dataset and --out", file=sys.stderr)
        return 2
    tasks, demos = load_dataset(dataset)
    executor = _make_executor(_option(args.executor, config, "executor", "subprocess"))
    records = _rollout_records(
        tasks,
        demos,
        _option(args.agent, config, "agent", "oracle"),
        int(_option(args.group_size, config, "group_size", 1)),
        _episode_config(args, config),
        executor,
        int(_option(args.seed, config, "seed", 0)),
    )
    write_buffer(out_path, records)
    print(f"wrote {len(records)} experience records to {out_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    dataset = _option(args.dataset, config, "dataset", None)
    if not dataset:
        print("eval needs --dataset", file=sys.stderr)
        return 2
    tasks, demos = load_dataset(dataset)
    executor = _make_executor(_option(args.executor, config, "executor", "subprocess"))
    k = int(_option(args.k, config, "k", 1))
    agent_spec = _option(args.agent, config, "agent", "oracle")
    factory = _make_agent_factory(agent_spec, demos, int(_option(args.seed, config, "seed", 0)), tasks)
    ordered = [tasks[key] for key in sorted(tasks)]
    try:
        rates = evaluate_pass_at_k(ordered, factory, k, _episode_config(args, config), executor)
    except HttpAgentError as exc:
        print(f"agent endpoint failed: {exc}", file=sys.stderr)
        return 1
    _print_pass_table(agent_spec, len(ordered), rates)
    if args.out:
        write_jsonl(args.out, rates.per_task)
    return 0


def _print_pass_table(agent_spec: str, task_count: int, rates: PassRates) -> None:
    print(f"agent: {agent_spec}  tasks: {task_count}")
    print("metric   rate")
    print(f"pass@1   {rates.pass_at_1:7.2%}")
    if rates.k > 1:
        print(f"pass@{rates.k}   {rates.pass_at_k:7.2%}")


def cmd_advantages(args: argparse.Namespace) -> int:
    try:
        records = read_buffer(args.buffer)
    except (OSError, ValueError, KeyError) as exc:
        print(f"malformed buffer: {exc}", file=sys.stderr)
        return 1
    if not records:
        print("buffer is empty", file=sys.stderr)
        return 1
    cfg = GrpoConfig(
        clip_epsilon=args.clip_epsilon,
        kl_weight=args.kl_weight,
        discount=args.discount,
    )

    grouped: dict[str, dict[int, list[ExperienceRecord]]] = {}
    for record in records:
        grouped.setdefault(record.query_id, {}).setdefault(record.trajectory_index, []).append(record)

    annotated: list[ExperienceRecord] = []
    objective_total = 0.0
    placeholder = StateSummary(solved=False, fraction_passing=0.0)
    for query_id in sorted(grouped):
        trajectories = grouped[query_id]
        ordered_indices = sorted(trajectories)
        batch = TrajectoryBatch(query_id=query_id, group=[])
        for trajectory_index in ordered_indices:
            turns = sorted(trajectories[trajectory_index], key=lambda r: r.turn_index)
            batch.group.append(
                [
                    TurnRecord(
                        state_before=placeholder,
                        action_text=turn.action,
                        parse_ok=True,
                        state_after=placeholder,
                        reward=turn.reward,
                        log_prob_current=turn.log_prob_current,
                        log_prob_old=turn.log_prob_old,
                        log_prob_reference=turn.log_prob_reference,
                        kl=turn.kl,
                        terminal=turn.terminal,
                    )
                    for turn in turns
                ]
            )
        returns = compute_group_returns(batch, cfg)
        advantages = compute_advantages(batch, cfg, returns)
        objective_total += grpo_objective(batch, advantages, cfg)
        for group_pos, trajectory_index in enumerate(ordered_indices):
            turns = sorted(trajectories[trajectory_index], key=lambda r: r.turn_index)
            for turn_pos, record in enumerate(turns):
                annotated.append(
                    replace(
                        record,
                        ret=returns[group_pos][turn_pos],
                        advantage=advantages[group_pos][turn_pos],
                    )
                )
    out_path = args.out or args.buffer
    write_buffer(out_path, annotated)
    print(f"annotated {len(annotated)} records -> {out_path}")
    print(f"objective value: {objective_total:.6f}")
    return 0


# --- argument parsing ----------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    parser.add_argument("--executor", choices=["in-process", "subprocess"],
                        help="verification executor (default subprocess)")


def _add_episode_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-turns", type=int, dest="max_turns")
    parser.add_argument("--max-action-chars", type=int, dest="max_action_chars")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchpad")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-demos", help="generate repair demonstrations")
    _add_common(p)
    p.add_argument("--input", help="MBPP-style JSONL (task_id, text, code, test_list)")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--repetition", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--split")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("build-repair", help="build the LLM-failure repair benchmark")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--template", help="prompt template file with {description} and {tests}")
    p.add_argument("--client", help="replay:FILE or an http(s) endpoint URL")
    p.add_argument("--samples", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-keep", type=int, dest="max_keep")
    p.add_argument("--max-tokens", type=int, dest="max_tokens")
    p.set_defaults(func=cmd_build_repair)

    p = sub.add_parser("serve", help="run the episode wire-protocol server")
    _add_common(p)
    _add_episode_options(p)
    p.add_argument("--dataset", help="tasks or demos JSONL file")
    p.add_argument("--stdio", action="store_true", help="serve on stdin/stdout")
    p.add_argument("--bind", help="HOST:PORT for TCP mode (or $PATCHPAD_BIND)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("rollout", help="run episodes and write an experience buffer")
    _add_common(p)
    _add_episode_options(p)
    p.add_argument("--dataset")
    p.add_argument("--agent", help="oracle | random | http(s) endpoint URL")
    p.add_argument("--group-size", type=int, dest="group_size")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("eval", help="report pass@1/pass@k over a dataset")
    _add_common(p)
    _add_episode_options(p)
    p.add_argument("--dataset")
    p.add_argument("--agent")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write per-task outcomes JSONL here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("advantages", help="annotate a buffer with returns/advantages")
    p.add_argument("buffer", help="experience buffer JSONL")
    p.add_argument("--out", help="output path (default: rewrite in place)")
    p.add_argument("--clip-epsilon", type=float, default=0.2, dest="clip_epsilon")
    p.add_argument("--kl-weight", type=float, default=0.01, dest="kl_weight")
    p.add_argument("--discount", type=float, default=1.0)
    p.set_defaults(func=cmd_advantages)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

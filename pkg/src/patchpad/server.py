"""Episode server speaking line-delimited JSON over stdio or TCP.

Requests are one JSON object per line. Ops:

    {"op": "reset", "task_id": "...", "episode": "optional-id"}
        -> {"episode": id, "state": full prompt text, "turn": 0}
    {"op": "step", "episode": id, "action": "### ..."}
        -> {"episode": id, "state": new state text ("" after EXIT),
            "reward": float, "done": bool, "turn": int,
            "info": {"solved": bool, "violation": bool}}

Protocol errors are answered in-band as {"error": "..."}; the server never
terminates on bad input. Episodes are dropped from the registry once done.
"""

from __future__ import annotations

import json
import socketserver
import sys
import threading
from typing import TextIO

from patchpad.datagen import RepairTask
from patchpad.episode import Episode, EpisodeConfig
from patchpad.verify import Executor


class EpisodeServer:
    def __init__(
        self,
        tasks: dict[str, RepairTask],
        cfg: EpisodeConfig,
        executor: Executor,
    ):
        self._tasks = tasks
        self._cfg = cfg
        self._executor = executor
        self._episodes: dict[str, Episode] = {}
        self._counter = 0
        self._lock = threading.Lock()

    def handle_line(self, line: str) -> dict:
        try:
            message = json.loads(line)
        except ValueError as exc:
            return {"error": f"invalid JSON: {exc}"}
        if not isinstance(message, dict):
            return {"error": "request must be a JSON object"}
        with self._lock:
            return self._dispatch(message)

    def _dispatch(self, message: dict) -> dict:
        op = message.get("op")
        if op == "reset":
            return self._reset(message)
        if op == "step":
            return self._step(message)
        return {"error": f"unknown op {op!r}"}

    def _reset(self, message: dict) -> dict:
        task_id = message.get("task_id")
        task = self._tasks.get(str(task_id))
        if task is None:
            return {"error": f"unknown task_id {task_id!r}"}
        episode_id = str(message.get("episode") or self._next_id())
        episode = Episode(task, self._cfg, self._executor)
        self._episodes[episode_id] = episode
        return {"episode": episode_id, "state": episode.trace_text(), "turn": 0}

    def _step(self, message: dict) -> dict:
        episode_id = message.get("episode")
        episode = self._episodes.get(str(episode_id))
        if episode is None:
            return {"error": f"unknown episode {episode_id!r}"}
        action = message.get("action")
        if not isinstance(action, str):
            return {"error": "step needs a string 'action'"}
        result = episode.step(action)
        if result.done:
            del self._episodes[str(episode_id)]
        return {
            "episode": str(episode_id),
            "state": result.observation,
            "reward": result.reward,
            "done": result.done,
            "turn": episode.turn,
            "info": {"solved": result.solved, "violation": result.violation},
        }

    def _next_id(self) -> str:
        self._counter += 1
        return f"ep-{self._counter}"


def serve_stdio(server: EpisodeServer, stdin: TextIO | None = None, stdout: TextIO | None = None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        response = server.handle_line(line)
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()


def serve_tcp(server: EpisodeServer, host: str, port: int) -> socketserver.ThreadingTCPServer:
    """Start a TCP listener; each connection carries the same line protocol."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            for raw in self.rfile:
                line = raw.decode("utf-8", errors="replace")
                if not line.strip():
                    continue
                response = server.handle_line(line)
                payload = json.dumps(response, ensure_ascii=False) + "\n"
                self.wfile.write(payload.encode("utf-8"))

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    return Server((host, port), Handler)

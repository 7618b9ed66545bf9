"""Snippet verification: run unit tests, classify outcomes, render feedback.

The editor state shown to an agent is the line-marked snippet, a ``***``
separator, and the execution feedback; feedback is empty exactly when every
unit test passes. Execution itself happens through an :class:`Executor`:

* :class:`SubprocessExecutor` speaks the line-delimited JSON wire protocol to
  the sandboxed runner process (production path).
* :class:`InProcessExecutor` evaluates in the current interpreter. Fast but
  unsandboxed; only for trusted fixture code (dataset generation, tests).
* :class:`ReplayExecutor` replays recorded reports keyed by snippet text, so
  episodes can run hermetically without any runner.

Wire protocol (shared with the runner): one JSON object per line, UTF-8.
Request ``{"code": str, "tests": [str], "timeout_ms": int}``; response
``{"status": str, "failed": [{"index": int, "test": str}], "stack_trace": str,
"duration_ms": int}``. Responses arrive in request order.
"""

from __future__ import annotations

import json
import os
import shlex
import signal
import subprocess
import sys
import threading
import time
import traceback
import warnings
from contextlib import redirect_stderr, redirect_stdout
from dataclasses import dataclass, field
from io import StringIO
from typing import Protocol, Sequence

from patchpad.editor import Snippet, render

ALL_PASSED = "all_passed"
TEST_FAILED = "test_failed"
SYNTAX_ERROR = "syntax_error"
NAME_ERROR = "name_error"
WRONG_ARGS = "wrong_args"
OTHER_ERROR = "other_error"
TIMEOUT = "timeout"

STATUSES = frozenset(
    {ALL_PASSED, TEST_FAILED, SYNTAX_ERROR, NAME_ERROR, WRONG_ARGS, OTHER_ERROR, TIMEOUT}
)

DEFAULT_TIMEOUT_MS = 5000

STATE_SEPARATOR = "***"

RUNNER_ENV_VAR = "PATCHPAD_RUNNER"
DEFAULT_RUNNER_COMMAND = (sys.executable, "-m", "padrunner")


class RunnerUnavailable(RuntimeError):
    """The runner subprocess could not be spawned (not a snippet failure)."""


@dataclass(frozen=True)
class UnitTest:
    """One assert-statement test; ``index`` is its 1-based list position."""

    code: str
    index: int

    def __post_init__(self):
        if "\n" in self.code:
            raise ValueError("a unit test must be a single line")
        if not self.code.lstrip().startswith("assert"):
            raise ValueError(f"a unit test must begin with 'assert': {self.code!r}")
        if self.index < 1:
            raise ValueError("test index is 1-based")


@dataclass(frozen=True)
class ExecutionReport:
    status: str
    failed: tuple[tuple[int, str], ...] = ()
    stack_trace: str = ""
    duration_ms: int = 0

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if (self.status == ALL_PASSED) != (not self.failed and not self.stack_trace):
            raise ValueError("all_passed must coincide with no failures and no stack trace")
        indices = [index for index, _ in self.failed]
        if any(i < 1 for i in indices) or indices != sorted(set(indices)):
            raise ValueError("failed test indices must be strictly increasing and 1-based")
        if self.duration_ms < 0:
            raise ValueError("duration_ms must be nonnegative")

    def to_payload(self) -> dict:
        return {
            "status": self.status,
            "failed": [{"index": i, "test": t} for i, t in self.failed],
            "stack_trace": self.stack_trace,
            "duration_ms": self.duration_ms,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ExecutionReport":
        return cls(
            status=payload["status"],
            failed=tuple((item["index"], item["test"]) for item in payload["failed"]),
            stack_trace=payload["stack_trace"],
            duration_ms=payload["duration_ms"],
        )


_SYNTAX_NAMES = frozenset({"SyntaxError", "IndentationError", "TabError"})
_NAME_NAMES = frozenset({"NameError", "UnboundLocalError"})
_ARG_MESSAGE_MARKERS = ("positional argument", "keyword argument", "arguments but")


def classify(exc_name: str, message: str = "") -> str:
    """Map an exception name (plus message) to a status class; total."""
    if exc_name in _SYNTAX_NAMES:
        return SYNTAX_ERROR
    if exc_name in _NAME_NAMES:
        return NAME_ERROR
    if exc_name == "AssertionError":
        return TEST_FAILED
    if exc_name == "TypeError" and any(m in message for m in _ARG_MESSAGE_MARKERS):
        return WRONG_ARGS
    return OTHER_ERROR


def classify_exception(exc: BaseException) -> str:
    """Classify a live exception, honoring subclasses of the known types."""
    for klass in type(exc).__mro__:
        if klass.__name__ in _SYNTAX_NAMES or klass.__name__ in _NAME_NAMES:
            return classify(klass.__name__, str(exc))
    return classify(type(exc).__name__, str(exc))


def render_feedback(report: ExecutionReport) -> str:
    """Render the feedback text completing a state; empty iff all tests pass."""
    if report.status == ALL_PASSED:
        return ""
    if report.status == TEST_FAILED:
        blocks = [
            f"Test number {index} was not successful!\n"
            f"The code of the failed test was:\n{test}"
            for index, test in report.failed
        ]
        return "\n".join(blocks)
    if report.status == SYNTAX_ERROR:
        return (
            "The syntax of the proposed solution was not correct. "
            f"Here is the stack trace:\n{report.stack_trace}"
        )
    if report.status == WRONG_ARGS:
        return (
            "You defined the function with the wrong number, or wrong type, "
            f"of arguments. Here is the stack_trace:\n{report.stack_trace}"
        )
    return f"The proposed solution raised an error. Here is the stack trace:\n{report.stack_trace}"


@dataclass(frozen=True)
class EditorState:
    """Environment state: snippet in the editor plus its execution report."""

    snippet: Snippet
    report: ExecutionReport

    @property
    def solved(self) -> bool:
        return self.report.status == ALL_PASSED

    def render(self) -> str:
        return f"{render(self.snippet)}\n{STATE_SEPARATOR}\n{render_feedback(self.report)}"


class Executor(Protocol):
    def run(self, code: str, tests: Sequence[str], timeout_ms: int) -> ExecutionReport: ...


def execute(
    snippet: Snippet,
    tests: Sequence[UnitTest],
    executor: Executor,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> ExecutionReport:
    """Run the snippet against the task's tests and return the report."""
    if timeout_ms <= 0:
        raise ValueError("timeout_ms must be positive")
    if not tests:
        raise ValueError("a task needs at least one unit test")
    return executor.run(snippet.to_text(), [t.code for t in tests], timeout_ms)


# --- execution core shared by the in-process executor -----------------------

_EXEC_CODE_FILENAME = "<snippet>"
_EXEC_TEST_FILENAME = "<test>"


class _EvaluationTimeout(BaseException):
    """Raised by the in-process alarm; BaseException so user code cannot eat it."""


def format_trimmed_traceback(exc: BaseException) -> str:
    """Format a traceback keeping only frames from the executed code.

    No trailing newline: the eoos suffix attaches directly after the last
    trace character when a state is serialized.
    """
    te = traceback.TracebackException.from_exception(exc)
    te.stack = traceback.StackSummary.from_list(
        [f for f in te.stack if f.filename in (_EXEC_CODE_FILENAME, _EXEC_TEST_FILENAME)]
    )
    return "".join(te.format()).rstrip("\n")


def evaluate_in_namespace(code: str, tests: Sequence[str]) -> tuple[str, list[tuple[int, str]], str]:
    """Execute code then tests in one fresh namespace.

    Returns (status, failed, stack_trace). AssertionError marks its test
    failed and evaluation continues; any other exception (at import or while
    running a test) halts with a single classified stack trace, mirroring how
    feedback presents hard failures.
    """
    namespace: dict = {}
    sink = StringIO()
    try:
        with warnings.catch_warnings(), redirect_stdout(sink), redirect_stderr(sink):
            warnings.simplefilter("ignore")
            exec(compile(code, _EXEC_CODE_FILENAME, "exec"), namespace)
    except (KeyboardInterrupt, _EvaluationTimeout):
        raise
    except BaseException as exc:
        return classify_exception(exc), [], format_trimmed_traceback(exc)
    failed: list[tuple[int, str]] = []
    for index, test in enumerate(tests, start=1):
        try:
            with warnings.catch_warnings(), redirect_stdout(sink), redirect_stderr(sink):
                warnings.simplefilter("ignore")
                exec(compile(test, _EXEC_TEST_FILENAME, "exec"), namespace)
        except AssertionError:
            failed.append((index, test))
        except (KeyboardInterrupt, _EvaluationTimeout):
            raise
        except BaseException as exc:
            return classify_exception(exc), failed, format_trimmed_traceback(exc)
    if failed:
        return TEST_FAILED, failed, ""
    return ALL_PASSED, [], ""


class InProcessExecutor:
    """Evaluate snippets in this interpreter. Trusted code only.

    The wall-clock budget is enforced with SIGALRM when running on the main
    thread; elsewhere the budget is not enforceable in-process and runaway
    code will hang, which is why production traffic belongs on the runner.
    """

    def run(self, code: str, tests: Sequence[str], timeout_ms: int) -> ExecutionReport:
        start = time.monotonic()
        use_alarm = threading.current_thread() is threading.main_thread()
        try:
            if use_alarm:
                def _on_alarm(signum, frame):
                    raise _EvaluationTimeout()

                previous = signal.signal(signal.SIGALRM, _on_alarm)
                signal.setitimer(signal.ITIMER_REAL, timeout_ms / 1000.0)
            try:
                status, failed, trace = evaluate_in_namespace(code, tests)
            finally:
                if use_alarm:
                    signal.setitimer(signal.ITIMER_REAL, 0.0)
                    signal.signal(signal.SIGALRM, previous)
        except _EvaluationTimeout:
            # Catching outside the timer reset covers an alarm that fires in
            # the gap between evaluation returning and the reset.
            duration = int((time.monotonic() - start) * 1000)
            return ExecutionReport(
                status=TIMEOUT,
                stack_trace=f"TimeoutError: evaluation exceeded {timeout_ms} ms",
                duration_ms=duration,
            )
        duration = int((time.monotonic() - start) * 1000)
        return ExecutionReport(
            status=status, failed=tuple(failed), stack_trace=trace, duration_ms=duration
        )


def runner_command_from_env() -> tuple[str, ...]:
    """Runner launch command: $PATCHPAD_RUNNER if set, else `python -m padrunner`."""
    override = os.environ.get(RUNNER_ENV_VAR)
    if override:
        return tuple(shlex.split(override))
    return DEFAULT_RUNNER_COMMAND


class SubprocessExecutor:
    """Wire-protocol client owning one runner subprocess.

    Thread-safe: calls are serialized on a lock, matching the runner's
    single-threaded protocol loop. A crashed runner yields an other_error
    report and a fresh process is spawned for the next call; only failure to
    spawn at all raises RunnerUnavailable.
    """

    def __init__(self, command: Sequence[str] | None = None):
        self._command = tuple(command) if command else runner_command_from_env()
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _ensure_process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self._command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.DEVNULL,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                raise RunnerUnavailable(
                    f"cannot spawn runner {' '.join(self._command)!r}: {exc}"
                ) from exc
        return self._proc

    def run(self, code: str, tests: Sequence[str], timeout_ms: int) -> ExecutionReport:
        request = json.dumps(
            {"code": code, "tests": list(tests), "timeout_ms": timeout_ms}
        )
        with self._lock:
            proc = self._ensure_process()
            try:
                assert proc.stdin is not None and proc.stdout is not None
                proc.stdin.write(request + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (OSError, ValueError) as exc:
                self._reset()
                return _crash_report(f"runner pipe failure: {exc}")
            if not line:
                self._reset()
                return _crash_report("runner exited without responding")
            try:
                return ExecutionReport.from_payload(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                self._reset()
                return _crash_report(f"runner protocol violation: {exc}: {line!r}")

    def _reset(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
            except OSError:
                pass
            self._proc = None

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.stdin is not None:
                try:
                    self._proc.stdin.close()
                    self._proc.wait(timeout=2)
                except (OSError, subprocess.TimeoutExpired):
                    self._proc.kill()
            self._proc = None

    def __enter__(self) -> "SubprocessExecutor":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _crash_report(message: str) -> ExecutionReport:
    return ExecutionReport(status=OTHER_ERROR, stack_trace=message)


@dataclass
class ReplayExecutor:
    """Stub executor replaying recorded reports keyed by snippet text."""

    reports: dict[str, ExecutionReport] = field(default_factory=dict)

    def record(self, code: str, report: ExecutionReport) -> None:
        self.reports[code] = report

    def run(self, code: str, tests: Sequence[str], timeout_ms: int) -> ExecutionReport:
        try:
            return self.reports[code]
        except KeyError:
            raise LookupError(
                f"no recorded report for snippet ({len(code)} chars); "
                "replay covers only snippets seen at recording time"
            ) from None

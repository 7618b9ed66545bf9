"""Evaluation core: per-request child process, classification, protocol."""

from __future__ import annotations

import json
import multiprocessing
import os
import sys
import time
import traceback
import warnings

ALL_PASSED = "all_passed"
TEST_FAILED = "test_failed"
SYNTAX_ERROR = "syntax_error"
NAME_ERROR = "name_error"
WRONG_ARGS = "wrong_args"
OTHER_ERROR = "other_error"
TIMEOUT = "timeout"

_CODE_FILENAME = "<snippet>"
_TEST_FILENAME = "<test>"

_SYNTAX_NAMES = frozenset({"SyntaxError", "IndentationError", "TabError"})
_NAME_NAMES = frozenset({"NameError", "UnboundLocalError"})
_ARG_MESSAGE_MARKERS = ("positional argument", "keyword argument", "arguments but")

# Grace period for reaping a killed child, on top of the requested budget.
_KILL_GRACE_S = 0.05


def classify(exc_name: str, message: str = "") -> str:
    if exc_name in _SYNTAX_NAMES:
        return SYNTAX_ERROR
    if exc_name in _NAME_NAMES:
        return NAME_ERROR
    if exc_name == "AssertionError":
        return TEST_FAILED
    if exc_name == "TypeError" and any(m in message for m in _ARG_MESSAGE_MARKERS):
        return WRONG_ARGS
    return OTHER_ERROR


def _classify_exception(exc: BaseException) -> str:
    for klass in type(exc).__mro__:
        if klass.__name__ in _SYNTAX_NAMES or klass.__name__ in _NAME_NAMES:
            return classify(klass.__name__, str(exc))
    return classify(type(exc).__name__, str(exc))


def _trimmed_trace(exc: BaseException) -> str:
    te = traceback.TracebackException.from_exception(exc)
    te.stack = traceback.StackSummary.from_list(
        [f for f in te.stack if f.filename in (_CODE_FILENAME, _TEST_FILENAME)]
    )
    return "".join(te.format()).rstrip("\n")


def evaluate(code: str, tests: list[str]) -> dict:
    """Run code then tests in one fresh namespace; AssertionError marks the
    test failed and continues, any other exception halts with its class."""
    namespace: dict = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            exec(compile(code, _CODE_FILENAME, "exec"), namespace)
        except BaseException as exc:
            return {
                "status": _classify_exception(exc),
                "failed": [],
                "stack_trace": _trimmed_trace(exc),
            }
        failed: list[dict] = []
        for index, test in enumerate(tests, start=1):
            try:
                exec(compile(test, _TEST_FILENAME, "exec"), namespace)
            except AssertionError:
                failed.append({"index": index, "test": test})
            except BaseException as exc:
                return {
                    "status": _classify_exception(exc),
                    "failed": failed,
                    "stack_trace": _trimmed_trace(exc),
                }
    status = TEST_FAILED if failed else ALL_PASSED
    return {"status": status, "failed": failed, "stack_trace": ""}


def _child_main(conn, code: str, tests: list[str]) -> None:
    # The child owns no protocol I/O: stdin must not be consumed by snippets
    # and stray prints must not corrupt the response stream. Rebind both the
    # descriptors and the sys-level streams (the latter may wrap private
    # duplicates of the original descriptors).
    devnull = os.open(os.devnull, os.O_RDWR)
    os.dup2(devnull, 0)
    os.dup2(devnull, 1)
    os.dup2(devnull, 2)
    sys.stdin = open(os.devnull, "r", encoding="utf-8")
    sys.stdout = open(os.devnull, "w", encoding="utf-8")
    sys.stderr = open(os.devnull, "w", encoding="utf-8")
    try:
        payload = evaluate(code, tests)
    except BaseException as exc:  # defensive: evaluate should never raise
        payload = {
            "status": OTHER_ERROR,
            "failed": [],
            "stack_trace": f"runner child crashed: {exc!r}",
        }
    conn.send(payload)
    conn.close()


def run_request(code: str, tests: list[str], timeout_ms: int) -> dict:
    """Evaluate in a forked child, killing it at the wall-clock budget."""
    start = time.monotonic()
    ctx = multiprocessing.get_context("fork")
    parent_conn, child_conn = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_child_main, args=(child_conn, code, tests))
    proc.start()
    child_conn.close()

    payload = None
    timed_out = False
    if parent_conn.poll(timeout_ms / 1000.0):
        try:
            payload = parent_conn.recv()
        except (EOFError, OSError):
            payload = None
    else:
        timed_out = proc.is_alive()
    parent_conn.close()

    if proc.is_alive():
        proc.terminate()
        proc.join(_KILL_GRACE_S)
        if proc.is_alive():
            proc.kill()
    proc.join()

    duration_ms = int((time.monotonic() - start) * 1000)
    if payload is None:
        if timed_out:
            payload = {
                "status": TIMEOUT,
                "failed": [],
                "stack_trace": f"TimeoutError: evaluation exceeded {timeout_ms} ms",
            }
        else:
            payload = {
                "status": OTHER_ERROR,
                "failed": [],
                "stack_trace": "evaluation process died without reporting",
            }
    payload["duration_ms"] = duration_ms
    return payload


def _protocol_error(message: str) -> dict:
    return {
        "status": OTHER_ERROR,
        "failed": [],
        "stack_trace": f"protocol violation: {message}",
        "duration_ms": 0,
    }


def handle_line(line: str) -> dict:
    """One request line in, one response payload out; never raises."""
    try:
        message = json.loads(line)
    except ValueError as exc:
        return _protocol_error(f"invalid JSON: {exc}")
    if not isinstance(message, dict):
        return _protocol_error("request must be a JSON object")
    code = message.get("code")
    tests = message.get("tests")
    timeout_ms = message.get("timeout_ms")
    if not isinstance(code, str):
        return _protocol_error("'code' must be a string")
    if not isinstance(tests, list) or not tests or not all(isinstance(t, str) for t in tests):
        return _protocol_error("'tests' must be a nonempty list of strings")
    if not isinstance(timeout_ms, int) or isinstance(timeout_ms, bool) or timeout_ms <= 0:
        return _protocol_error("'timeout_ms' must be a positive integer")
    try:
        return run_request(code, tests, timeout_ms)
    except Exception as exc:  # the loop must survive anything
        return _protocol_error(f"runner failure: {exc!r}")

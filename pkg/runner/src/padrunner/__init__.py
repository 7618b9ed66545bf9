"""Sandboxed snippet runner.

Reads one JSON request per stdin line and answers one JSON response per
stdout line, in order:

    request  {"code": str, "tests": [str], "timeout_ms": int}
    response {"status": str, "failed": [{"index": int, "test": str}],
              "stack_trace": str, "duration_ms": int}

Each evaluation runs in a forked child with a fresh namespace, so hostile or
runaway snippets can be killed without disturbing the protocol loop.
"""

from padrunner.core import classify, evaluate, handle_line, run_request

__all__ = ["classify", "evaluate", "handle_line", "run_request"]

"""Protocol loop: line-delimited JSON on stdin/stdout, responses in order."""

import json
import sys

from padrunner.core import handle_line


def main() -> int:
    for line in sys.stdin:
        if not line.strip():
            continue
        response = handle_line(line)
        sys.stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())

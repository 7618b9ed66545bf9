"""Benchmark the compiled edit-distance kernel against the pure-Python fallback.

Run from the repository root:

    python3 benchmarks/bench_editdist.py

Times Levenshtein and Damerau-Levenshtein over synthetic snippet-scale text
pairs (the corpus-statistics workload) and prints per-backend throughput.
"""

import random
import time

from patchpad import _editdist_py

try:
    from patchpad import _speedups
except ImportError:
    _speedups = None

ALPHABET = "abcdefghijklmnopqrstuvwxyz_=+-() :.\n"


def synth_pairs(count: int, length: int, seed: int = 0) -> list[tuple[str, str]]:
    rng = random.Random(seed)
    pairs = []
    for _ in range(count):
        base = "".join(rng.choice(ALPHABET) for _ in range(length))
        # Perturb like a corruption pipeline would: edit a slice of the text.
        cut = rng.randrange(max(1, length - 30))
        mutated = base[:cut] + "".join(rng.choice(ALPHABET) for _ in range(20)) + base[cut + 20:]
        pairs.append((base, mutated))
    return pairs


def bench(func, pairs) -> tuple[float, int]:
    start = time.perf_counter()
    checksum = 0
    for a, b in pairs:
        checksum += func(a, b)
    return time.perf_counter() - start, checksum


def main() -> None:
    backends = [("pure", _editdist_py)]
    if _speedups is not None:
        backends.append(("compiled", _speedups))
    else:
        print("compiled kernel not built; benchmarking the fallback only\n")

    for count, length in ((2000, 120), (400, 400)):
        pairs = synth_pairs(count, length)
        print(f"{count} pairs of ~{length} chars")
        print(f"{'backend':<10} {'function':<22} {'seconds':>9} {'pairs/s':>10}")
        baselines = {}
        for name, module in backends:
            for func_name in ("levenshtein", "damerau_levenshtein"):
                elapsed, checksum = bench(getattr(module, func_name), pairs)
                baselines.setdefault(func_name, (elapsed, checksum))
                base_elapsed, base_checksum = baselines[func_name]
                assert checksum == base_checksum, "backends disagree"
                speedup = f"  ({base_elapsed / elapsed:.1f}x vs pure)" if name == "compiled" else ""
                print(f"{name:<10} {func_name:<22} {elapsed:>9.3f} {count / elapsed:>10.0f}{speedup}")
        print()


if __name__ == "__main__":
    main()

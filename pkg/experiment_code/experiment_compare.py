"""
Script to compare two experiment result files, e.g. before and after a change.

Both files must come from the same experiment script (recovery or kernel).

Usage:
    python experiment_compare.py base_results.json new_results.json [--save-comparison]
"""

import argparse
import json
import sys
from datetime import datetime


def load_results(filepath):
    """Load experiment results from JSON file."""
    try:
        with open(filepath) as f:
            return json.load(f)
    except FileNotFoundError:
        print(f"Error: File '{filepath}' not found.")
        return None
    except json.JSONDecodeError:
        print(f"Error: Invalid JSON in file '{filepath}'.")
        return None


def _ratio(base, new):
    if not base or not new:
        return "N/A"
    speedup = base / new
    return f"{speedup:.2f}x" if speedup >= 1 else f"1/{new / base:.2f}x"


def _hash_match(base, new):
    if not base or not new:
        return "N/A"
    return "✓" if base == new else "✗"


def compare_recovery(base, new):
    print(f"\n{'=' * 108}")
    print("RECOVERY COMPARISON: base vs new")
    print(f"{'=' * 108}")
    print(
        f"{'Seed':<8}{'Stage':<14}{'Base (s)':<12}{'New (s)':<12}{'Speedup':<12}"
        f"{'Base PSNR':<12}{'New PSNR':<12}{'Delta (dB)':<12}{'Hash Match':<12}"
    )
    print("-" * 108)
    for seed in sorted(set(base["runs"]) | set(new["runs"]), key=int):
        b, n = base["runs"].get(seed), new["runs"].get(seed)
        if b is None or n is None:
            print(f"{seed:<8}{'FAILED':<14}")
            print("-" * 108)
            continue
        stages = [
            ("synthesize", b["stage1_time"], n["stage1_time"]),
            ("train", b["stage2_time"], n["stage2_time"]),
            ("render", b["stage3_time"], n["stage3_time"]),
            ("total", b["execution_time"], n["execution_time"]),
        ]
        for i, (label, b_time, n_time) in enumerate(stages):
            first = i == 0
            print(
                f"{seed if first else '':<8}{label:<14}{b_time:<12.2f}{n_time:<12.2f}"
                f"{_ratio(b_time, n_time):<12}"
                + (
                    f"{b['psnr']:<12.2f}{n['psnr']:<12.2f}{n['psnr'] - b['psnr']:<12.2f}"
                    f"{_hash_match(b['checkpoint_hash'], n['checkpoint_hash']):<12}"
                    if first
                    else ""
                )
            )
        print("-" * 108)


def compare_kernel(base, new):
    print(f"\n{'=' * 60}")
    print("KERNEL SMOOTHNESS COMPARISON: base vs new")
    print(f"{'=' * 60}")
    print(f"{'Kernel':<10}{'Base TV':<14}{'New TV':<14}{'Change':<12}")
    print("-" * 60)
    for kernel in sorted(set(base["mean_tv"]) | set(new["mean_tv"]), key=int):
        b, n = base["mean_tv"].get(kernel), new["mean_tv"].get(kernel)
        if b is None or n is None:
            print(f"{kernel:<10}{'MISSING':<14}")
            continue
        change = f"{(n - b) / b * 100:+.1f}%" if b else "N/A"
        print(f"{kernel:<10}{b:<14.6f}{n:<14.6f}{change:<12}")
    print("-" * 60)
    print(f"Decreasing trend: base {base['decreasing']}, new {new['decreasing']}")


COMPARATORS = {"recovery": compare_recovery, "kernel": compare_kernel}


def main():
    parser = argparse.ArgumentParser(description="Compare two experiment result files")
    parser.add_argument("base_file", help="results JSON of the reference run")
    parser.add_argument("new_file", help="results JSON of the run to compare")
    parser.add_argument(
        "--save-comparison", action="store_true", help="also write the tables to a file"
    )
    args = parser.parse_args()

    base = load_results(args.base_file)
    new = load_results(args.new_file)
    if base is None or new is None:
        sys.exit(1)

    experiment = base["metadata"]["experiment"]
    if new["metadata"]["experiment"] != experiment:
        print("Error: the two files come from different experiments.")
        sys.exit(1)

    print(f"Base: {args.base_file} ({base['metadata']['timestamp']})")
    print(f"New:  {args.new_file} ({new['metadata']['timestamp']})")

    if args.save_comparison:
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        filename = f"{experiment}_comparison_{timestamp}.txt"
        original_stdout = sys.stdout
        with open(filename, "w") as f:
            sys.stdout = f
            COMPARATORS[experiment](base, new)
        sys.stdout = original_stdout
        print(f"Comparison saved to: {filename}")

    COMPARATORS[experiment](base, new)


if __name__ == "__main__":
    main()

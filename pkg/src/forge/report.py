"""Bundle run reports: a CSV of per-seed runs plus rendered figures.

write_report runs a bundle once per scheduler seed, writes the results
as delimited text, and renders two PNG figures next to it: executed
device instructions against seed, and bundle entry payload sizes.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bundler import Bundle
from .host import RunOptions, run_bundle

CSV_NAME = "runs.csv"
INSTRUCTIONS_FIGURE = "instructions.png"
SIZES_FIGURE = "entry-sizes.png"


def write_report(data: bytes, out_dir: str | Path, *, seeds: int = 8,
                 grid: tuple[int, int] | None = None,
                 device: str = "vgpu") -> list[Path]:
    """Run `data` under each seed in range(seeds); write CSV and figures.

    Returns the written paths: CSV first, then the figures.
    """
    if seeds < 1:
        raise ValueError("seeds must be at least 1")
    parsed = Bundle.from_bytes(data)

    rows: list[dict[str, object]] = []
    for seed in range(seeds):
        opts = RunOptions(device=device, grid=grid, sched_seed=seed)
        result = run_bundle(data, opts)
        rows.append({
            "seed": seed,
            "exit_status": result.exit_status,
            "offloads": len(result.offloads),
            "fallbacks": sum(1 for _, status in result.offloads if status == 1),
            "instructions": sum(n for _, n in result.device_instructions),
            "stdout_bytes": len(result.stdout.encode("utf-8")),
        })

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    csv_path = out / CSV_NAME
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

    instr_path = out / INSTRUCTIONS_FIGURE
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    ax.plot([r["seed"] for r in rows], [r["instructions"] for r in rows],
            marker="o")
    ax.set_xlabel("scheduler seed")
    ax.set_ylabel("device instructions")
    ax.set_title("Executed device instructions by seed")
    fig.tight_layout()
    fig.savefig(instr_path)
    plt.close(fig)

    sizes_path = out / SIZES_FIGURE
    names = [name for name, _ in parsed.entries]
    sizes = [len(payload) for _, payload in parsed.entries]
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    ax.bar(range(len(names)), sizes)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("payload bytes")
    ax.set_title("Bundle entry sizes")
    fig.tight_layout()
    fig.savefig(sizes_path)
    plt.close(fig)

    return [csv_path, instr_path, sizes_path]

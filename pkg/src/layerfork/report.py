"""Render trade-off reports as delimited text plus matplotlib figures."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def write_tradeoff_tsv(rows, path):
    task_ids = sorted(rows[0].selections) if rows else []
    with open(path, "w", encoding="utf-8") as fh:
        header = ["c"] + task_ids + ["avg_score", "layers", "overhead_pct"]
        fh.write("\t".join(header) + "\n")
        for row in rows:
            cells = [f"{row.c:g}"]
            for t in task_ids:
                f, n, _ = row.selections[t]
                cells.append(f"({f}, {n})")
            cells += [f"{row.average_score:.1f}", str(row.overhead.layers),
                      f"{row.overhead.percent:.1f}"]
            fh.write("\t".join(cells) + "\n")


def plot_tradeoff(rows, path):
    """Overhead vs. average score, one point per threshold c."""
    fig, ax = plt.subplots(figsize=(5, 4))
    xs = [row.overhead.percent for row in rows]
    ys = [row.average_score for row in rows]
    ax.plot(xs, ys, "o-")
    for row, x, y in zip(rows, xs, ys):
        ax.annotate(f"c={row.c:g}", (x, y), textcoords="offset points",
                    xytext=(6, 4), fontsize=8)
    ax.set_xlabel("overhead (% of full fine-tuning layers)")
    ax.set_ylabel("average dev score")
    ax.set_title("Performance-efficiency trade-off")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(rows, out_dir, stem="tradeoff"):
    os.makedirs(out_dir, exist_ok=True)
    tsv = os.path.join(out_dir, f"{stem}.tsv")
    png = os.path.join(out_dir, f"{stem}.png")
    write_tradeoff_tsv(rows, tsv)
    plot_tradeoff(rows, png)
    return tsv, png

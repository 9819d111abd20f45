"""Figure rendering for the bench report.

Kept separate so the hot batch path never imports matplotlib.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_throughput_figure(rows: list[dict], path: str) -> str:
    """Horizontal bar chart of books/second per recipe, saved to ``path``."""
    names = [str(row["recipe"]) for row in rows]
    rates = [float(row["books_per_second"]) for row in rows]

    fig, ax = plt.subplots(figsize=(8.0, 0.5 * max(len(rows), 1) + 1.8))
    positions = range(len(rows))
    ax.barh(positions, rates, color="#31688e", height=0.6)
    ax.set_yticks(list(positions), names)
    ax.invert_yaxis()
    ax.set_xlabel("books per second")
    ax.set_title("Book production throughput")
    for position, rate in zip(positions, rates):
        ax.annotate(
            f"{rate:,.1f}",
            xy=(rate, position),
            xytext=(4, 0),
            textcoords="offset points",
            va="center",
            fontsize=9,
        )
    ax.margins(x=0.12)
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

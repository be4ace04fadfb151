"""
Static SVG figures, each written next to a CSV file holding exactly the
plotted data.
"""
import csv
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

# stable element ids so identical runs produce identical files
matplotlib.rcParams["svg.hashsalt"] = "reeblab"


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_csv(path: str, header: Sequence[str], columns: Sequence[Sequence[float]]) -> str:
    """RFC-4180 CSV, one column per header entry, 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(list(header))
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])
    return path


class FigureWriter:
    """Builds one figure at a time and saves it as ``<stem>.svg`` plus ``<stem>.csv``."""

    def __init__(self, out_dir: str, figsize: Tuple[int, int] = (8, 5)):
        self.out_dir = out_dir
        self.figsize = figsize
        self.written: List[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def _create_figure(self, caption: Optional[str] = None):
        """
        Figure with a main axis, plus a thin caption strip when ``caption`` is given.

        Returns:
            Tuple of (figure, main_ax)
        """
        fig = plt.figure(figsize=self.figsize)
        if caption:
            gs = fig.add_gridspec(5, 1)
            ax = fig.add_subplot(gs[:4, 0])
            cap = fig.add_subplot(gs[4, 0])
            cap.axis("off")
            cap.text(0.01, 0.3, caption, fontsize=10, family="monospace")
        else:
            ax = fig.add_subplot(111)
        return fig, ax

    def _save(self, fig, stem: str, header, columns) -> Dict[str, str]:
        svg = os.path.join(self.out_dir, f"{stem}.svg")
        fig.savefig(svg, format="svg", bbox_inches="tight", metadata={"Date": None})
        plt.close(fig)
        data = write_csv(os.path.join(self.out_dir, f"{stem}.csv"), header, columns)
        self.written += [svg, data]
        logger.debug("wrote %s and %s", svg, data)
        return {"svg": svg, "csv": data}

    def series(self, stem: str, t: np.ndarray, values: Dict[str, np.ndarray], title: str = "",
               xlabel: str = "t", caption: Optional[str] = None) -> Dict[str, str]:
        """Coordinate(s) against time, e.g. r(t) along a Reeb trajectory."""
        fig, ax = self._create_figure(caption)
        for label, ys in values.items():
            ax.plot(t, ys, label=label, linewidth=1.2)
        ax.set_xlabel(xlabel)
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        if len(values) > 1:
            ax.legend()
        return self._save(fig, stem, [xlabel, *values], [t, *values.values()])

    def projection(self, stem: str, xs: np.ndarray, ys: np.ndarray, labels: Tuple[str, str], title: str = "",
                   caption: Optional[str] = None) -> Dict[str, str]:
        """Planar projection of a trajectory or closed orbit."""
        fig, ax = self._create_figure(caption)
        ax.plot(xs, ys, linewidth=1.0)
        ax.plot(xs[:1], ys[:1], "o", markersize=4)
        ax.set_xlabel(labels[0])
        ax.set_ylabel(labels[1])
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        return self._save(fig, stem, list(labels), [xs, ys])

    def margins(self, stem: str, names: Sequence[str], margins: Sequence[float], eps: Sequence[float],
                title: str = "certificate margins") -> Dict[str, str]:
        """Bar chart of certificate margins against their thresholds (symlog scale)."""
        fig, ax = self._create_figure()
        idx = np.arange(len(names), dtype=float)
        ax.bar(idx, margins, color=["tab:green" if m >= e else "tab:red" for m, e in zip(margins, eps)])
        ax.scatter(idx, eps, marker="_", color="black", s=200, zorder=3)
        ax.set_xticks(idx)
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
        ax.set_yscale("symlog", linthresh=1e-12)
        ax.set_title(title)
        return self._save(fig, stem, ["index", "margin", "eps"], [idx, margins, eps])

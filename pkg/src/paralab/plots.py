"""Figure rendering for report plot data.

Reads the CSV tables emitted next to a report and writes one PNG per table:
decay fits as scatter plus fitted line, ratio histograms as bars, and
refinement curves on log axes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read_csv(path: Path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = np.array([[float(v) for v in row] for row in body]) if body else \
        np.zeros((0, len(header)))
    return header, cols


def _render_fit(path: Path, out: Path) -> None:
    header, cols = _read_csv(path)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    if cols.shape[0] >= 2:
        x, y = cols[:, 0], cols[:, 1]
        ax.plot(x, y, "o", ms=4, label="measured")
        slope, intercept = np.polyfit(x, y, 1)
        ax.plot(x, slope * x + intercept, "-",
                label=f"fit slope {slope:.2f}")
        ax.legend(fontsize=8)
    ax.set_xlabel(header[0])
    ax.set_ylabel(header[1])
    fig.tight_layout()
    fig.savefig(out, dpi=130)
    plt.close(fig)


def _render_hist(path: Path, out: Path) -> None:
    header, cols = _read_csv(path)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    if cols.shape[0]:
        left, right, count = cols[:, 0], cols[:, 1], cols[:, 2]
        ax.bar(left, count, width=right - left, align="edge",
               edgecolor="black", linewidth=0.4)
    ax.set_xlabel("value")
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(out, dpi=130)
    plt.close(fig)


def _render_curve(path: Path, out: Path) -> None:
    header, cols = _read_csv(path)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    if cols.shape[0]:
        x, y = cols[:, 0], cols[:, 1]
        ax.plot(x, y, "o-")
        if np.all(y > 0) and y.max() / max(y.min(), 1e-300) > 50:
            ax.set_yscale("log")
    ax.set_xlabel(header[0])
    ax.set_ylabel(header[1])
    fig.tight_layout()
    fig.savefig(out, dpi=130)
    plt.close(fig)


_RENDERERS = {"fit": _render_fit, "hist": _render_hist, "curve": _render_curve}


def render_report(report_dir) -> list[str]:
    """Render every manifest entry in ``<report_dir>/plots`` to a PNG."""
    plots = Path(report_dir) / "plots"
    manifest_path = plots / "manifest.json"
    if not manifest_path.exists():
        return []
    manifest = json.loads(manifest_path.read_text())
    written = []
    for entry in manifest.get("entries", []):
        csv_path = plots / entry["csv"]
        png_path = csv_path.with_suffix(".png")
        renderer = _RENDERERS.get(entry["kind"])
        if renderer is None or not csv_path.exists():
            continue
        renderer(csv_path, png_path)
        entry["png"] = png_path.name
        written.append(str(png_path))
    manifest_path.write_text(json.dumps(manifest, sort_keys=True,
                                        separators=(",", ":")))
    return written

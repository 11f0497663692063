"""Result files: the per-trial CSV, signal/curve CSVs and small SVG plots.

Floats are written in their shortest round-trip form (``repr``), so every
value read back is bit-identical to the one computed.
"""
from __future__ import annotations

import csv
import threading
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "RESULT_COLUMNS",
    "ResultWriter",
    "write_signal",
    "read_signal",
    "write_curve",
    "svg_lines",
    "svg_heatmap",
]

RESULT_COLUMNS = (
    "experiment_id", "seed", "solver", "snr_target_db", "snr_achieved_db", "lambda",
    "iterations", "converged", "shift", "relative_error", "wall_ms",
)


def _num(v) -> str:
    return repr(float(v))


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _num(value)
    return str(value)


class ResultWriter:
    """Streams rows to ``<path>.partial`` as trials finish; :meth:`close`
    writes the final file sorted by ``(seed, solver)`` and removes the partial."""

    def __init__(self, path):
        self.path = Path(path)
        self.partial = self.path.with_name(self.path.name + ".partial")
        self.rows: list[dict] = []
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.partial.open("w", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(RESULT_COLUMNS)
        self._fh.flush()

    def write(self, row: dict):
        missing = set(RESULT_COLUMNS) - set(row)
        if missing:
            raise KeyError(f"result row missing {sorted(missing)}")
        with self._lock:
            self.rows.append(row)
            self._csv.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
            self._fh.flush()

    def close(self) -> Path:
        with self._lock:
            self._fh.close()
            rows = sorted(self.rows, key=lambda r: (r["seed"], r["solver"]))
            with self.path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(RESULT_COLUMNS)
                for r in rows:
                    w.writerow([_fmt(r[c]) for c in RESULT_COLUMNS])
            self.partial.unlink()
        return self.path

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if not self._fh.closed:
            self.close()


def write_signal(path, x):
    """1D: ``index,value`` rows. 2D: the image as a headerless CSV grid."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        lines = ["index,value"] + [f"{i},{_num(v)}" for i, v in enumerate(x)]
    elif x.ndim == 2:
        lines = [",".join(map(_num, row)) for row in x]
    else:
        raise ValueError(f"cannot write a {x.ndim}-d signal")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_signal(path) -> np.ndarray:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
    if first.startswith("index"):
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)[:, 1]
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_curve(path, xs, ys, names=("lambda", "relative_error")):
    """Paired-column CSV of one curve."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(names)] + [f"{_num(a)},{_num(b)}" for a, b in zip(xs, ys)]
    path.write_text("\n".join(lines) + "\n")
    return path


_PALETTE = ("#000000", "#9e9e9e", "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e")


def svg_lines(path, curves: dict, title: str = "", size=(640, 320), log_y: bool = False):
    """Polyline plot of ``{label: y}`` against the sample index."""
    W, H = size
    pad = 40
    ys = [np.asarray(v, dtype=float) for v in curves.values()]
    if log_y:
        ys = [np.log10(np.maximum(np.abs(y), 1e-16)) for y in ys]
    lo = min(float(y.min()) for y in ys)
    hi = max(float(y.max()) for y in ys)
    if hi == lo:
        hi = lo + 1.0
    n = max(y.size for y in ys)

    def px(i):
        return pad + (W - 2 * pad) * i / max(n - 1, 1)

    def py(v):
        return H - pad - (H - 2 * pad) * (v - lo) / (hi - lo)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" fill="none" stroke="#ccc"/>']
    if title:
        parts.append(f'<text x="{W / 2}" y="{pad / 2}" text-anchor="middle" font-size="13">{title}</text>')
    for k, (label, y) in enumerate(zip(curves, ys)):
        colour = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(y))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{pts}"/>')
        parts.append(f'<text x="{W - pad + 4}" y="{pad + 14 * (k + 1)}" font-size="10" fill="{colour}">{label}</text>')
    parts.append(f'<text x="4" y="{pad}" font-size="10">{hi:.3g}</text>')
    parts.append(f'<text x="4" y="{H - pad}" font-size="10">{lo:.3g}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
    return Path(path)


def svg_heatmap(path, image, title: str = "", cell: int = 4, vmin: Optional[float] = None,
                vmax: Optional[float] = None):
    """Greyscale heatmap, one rect per pixel."""
    img = np.asarray(image, dtype=float)
    lo = float(img.min()) if vmin is None else vmin
    hi = float(img.max()) if vmax is None else vmax
    scale = (hi - lo) or 1.0
    rows, cols = img.shape
    top = 20 if title else 0
    W, H = cols * cell, rows * cell + top
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>']
    if title:
        parts.append(f'<text x="{W / 2}" y="14" text-anchor="middle" font-size="12">{title}</text>')
    g = np.clip((img - lo) / scale, 0.0, 1.0)
    for i in range(rows):
        for j in range(cols):
            v = int(round(255 * g[i, j]))
            parts.append(f'<rect x="{j * cell}" y="{top + i * cell}" width="{cell}" height="{cell}" '
                         f'fill="rgb({v},{v},{v})"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
    return Path(path)

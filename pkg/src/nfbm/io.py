"""CSV tables and minimal SVG line plots."""

import csv
import os
from pathlib import Path

import numpy as np

OUTPUT_DIR_ENV = "NFBM_OUTPUT_DIR"


def output_dir():
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def fmt(x):
    """Shortest decimal that round-trips to the same double."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, columns):
    """Write equal-length ``columns`` under ``header``."""
    columns = [np.asarray(c).ravel() for c in columns]
    n = columns[0].size
    if any(c.size != n for c in columns):
        raise ValueError("CSV columns must have equal length")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    """Columns of a headed numeric CSV as a dict of float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    try:
        data = np.array(body, dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: malformed numeric CSV ({exc})") from exc
    return {name: data[:, k] for k, name in enumerate(header)}


def _nice_ticks(lo, hi, count=5):
    if hi <= lo:
        return np.array([lo])
    raw = (hi - lo) / count
    mag = 10 ** np.floor(np.log10(raw))
    step = mag * min((s for s in (1, 2, 5, 10) if s * mag >= raw), default=10)
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + step * 1e-9, step)


def svg_line_plot(x, y, title="", width=800, height=400):
    """A single polyline with labelled axis ticks, as an SVG string."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    left, right, top, bottom = 70, 20, 30, 40
    pw, ph = width - left - right, height - top - bottom
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(y.min()), float(y.max())
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    if x1 == x0:
        x1 = x0 + 1.0

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (y1 - v) / (y1 - y0) * ph

    pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for v in _nice_ticks(x0, x1):
        X = px(v)
        parts.append(f'<line x1="{X:.2f}" y1="{top + ph}" x2="{X:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        parts.append(
            f'<text x="{X:.2f}" y="{top + ph + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{v:g}</text>'
        )
    for v in _nice_ticks(y0, y1):
        Y = py(v)
        parts.append(f'<line x1="{left - 5}" y1="{Y:.2f}" x2="{left}" y2="{Y:.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{left - 8}" y="{Y + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.3g}</text>'
        )
    parts.append(f'<polyline fill="none" stroke="#1f4e9c" stroke-width="1" points="{pts}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, x, y, title=""):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg_line_plot(x, y, title))
    return path

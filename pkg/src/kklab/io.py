"""Flat-file output: CSV tables with a provenance comment line, standalone SVG line plots.

All writes go to a temporary file in the target directory followed by ``os.replace``.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_meta(meta: dict) -> str:
    return "# " + " ".join(f"{k}={_cell(v)}" for k, v in meta.items())


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], meta: dict) -> Path:
    """``meta`` must contain ``config_hash``; it is written first on the comment line."""
    if "config_hash" not in meta:
        raise ValueError("CSV metadata needs a config_hash entry")
    meta = {"config_hash": meta["config_hash"], **{k: v for k, v in meta.items() if k != "config_hash"}}
    buf = io.StringIO()
    buf.write(format_meta(meta) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        w.writerow([_cell(v) for v in row])
    return atomic_write(path, buf.getvalue())


def read_csv(path):
    """Return ``(meta, header, columns)`` where ``columns`` maps names to float arrays."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        meta = {}
        if first.startswith("#"):
            for item in first[1:].split():
                k, _, v = item.partition("=")
                meta[k] = v
        else:
            fh.seek(0)
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        vals = []
        for r in body:
            try:
                vals.append(float(r[j]))
            except ValueError:
                vals.append(math.nan)
        cols[name] = np.array(vals)
    return meta, header, cols


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def svg_line_plot(path, series, xlabel: str = "", ylabel: str = "", title: str = "",
                  logx: bool = False, logy: bool = False, width: int = 640, height: int = 420) -> Path:
    """Write an SVG with one polyline per ``(label, xs, ys)`` entry."""
    ml, mr, mt, mb = 70, 20, 36, 50
    pw, ph = width - ml - mr, height - mt - mb
    fx = np.log10 if logx else (lambda v: np.asarray(v, dtype=float))
    fy = np.log10 if logy else (lambda v: np.asarray(v, dtype=float))
    prepared = []
    for label, xs, ys in series:
        xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        ok = np.isfinite(xs) & np.isfinite(ys)
        if logx:
            ok &= xs > 0
        if logy:
            ok &= ys > 0
        if np.any(ok):
            prepared.append((label, fx(xs[ok]), fy(ys[ok])))
    if prepared:
        allx = np.concatenate([p[1] for p in prepared])
        ally = np.concatenate([p[2] for p in prepared])
        x0, x1, y0, y1 = allx.min(), allx.max(), ally.min(), ally.max()
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    if title:
        out.append(f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for v in _ticks(x0, x1):
        lab = f"1e{v:.2g}" if logx else f"{v:.4g}"
        out.append(f'<line x1="{px(v):.2f}" y1="{mt + ph}" x2="{px(v):.2f}" y2="{mt + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(v):.2f}" y="{mt + ph + 18}" text-anchor="middle">{lab}</text>')
    for v in _ticks(y0, y1):
        lab = f"1e{v:.2g}" if logy else f"{v:.4g}"
        out.append(f'<line x1="{ml - 5}" y1="{py(v):.2f}" x2="{ml}" y2="{py(v):.2f}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{py(v) + 4:.2f}" text-anchor="end">{lab}</text>')
    if xlabel:
        out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {mt + ph / 2})">{escape(ylabel)}</text>')
    for i, (label, xs, ys) in enumerate(prepared):
        colour = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{ml + pw - 110}" y1="{ly - 4}" x2="{ml + pw - 90}" y2="{ly - 4}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw - 85}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    return atomic_write(path, "\n".join(out) + "\n")

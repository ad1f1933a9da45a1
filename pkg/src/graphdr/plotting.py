"""Deterministic SVG output: embedding scatter plots and metric line plots.

Numbers are written with fixed precision and no timestamps or ids, so equal
inputs give equal bytes.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ContractError

__all__ = ["PALETTE", "embedding_svg", "export_embedding_plot", "line_plot_svg"]

# the ten "category10" colours
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _scale(values: np.ndarray, lo: float, hi: float, pad: float):
    vmin, vmax = float(values.min()), float(values.max())
    span = vmax - vmin
    if span == 0.0:
        vmin, span = vmin - 0.5, 1.0
    return lo + pad + (values - vmin) / span * (hi - lo - 2 * pad)


def embedding_svg(emb, labels=None, size: int = 400, radius: float = 3.0, title: str = "") -> str:
    emb = np.asarray(emb, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[1] != 2:
        raise ContractError(f"scatter plots need a 2-D embedding, got shape {emb.shape}")
    if not np.all(np.isfinite(emb)):
        raise ContractError("embedding contains non-finite values")
    n = emb.shape[0]
    labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ContractError("labels must have one entry per point")
    xs = _scale(emb[:, 0], 0.0, size, 10.0)
    # SVG y grows downwards
    ys = size - _scale(emb[:, 1], 0.0, size, 10.0)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<title>{title}</title>')
    for x, y, lab in zip(xs, ys, labels):
        out.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{radius:.1f}" fill="{PALETTE[lab % len(PALETTE)]}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_embedding_plot(emb, labels, path, size: int = 400) -> Path:
    """Write a scatter plot of a 2-D embedding (array or EmbeddingResult), one colour per class."""
    values = getattr(emb, "embedding", emb)
    text = embedding_svg(values, labels, size=size)
    path = Path(path)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def line_plot_svg(x, series: dict, path=None, width: int = 480, height: int = 320,
                  logx: bool = False, logy: bool = False, xlabel: str = "", ylabel: str = "") -> str:
    """Polyline plot of one or more named series over a shared x axis."""
    x = np.asarray(x, dtype=np.float64)
    tx = np.log10(x) if logx else x
    ys = {k: np.asarray(v, dtype=np.float64) for k, v in series.items()}
    allv = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    if logy:
        allv = np.log10(allv[allv > 0]) if np.any(allv > 0) else np.zeros(1)
    lo, hi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    px = _scale(tx, 0.0, width, 40.0)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.1f}" y="{height - 8}" font-size="12" text-anchor="middle">{xlabel}</text>',
        f'<text x="12" y="{height / 2:.1f}" font-size="12" transform="rotate(-90 12 {height / 2:.1f})" '
        f'text-anchor="middle">{ylabel}</text>',
    ]
    for idx, (name, v) in enumerate(ys.items()):
        tv = np.log10(np.where(v > 0, v, np.nan)) if logy else v
        py = height - (40.0 + (tv - lo) / (hi - lo) * (height - 80.0))
        pts = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(px, py) if np.isfinite(b))
        colour = PALETTE[idx % len(PALETTE)]
        out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{width - 120}" y="{20 + 14 * idx}" font-size="11" fill="{colour}">{name}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    return text

"""Artifact files: CSV tables and SVG line charts, each opening with a version line
and the full run configuration as JSON."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

ARTIFACT_VERSION = "flowfill-artifact 1"


def header_lines(config: dict, kind: str) -> list[str]:
    return [f"{ARTIFACT_VERSION} {kind}", "config " + json.dumps(config, sort_keys=True)]


def read_config_echo(path) -> dict:
    """Recover the configuration echoed at the top of any artifact this package writes."""
    with open(path, "rb") as f:
        head = f.read(1 << 20)
    if head.startswith(b"FLOWFILL-CKPT"):
        from .network import read_checkpoint

        meta, _ = read_checkpoint(path)
        return meta["run_config"]
    text = head.decode("utf-8", errors="replace")
    for line in text.splitlines()[:4]:
        line = line.lstrip("#<!- ").rstrip("-> ")
        if line.startswith("config "):
            return json.loads(line[len("config ") :])
        if line.startswith("{"):
            obj = json.loads(line)
            if "config" in obj:
                return obj["config"]
    raise ValueError(f"{path}: no configuration echo found")


def write_csv(path, rows: Sequence[Mapping], columns: Sequence[str], config: dict, kind: str) -> Path:
    buf = io.StringIO()
    for line in header_lines(config, kind):
        buf.write("# " + line + "\n")
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="raise")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    path = Path(path)
    path.write_text(buf.getvalue())
    return path


def read_csv(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def svg_line_chart(
    series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
    title: str,
    xlabel: str,
    ylabel: str,
    config: dict,
    kind: str,
    width: int = 640,
    height: int = 400,
) -> str:
    """A self-contained SVG with one polyline per series."""
    pad_l, pad_r, pad_t, pad_b = 64, 120, 36, 48
    xs = [float(x) for xy in series.values() for x in xy[0]]
    ys = [float(y) for xy in series.values() for y in xy[1]]
    if not xs:
        raise ValueError("nothing to plot")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(x):
        return pad_l + (float(x) - x0) / (x1 - x0) * pw

    def sy(y):
        return pad_t + (1.0 - (float(y) - y0) / (y1 - y0)) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    out += [f"<!-- {escape(line)} -->" for line in header_lines(config, kind)]
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">')
    out.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<line x1="{pad_l}" y1="{pad_t + ph}" x2="{pad_l + pw}" y2="{pad_t + ph}" stroke="black"/>')
    out.append(f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + ph}" stroke="black"/>')
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        out.append(f'<text x="{sx(xv):.1f}" y="{pad_t + ph + 16}" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{pad_l - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
    out.append(f'<text x="{pad_l + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{pad_t + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 14 {pad_t + ph / 2:.1f})">{escape(ylabel)}</text>')
    for k, (name, (sx_vals, sy_vals)) in enumerate(series.items()):
        color = colors[k % len(colors)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(sx_vals, sy_vals))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = pad_t + 16 * k + 8
        out.append(f'<line x1="{pad_l + pw + 10}" y1="{ly}" x2="{pad_l + pw + 28}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{pad_l + pw + 32}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, *args, **kwargs) -> Path:
    path = Path(path)
    path.write_text(svg_line_chart(*args, **kwargs))
    return path

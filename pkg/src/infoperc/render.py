"""Static SVG pictures of space-time clusters: vertices across, time upward."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import quoteattr

from .errors import LayoutError, ParseError
from .histories import SpaceTimeCluster, union_segments

COLORS = {"red": "#d62728", "blue": "#1f77b4", "green": "#2ca02c", "": "#7f7f7f"}


@dataclass(frozen=True)
class ClusterDump:
    """What the renderer needs: classes, members and per-vertex segments of each cluster."""

    n: int
    t_star: float
    clusters: tuple[tuple[int, str, tuple[int, ...]], ...]
    segments: tuple[tuple[int, int, float, float], ...]

    @classmethod
    def from_clusters(cls, n: int, t_star: float, clusters: Sequence[SpaceTimeCluster]) -> "ClusterDump":
        rows, segs = [], []
        for c in clusters:
            rows.append((c.cluster_id, c.classification or "", c.members))
            for w, iv in union_segments(c.traces).items():
                for a, b in iv:
                    segs.append((c.cluster_id, w, a, b))
        return cls(n, float(t_star), tuple(rows), tuple(segs))


SEGMENT_FIELDS = ("cluster_id", "vertex", "t_begin", "t_end")


def segment_rows(dump: ClusterDump):
    for cid, w, a, b in dump.segments:
        yield cid, w, repr(float(a)), repr(float(b))


def load_dump(directory: str | Path, n: int | None = None, t_star: float | None = None) -> ClusterDump:
    """Read ``clusters.csv`` and ``segments.csv`` written by the clusters experiment."""
    directory = Path(directory)
    clusters = []
    try:
        with open(directory / "clusters.csv", newline="") as fh:
            for i, row in enumerate(csv.DictReader(fh), start=2):
                members = tuple(int(v) for v in row["members"].split())
                clusters.append((int(row["cluster_id"]), row["class"], members))
        segs = []
        with open(directory / "segments.csv", newline="") as fh:
            for i, row in enumerate(csv.DictReader(fh), start=2):
                segs.append((int(row["cluster_id"]), int(row["vertex"]),
                             float(row["t_begin"]), float(row["t_end"])))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed cluster dump: {exc}") from None
    if n is None:
        n = 1 + max([v for _, _, m in clusters for v in m] + [w for _, w, _, _ in segs], default=-1)
    if t_star is None:
        t_star = max((b for *_, b in segs), default=1.0)
    return ClusterDump(int(n), float(t_star), tuple(clusters), tuple(segs))


def parse_layout(layout: str) -> tuple[str, int | None]:
    if layout == "linear":
        return "linear", None
    m = re.fullmatch(r"grid[(:](\d+)\)?", layout.strip())
    if not m:
        raise LayoutError(f"unknown layout {layout!r}; use 'linear' or 'grid(side)'")
    return "grid", int(m.group(1))


def _x_positions(n: int, layout: str) -> list[float]:
    kind, side = parse_layout(layout)
    if kind == "linear":
        return [float(v) for v in range(n)]
    if side * side != n:
        raise LayoutError(f"grid({side}) needs n = {side * side} vertices, graph has {n}")
    # rows of the grid are laid side by side, separated by one empty column
    return [float((v // side) * (side + 1) + v % side) for v in range(n)]


def render_clusters(dump: ClusterDump, layout: str = "linear", width: int = 800,
                    height: int = 500) -> str:
    """SVG text; one ``<g class="cluster <colour>">`` group per cluster."""
    xs = _x_positions(dump.n, layout)
    span = max(xs, default=0.0) + 1.0
    left, right, top, bottom = 50.0, 20.0, 20.0, 40.0
    pw, ph = width - left - right, height - top - bottom

    def X(v: int) -> float:
        return left + (xs[v] + 0.5) / span * pw

    def Y(t: float) -> float:
        return top + (dump.t_star - t) / dump.t_star * ph if dump.t_star > 0 else top + ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<g class="axes" stroke="#000" stroke-width="1">',
        f'<line x1="{left:.2f}" y1="{top + ph:.2f}" x2="{left + pw:.2f}" y2="{top + ph:.2f}"/>',
        f'<line x1="{left:.2f}" y1="{top:.2f}" x2="{left:.2f}" y2="{top + ph:.2f}"/>',
        "</g>",
        f'<text x="{left - 8:.2f}" y="{top + ph:.2f}" text-anchor="end" font-size="11">0</text>',
        f'<text x="{left - 8:.2f}" y="{top + 4:.2f}" text-anchor="end" font-size="11">'
        f"{dump.t_star:g}</text>",
        f'<text x="{left + pw / 2:.2f}" y="{height - 10:.2f}" text-anchor="middle" '
        f'font-size="11">vertex</text>',
    ]
    by_cluster: dict[int, list[tuple[int, float, float]]] = {}
    for cid, w, a, b in dump.segments:
        by_cluster.setdefault(cid, []).append((w, a, b))
    for cid, cls, members in sorted(dump.clusters):
        colour = COLORS.get(cls, COLORS[""])
        label = cls if cls else "unclassified"
        out.append(f'<g class="cluster {label}" data-id="{cid}" '
                   f'data-members={quoteattr(" ".join(map(str, members)))} '
                   f'stroke="{colour}" stroke-width="2">')
        for w, a, b in sorted(by_cluster.get(cid, [])):
            a, b = max(a, 0.0), min(b, dump.t_star)
            if b < a:
                continue
            out.append(f'<line x1="{X(w):.2f}" y1="{Y(a):.2f}" x2="{X(w):.2f}" y2="{Y(b):.2f}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def class_counts(svg: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for m in re.finditer(r'<g class="cluster (\w+)"', svg):
        counts[m.group(1)] = counts.get(m.group(1), 0) + 1
    return counts


def dump_class_counts(rows: Iterable[tuple[int, str, tuple[int, ...]]]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for _, cls, _ in rows:
        key = cls or "unclassified"
        counts[key] = counts.get(key, 0) + 1
    return counts

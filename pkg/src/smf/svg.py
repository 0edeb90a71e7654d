"""Tiny deterministic SVG writer for learning curves and step dumps.

Hand-rolled so identical inputs produce byte-identical files; plotting
libraries embed ids and timestamps that break reproducibility checks.
"""

from __future__ import annotations

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

Series = tuple[str, list[float], list[float]]  # (name, xs, ys)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _panel(series: list[Series], x0: int, y0: int, width: int, height: int,
           x_label: str, y_label: str,
           y_range: tuple[float, float] | None) -> list[str]:
    margin = 50
    inner_w = width - 2 * margin
    inner_h = height - 2 * margin

    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    x_lo, x_hi = (min(all_x), max(all_x)) if all_x else (0.0, 1.0)
    if y_range is not None:
        y_lo, y_hi = y_range
    else:
        y_lo, y_hi = (min(all_y), max(all_y)) if all_y else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x: float) -> float:
        return x0 + margin + (x - x_lo) / (x_hi - x_lo) * inner_w

    def sy(y: float) -> float:
        return y0 + height - margin - (y - y_lo) / (y_hi - y_lo) * inner_h

    bottom = y0 + height - margin
    left = x0 + margin
    parts = [
        f'<line x1="{left}" y1="{bottom}" x2="{x0 + width - margin}" y2="{bottom}" '
        f'stroke="black"/>',
        f'<line x1="{left}" y1="{y0 + margin}" x2="{left}" y2="{bottom}" stroke="black"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        parts.append(
            f'<text x="{_fmt(left + frac * inner_w)}" y="{bottom + 18}" '
            f'font-size="11" text-anchor="middle">{xv:g}</text>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{_fmt(bottom - frac * inner_h + 4)}" '
            f'font-size="11" text-anchor="end">{yv:g}</text>'
        )
    if x_label:
        parts.append(
            f'<text x="{x0 + width // 2}" y="{y0 + height - 10}" font-size="12" '
            f'text-anchor="middle">{x_label}</text>'
        )
    if y_label:
        cy = y0 + height // 2
        parts.append(
            f'<text x="{x0 + 14}" y="{cy}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 {x0 + 14} {cy})">{y_label}</text>'
        )
    for i, (name, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        if xs:
            points = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys))
            parts.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                f'points="{points}"/>'
            )
        parts.append(
            f'<text x="{x0 + width - margin - 4}" y="{y0 + margin + 16 * i + 12}" '
            f'font-size="11" text-anchor="end" fill="{color}">{name}</text>'
        )
    return parts


def _document(body: list[str], width: int, height: int) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def line_chart(series: list[Series], width: int = 640, height: int = 400,
               x_label: str = "", y_label: str = "",
               y_range: tuple[float, float] | None = None) -> str:
    """Render named (xs, ys) series as polylines with simple axes."""
    return _document(_panel(series, 0, 0, width, height, x_label, y_label, y_range),
                     width, height)


def two_panel_chart(top: list[Series], bottom: list[Series],
                    width: int = 720, panel_height: int = 320,
                    top_labels: tuple[str, str] = ("", ""),
                    bottom_labels: tuple[str, str] = ("", "")) -> str:
    """Two stacked panels, e.g. filtered signals above their templates."""
    body = _panel(top, 0, 0, width, panel_height, top_labels[0], top_labels[1], None)
    body += _panel(bottom, 0, panel_height, width, panel_height,
                   bottom_labels[0], bottom_labels[1], None)
    return _document(body, width, 2 * panel_height)

"""Static SVG 1.1 rendering of storyline layout payloads.

Input is the JSON layout payload (the same structure the HTTP service
returns), so the renderer stays decoupled from the layout engine.
"""

from __future__ import annotations

PALETTE = [
    "#4269d0", "#efb118", "#ff725c", "#6cc5b0", "#3ca951",
    "#ff8ab7", "#a463f2", "#97bbf5", "#9c6b4e", "#9498a0",
]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(payload: dict, x_step: float = 48.0, y_step: float = 22.0,
               margin: float = 40.0) -> str:
    lines = payload.get("lines", [])
    contours = payload.get("contours", [])
    max_col = max([payload.get("columns", 1) - 1] +
                  [pt["col"] for ln in lines for pt in ln["points"]])
    max_y = max([0.0] + [pt["y"] for ln in lines for pt in ln["points"]])
    width = margin * 2 + max_col * x_step
    height = margin * 2 + max_y * y_step

    def X(col):
        return margin + col * x_step

    def Y(y):
        return margin + y * y_step

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_fmt(width)}" height="{_fmt(height)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        f'<rect width="{_fmt(width)}" height="{_fmt(height)}" fill="#ffffff"/>',
    ]

    for band in contours:
        color = PALETTE[int(band["cluster"]) % len(PALETTE)]
        top = [f"{_fmt(X(c))},{_fmt(Y(y))}" for c, y in band["top"]]
        bottom = [f"{_fmt(X(c))},{_fmt(Y(y))}" for c, y in band["bottom"]]
        points = " ".join(top + bottom)
        parts.append(f'<polygon points="{points}" fill="{color}" '
                     f'opacity="0.12" stroke="none"/>')

    for ln in lines:
        color = PALETTE[int(ln["action"]) % len(PALETTE)]
        stroke = "4.0" if ln.get("thick") else "1.6"
        pts = " ".join(f"{_fmt(X(pt['col']))},{_fmt(Y(pt['y']))}"
                       for pt in ln["points"])
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="{stroke}" stroke-linejoin="round" '
                     f'stroke-linecap="round"/>')
        first = ln["points"][0]
        parts.append(f'<text x="{_fmt(X(first["col"]) - 6)}" '
                     f'y="{_fmt(Y(first["y"]) + 3)}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="10" '
                     f'fill="{color}">{int(ln["action"])}</text>')
        for pt in ln["points"]:
            if pt.get("annotated"):
                parts.append(f'<circle cx="{_fmt(X(pt["col"]))}" '
                             f'cy="{_fmt(Y(pt["y"]))}" r="3.2" '
                             f'fill="{color}" stroke="#ffffff" '
                             f'stroke-width="1.0"/>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"

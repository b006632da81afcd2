"""Strip-image figures: the iterated images of the square as closed bands.

Each length-n word contributes one band, bounded above and below by the
fiber image envelope over the arrival grid.  Output is plain SVG (filled
translucent polygons so overlaps stay visible) plus a CSV vertex list for
external plotting; nothing interactive.
"""

from __future__ import annotations

import numpy as np

from .errors import BudgetError, ParameterError
from .symbolic import fiber_image

_PALETTE = ("#27557b", "#b3372b", "#3d7a3f", "#8e5e24",
            "#5c4a7d", "#1d7c84", "#a03d6b", "#556b1f")


def word_label(word):
    return ".".join(str(s) for s in word)


def strip_polygons(spec, n, x_grid_n=129, budget=4096, hat=False):
    """Band polygons for every length-n word, in lexicographic order.

    Returns a list of (word, vertices) with vertices an (2*x_grid_n, 2)
    array tracing the upper envelope left to right and the lower one back.
    """
    if n < 1:
        raise ParameterError(f"iterate count must be >= 1, got {n}")
    count = spec.n_strips ** n
    if count > budget:
        raise BudgetError(
            f"{count} bands at depth {n} exceed the budget of {budget}")
    xg = np.linspace(0.0, 1.0, x_grid_n)
    out = []
    words = [()]
    for _ in range(n):
        words = [w + (s,) for w in words for s in range(1, spec.n_strips + 1)]
    for word in sorted(words):
        lo, hi = fiber_image(spec, word, xg, hat=hat)
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        verts = np.empty((2 * x_grid_n, 2))
        verts[:x_grid_n, 0] = xg
        verts[:x_grid_n, 1] = hi
        verts[x_grid_n:, 0] = xg[::-1]
        verts[x_grid_n:, 1] = lo[::-1]
        out.append((word, verts))
    return out


def _svg_text(polygons, size=640, pad=24, y_range=None):
    if y_range is None:
        ymin = min(float(v[:, 1].min()) for _, v in polygons)
        ymax = max(float(v[:, 1].max()) for _, v in polygons)
        ymin, ymax = min(ymin, 0.0), max(ymax, 1.0)
    else:
        ymin, ymax = y_range
    span = ymax - ymin
    inner = size - 2 * pad

    def sx(x):
        return pad + x * inner

    def sy(y):
        return pad + (ymax - y) / span * inner

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
        f'height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="{pad}" y="{sy(1.0):.2f}" width="{inner}" '
        f'height="{sy(0.0) - sy(1.0):.2f}" fill="none" '
        'stroke="#999999" stroke-width="1"/>',
    ]
    for k, (word, verts) in enumerate(polygons):
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in verts)
        color = _PALETTE[k % len(_PALETTE)]
        lines.append(
            f'<polygon points="{pts}" fill="{color}" fill-opacity="0.35" '
            f'stroke="{color}" stroke-width="0.8">'
            f"<title>{word_label(word)}</title></polygon>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit_strip_polygons(spec, n, svg_path=None, csv_path=None,
                        x_grid_n=129, budget=4096, hat=False):
    """Write the depth-n band figure as SVG and/or a CSV vertex list.

    The CSV has one row per vertex (word, vertex index, x, y), bands in
    lexicographic word order so output is deterministic.  Returns the
    polygon list of strip_polygons for further inspection.
    """
    polygons = strip_polygons(spec, n, x_grid_n=x_grid_n, budget=budget,
                              hat=hat)
    if svg_path is not None:
        with open(svg_path, "w") as fh:
            fh.write(_svg_text(polygons))
    if csv_path is not None:
        rows = ["word,vertex,x,y"]
        for word, verts in polygons:
            lab = word_label(word)
            rows.extend(
                f"{lab},{i},{float(x)!r},{float(y)!r}"
                for i, (x, y) in enumerate(verts))
        with open(csv_path, "w") as fh:
            fh.write("\n".join(rows) + "\n")
    return polygons

"""Static SVG heatmaps with a diverging colour map centred on the middle of the box."""
from __future__ import annotations

import os

import numpy as np

_NEG = np.array([33, 102, 172])   # blue at lo
_MID = np.array([247, 247, 247])  # near-white at the box centre
_POS = np.array([178, 24, 43])    # red at hi


def _colour(u: float) -> str:
    """``u`` in [-1, 1] -> hex colour."""
    u = float(np.clip(u, -1.0, 1.0))
    end = _POS if u >= 0 else _NEG
    rgb = np.rint(_MID + abs(u) * (end - _MID)).astype(int)
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def heatmap_svg(values: np.ndarray, box, title: str = None, size: int = 480) -> str:
    v = np.asarray(values, dtype=float)
    m = v.shape[0]
    lo, hi = box
    if not np.isfinite(lo) or not np.isfinite(hi):
        lo, hi = float(v.min()), float(v.max())
        if lo == hi:
            lo, hi = lo - 1.0, hi + 1.0
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    cell = max(1, size // m)
    side = cell * m
    top = 24 if title else 0
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side + top}" '
             f'viewBox="0 0 {side} {side + top}">']
    if title:
        lines.append(f'<text x="4" y="16" font-family="monospace" font-size="12">{_escape(title)}</text>')
    # merge runs of equal colour along each row to keep files small
    for i in range(m):
        j = 0
        while j < m:
            col = _colour((v[i, j] - mid) / half)
            k = j + 1
            while k < m and _colour((v[i, k] - mid) / half) == col:
                k += 1
            lines.append(f'<rect x="{j * cell}" y="{top + i * cell}" width="{(k - j) * cell}" '
                         f'height="{cell}" fill="{col}"/>')
            j = k
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_heatmap(obj, path, title: str = None) -> list:
    """Write an SVG for a kernel or matrix, or one SVG per time for a flow.

    For a flow ``path`` is a directory; returns the list of written files.
    """
    if hasattr(obj, "kernels"):
        os.makedirs(path, exist_ok=True)
        files = []
        for j, (t, K) in enumerate(zip(obj.times, obj.kernels)):
            f = os.path.join(path, f"t_{j:04d}.svg")
            _write(f, heatmap_svg(K.values, obj.box, f"t = {t:.6g}"))
            files.append(f)
        return files
    _write(path, heatmap_svg(obj.values, obj.box, title))
    return [path]


def _write(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)

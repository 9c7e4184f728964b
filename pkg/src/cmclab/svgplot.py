"""Hand-rolled SVG scatter plots.

CSV files are the data contract; these pictures exist so a sweep can be
eyeballed without pulling in a plotting stack.  Output is deterministic:
fixed canvas, fixed precision, no timestamps.
"""

import numpy as np

_W, _H = 640, 480
_L, _R, _T, _B = 70, 20, 34, 52


def _c(x: float) -> str:
    return f"{x:.2f}"


def _esc(text: str) -> str:
    return (
        str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def log_log_scatter(
    path: str,
    xs,
    ys,
    slope: float | None = None,
    intercept: float | None = None,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> None:
    """Scatter of (xs, ys) on log-log axes, optional fitted power line.

    The fit is interpreted as log10(y) = slope * log10(x) + intercept.
    Nonpositive or non-finite points are dropped; with nothing left the
    file still appears, stating that, so batch runs never dangle.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = np.isfinite(xs) & np.isfinite(ys) & (xs > 0) & (ys > 0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_W / 2:.0f}" y="20" text-anchor="middle" '
            f'font-size="14">{_esc(title)}</text>'
        )
    if not keep.any():
        parts.append(
            f'<text x="{_W / 2:.0f}" y="{_H / 2:.0f}" text-anchor="middle" '
            f'fill="#888">no positive finite points</text></svg>'
        )
        with open(path, "w") as fh:
            fh.write("\n".join(parts) + "\n")
        return

    lx, ly = np.log10(xs[keep]), np.log10(ys[keep])
    x0, x1 = float(lx.min()), float(lx.max())
    y0, y1 = float(ly.min()), float(ly.max())
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5
    padx, pady = 0.06 * (x1 - x0), 0.08 * (y1 - y0)
    x0, x1 = x0 - padx, x1 + padx
    y0, y1 = y0 - pady, y1 + pady

    def px(v):
        return _L + (v - x0) / (x1 - x0) * (_W - _L - _R)

    def py(v):
        return _H - _B - (v - y0) / (y1 - y0) * (_H - _T - _B)

    # frame
    parts.append(
        f'<rect x="{_L}" y="{_T}" width="{_W - _L - _R}" height="{_H - _T - _B}" '
        f'fill="none" stroke="black"/>'
    )
    # decade grid lines and labels
    for k in range(int(np.floor(x0)), int(np.ceil(x1)) + 1):
        if x0 <= k <= x1:
            parts.append(
                f'<line x1="{_c(px(k))}" y1="{_T}" x2="{_c(px(k))}" '
                f'y2="{_H - _B}" stroke="#ddd"/>'
            )
            parts.append(
                f'<text x="{_c(px(k))}" y="{_H - _B + 16}" '
                f'text-anchor="middle">{10.0 ** k:g}</text>'
            )
    for k in range(int(np.floor(y0)), int(np.ceil(y1)) + 1):
        if y0 <= k <= y1:
            parts.append(
                f'<line x1="{_L}" y1="{_c(py(k))}" x2="{_W - _R}" '
                f'y2="{_c(py(k))}" stroke="#ddd"/>'
            )
            parts.append(
                f'<text x="{_L - 6}" y="{_c(py(k) + 4)}" '
                f'text-anchor="end">{10.0 ** k:g}</text>'
            )
    if xlabel:
        parts.append(
            f'<text x="{(_L + _W - _R) / 2:.0f}" y="{_H - 14}" '
            f'text-anchor="middle">{_esc(xlabel)}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="16" y="{(_T + _H - _B) / 2:.0f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {(_T + _H - _B) / 2:.0f})">{_esc(ylabel)}</text>'
        )
    if slope is not None and intercept is not None and np.isfinite(slope):
        ya, yb = slope * x0 + intercept, slope * x1 + intercept
        parts.append(
            f'<line x1="{_c(px(x0))}" y1="{_c(py(ya))}" x2="{_c(px(x1))}" '
            f'y2="{_c(py(yb))}" stroke="#c33" stroke-dasharray="6 4"/>'
        )
        parts.append(
            f'<text x="{_W - _R - 8}" y="{_T + 16}" text-anchor="end" '
            f'fill="#c33">slope {slope:.3f}</text>'
        )
    for vx, vy in zip(lx, ly):
        parts.append(
            f'<circle cx="{_c(px(vx))}" cy="{_c(py(vy))}" r="4" '
            f'fill="#247" fill-opacity="0.8"/>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")

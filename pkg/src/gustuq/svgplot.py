"""Hand-rolled SVG charts for the report bundle.

CSVs are the canonical outputs; these are inspection conveniences, written
directly as SVG text with fixed number formatting so repeated runs emit
byte-identical files.
"""

from __future__ import annotations

import numpy as np

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v):
    return f"{v:.3f}"


class Chart:
    """A fixed-size canvas with one data-space -> pixel mapping."""

    def __init__(self, width=640, height=360, margin=48, title=""):
        self.width, self.height, self.margin = width, height, margin
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
        ]
        if title:
            self.parts.append(
                f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" '
                f'font-family="sans-serif" font-size="14">{title}</text>')
        self._window = None

    def set_window(self, x0, x1, y0, y1):
        pad_x = 0.05 * (x1 - x0) or 1.0
        pad_y = 0.05 * (y1 - y0) or 1.0
        self._window = (x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y)

    def _map(self, x, y):
        x0, x1, y0, y1 = self._window
        m, w, h = self.margin, self.width, self.height
        px = m + (np.asarray(x) - x0) / (x1 - x0) * (w - 2 * m)
        py = h - m - (np.asarray(y) - y0) / (y1 - y0) * (h - 2 * m)
        return px, py

    def axes(self, x_label="", y_label=""):
        m, w, h = self.margin, self.width, self.height
        self.parts.append(
            f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" '
            f'fill="none" stroke="#888" stroke-width="1"/>')
        x0, x1, y0, y1 = self._window
        for frac in (0.0, 0.5, 1.0):
            xv = x0 + frac * (x1 - x0)
            yv = y0 + frac * (y1 - y0)
            px, _ = self._map(xv, y0)
            _, py = self._map(x0, yv)
            self.parts.append(
                f'<text x="{px:.1f}" y="{h - m + 16}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10">{_fmt(xv)}</text>')
            self.parts.append(
                f'<text x="{m - 6}" y="{py:.1f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="10">{_fmt(yv)}</text>')
        if x_label:
            self.parts.append(
                f'<text x="{w / 2:.0f}" y="{h - 8}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="12">{x_label}</text>')
        if y_label:
            self.parts.append(
                f'<text x="14" y="{h / 2:.0f}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="12" '
                f'transform="rotate(-90 14 {h / 2:.0f})">{y_label}</text>')

    def polyline(self, x, y, color="#1f77b4", width=1.5, dash=None):
        px, py = self._map(x, y)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{extra}/>')

    def band(self, x, lo, hi, color="#1f77b4", opacity=0.25):
        px, plo = self._map(x, lo)
        _, phi = self._map(x, hi)
        pts = [f"{a:.2f},{b:.2f}" for a, b in zip(px, plo)]
        pts += [f"{a:.2f},{b:.2f}" for a, b in zip(px[::-1], phi[::-1])]
        self.parts.append(
            f'<polygon points="{" ".join(pts)}" fill="{color}" '
            f'opacity="{opacity}" stroke="none"/>')

    def ellipse(self, cx, cy, a, b, angle_rad, color="#d62728", width=1.2):
        # polyline approximation keeps the data-space orientation exact
        t = np.linspace(0.0, 2.0 * np.pi, 73)
        ex = cx + a * np.cos(t) * np.cos(angle_rad) - b * np.sin(t) * np.sin(angle_rad)
        ey = cy + a * np.cos(t) * np.sin(angle_rad) + b * np.sin(t) * np.cos(angle_rad)
        self.polyline(ex, ey, color=color, width=width)

    def marker(self, x, y, color="#000", r=3.0):
        px, py = self._map(x, y)
        self.parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{r}" fill="{color}"/>')

    def legend(self, entries):
        y = self.margin + 14
        for label, color in entries:
            self.parts.append(
                f'<rect x="{self.width - self.margin - 130}" y="{y - 9}" width="12" '
                f'height="12" fill="{color}"/>')
            self.parts.append(
                f'<text x="{self.width - self.margin - 112}" y="{y + 1}" '
                f'font-family="sans-serif" font-size="11">{label}</text>')
            y += 18

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.parts) + "\n</svg>\n")


def lift_band_svg(path, times, truth, mean, two_sigma, kind, title):
    lo, hi = mean - two_sigma, mean + two_sigma
    y_min = min(truth.min(), lo.min())
    y_max = max(truth.max(), hi.max())
    chart = Chart(title=title)
    chart.set_window(times.min(), times.max(), y_min, y_max)
    chart.band(times, lo, hi, color=_PALETTE[0])
    chart.polyline(times, mean, color=_PALETTE[0])
    chart.polyline(times, truth, color="#333", dash="4,3")
    chart.axes("t (convective units)", "lift coefficient")
    chart.legend([(f"mean +-2 sigma ({kind})", _PALETTE[0]), ("truth", "#333")])
    chart.save(path)


def ellipse_overlay_svg(path, truth_xy, mean_xy, ellipses, plane_name, title):
    all_x = np.concatenate([truth_xy[:, 0], mean_xy[:, 0]])
    all_y = np.concatenate([truth_xy[:, 1], mean_xy[:, 1]])
    chart = Chart(width=480, height=480, title=title)
    chart.set_window(all_x.min(), all_x.max(), all_y.min(), all_y.max())
    for spec in ellipses:
        chart.ellipse(spec.center[0], spec.center[1], spec.semi_axes[0],
                      spec.semi_axes[1], spec.angle, color=_PALETTE[1])
    chart.polyline(truth_xy[:, 0], truth_xy[:, 1], color="#333", dash="4,3")
    chart.polyline(mean_xy[:, 0], mean_xy[:, 1], color=_PALETTE[0])
    chart.axes(f"xi{plane_name[0]}", f"xi{plane_name[1]}")
    chart.legend([("predicted mean", _PALETTE[0]), ("truth", "#333"),
                  ("95% ellipses", _PALETTE[1])])
    chart.save(path)


def sensor_bars_svg(path, snapshots, title):
    """Small-multiple bar panels: one panel per selected snapshot, eleven
    signed bars per panel. `snapshots` is a list of (label, weights)."""
    n = len(snapshots)
    panel_w, panel_h, gap = 200, 150, 16
    cols = min(3, n)
    rows = (n + cols - 1) // cols
    width = cols * panel_w + (cols + 1) * gap
    height = rows * panel_h + (rows + 1) * gap + 24
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="16" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
    ]
    peak = max(max(abs(w).max() for _, w in snapshots), 1e-12)
    for k, (label, weights) in enumerate(snapshots):
        r, c = divmod(k, cols)
        ox = gap + c * (panel_w + gap)
        oy = 24 + gap + r * (panel_h + gap)
        mid = oy + panel_h / 2
        parts.append(f'<rect x="{ox}" y="{oy}" width="{panel_w}" height="{panel_h}" '
                     f'fill="none" stroke="#aaa"/>')
        parts.append(f'<line x1="{ox}" y1="{mid:.1f}" x2="{ox + panel_w}" '
                     f'y2="{mid:.1f}" stroke="#ccc"/>')
        bar_w = panel_w / (len(weights) + 1)
        for i, w in enumerate(weights):
            h = abs(w) / peak * (panel_h / 2 - 6)
            x = ox + bar_w * (i + 0.5)
            y = mid - h if w >= 0 else mid
            parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w * 0.8:.1f}" '
                         f'height="{h:.1f}" fill="{_PALETTE[0]}"/>')
        parts.append(f'<text x="{ox + 4}" y="{oy + 12}" font-family="sans-serif" '
                     f'font-size="10">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")

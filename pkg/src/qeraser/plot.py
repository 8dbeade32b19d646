"""Minimal hand-written SVG overlay of the subensemble histograms."""

from xml.sax.saxutils import escape

import numpy as np

from .optics import envelope_moments

COLORS = {"D1": "#d62728", "D2": "#1f77b4", "D3": "#2ca02c", "D4": "#9467bd", "all": "#444444"}
WIDTH, HEIGHT, PAD = 900, 500, 50


def model_counts(report, edges, geom, positions=None):
    """Fitted counts per bin reconstructed from a VisibilityReport."""
    if positions is None:
        i0, ic, is_ = envelope_moments(edges, geom)
    else:
        x = np.asarray(positions, dtype=float)
        i0 = geom.envelope(x)
        ic = i0 * np.cos(geom.fringe_wavenumber * x)
        is_ = i0 * np.sin(geom.fringe_wavenumber * x)
    v, phi = report.visibility, report.phase
    return report.amplitude * (i0 + v * np.cos(phi) * ic - v * np.sin(phi) * is_)


def _points(x, y, x0, x1):
    sx = (WIDTH - 2 * PAD) / (x1 - x0)
    sy = HEIGHT - 2 * PAD
    return " ".join(
        f"{PAD + (xi - x0) * sx:.2f},{HEIGHT - PAD - yi * sy:.2f}" for xi, yi in zip(x, y)
    )


def render_svg(histograms, fits, geom, positions=None, title="Joint detection rates"):
    """Return SVG text: every histogram normalized to its own peak, with
    the fitted fringe model drawn as a dashed line where available."""
    edges = histograms[0].bin_edges
    x = 0.5 * (edges[:-1] + edges[1:]) if positions is None else np.asarray(positions)
    x0, x1 = float(edges[0]), float(edges[-1])
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="25" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="12">'
        f"D0 position (mm)</text>",
    ]
    for k, h in enumerate(histograms):
        label = h.label
        peak = h.counts.max()
        if peak == 0:
            continue
        color = COLORS.get(label, "black")
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{_points(x, h.counts / peak, x0, x1)}"/>'
        )
        fit = fits.get(label)
        if fit is not None:
            model = model_counts(fit, edges, geom, positions)
            parts.append(
                f'<polyline fill="none" stroke="{color}" stroke-dasharray="4 3" '
                f'points="{_points(x, model / peak, x0, x1)}"/>'
            )
            label = f"{label}  V={fit.visibility:.3f}"
        parts.append(
            f'<text x="{WIDTH - PAD - 150}" y="{PAD + 18 * k}" font-size="12" '
            f'fill="{color}">{escape(label)}</text>'
        )
    for tick in np.linspace(x0, x1, 8):
        px = PAD + (tick - x0) * (WIDTH - 2 * PAD) / (x1 - x0)
        parts.append(
            f'<text x="{px:.2f}" y="{HEIGHT - PAD + 15}" text-anchor="middle" '
            f'font-size="10">{tick * 1e3:.2f}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

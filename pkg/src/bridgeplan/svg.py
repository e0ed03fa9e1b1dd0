"""Plain SVG figures of a 2-D workspace with trajectories."""

from __future__ import annotations

from xml.sax.saxutils import quoteattr

import numpy as np

from .core import Workspace

SNAPSHOT_COLORS = ("#d9d9d9", "#bdbdbd", "#969696", "#737373", "#525252")


def _path_d(points, to_px):
    pts = [to_px(p) for p in np.asarray(points)[:, :2]]
    head = "M{:.3f},{:.3f}".format(*pts[0])
    return head + "".join(" L{:.3f},{:.3f}".format(*p) for p in pts[1:])


def render(workspace: Workspace, experts=(), generated=(), snapshots=(), tasks=(), size=480, margin=10) -> str:
    """SVG document: obstacles as circles, one ``<path>`` per trajectory.

    ``experts`` and ``generated`` are position arrays (L x 2); ``snapshots`` is
    a list of ``(t, positions)`` drawn as faint dotted paths.
    """
    if workspace.dim != 2:
        raise ValueError("only 2-D workspaces can be drawn")
    lo, hi = workspace.lo, workspace.hi
    scale = (size - 2 * margin) / float(np.max(hi - lo))
    w = margin * 2 + scale * (hi[0] - lo[0])
    h = margin * 2 + scale * (hi[1] - lo[1])

    def to_px(p):
        return margin + scale * (p[0] - lo[0]), h - margin - scale * (p[1] - lo[1])

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" viewBox="0 0 {w:.3f} {h:.3f}">',
        f'<rect x="{margin}" y="{margin}" width="{w - 2 * margin:.3f}" height="{h - 2 * margin:.3f}" '
        'fill="white" stroke="black"/>',
    ]
    for c, r in zip(workspace.centers, workspace.radii):
        x, y = to_px(c)
        out.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{scale * r:.3f}" fill="#444"/>')
    for k, (t, pts) in enumerate(snapshots):
        color = SNAPSHOT_COLORS[k % len(SNAPSHOT_COLORS)]
        out.append(
            f'<path class="snapshot" data-t={quoteattr(f"{t:g}")} d="{_path_d(pts, to_px)}" fill="none" '
            f'stroke="{color}" stroke-dasharray="2,2"/>'
        )
    for pts in experts:
        out.append(f'<path class="expert" d="{_path_d(pts, to_px)}" fill="none" stroke="#4a90d9" stroke-opacity="0.6"/>')
    for pts in generated:
        out.append(f'<path class="generated" d="{_path_d(pts, to_px)}" fill="none" stroke="#d62728" stroke-width="2"/>')
    for task in tasks:
        for p, color in ((task.start, "#2ca02c"), (task.goal, "#ff7f0e")):
            x, y = to_px(p)
            out.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="4" fill="{color}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

"""Dependency-free SVG bar chart of a scenario distribution."""

from xml.sax.saxutils import escape

WIDTH = 480
HEIGHT = 300
MARGIN_LEFT = 50
MARGIN_RIGHT = 10
MARGIN_TOP = 20
MARGIN_BOTTOM = 40


def distribution_svg(labels, p, title="scenario probabilities"):
    """One ``<rect>`` per scenario, height proportional to its probability."""
    K = len(p)
    top = max(max(p), 1e-300)
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    slot = plot_w / K
    bar_w = 0.7 * slot
    base_y = MARGIN_TOP + plot_h
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<title>{escape(title)}</title>",
        f'<line x1="{MARGIN_LEFT}" y1="{base_y}" x2="{WIDTH - MARGIN_RIGHT}" y2="{base_y}" '
        'stroke="black"/>',
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{base_y}" stroke="black"/>',
        f'<text x="{MARGIN_LEFT - 4}" y="{MARGIN_TOP + 4}" text-anchor="end" font-size="10">'
        f"{top:.3f}</text>",
        f'<text x="{MARGIN_LEFT - 4}" y="{base_y}" text-anchor="end" font-size="10">0</text>',
    ]
    for k, (label, value) in enumerate(zip(labels, p)):
        h = plot_h * value / top
        x = MARGIN_LEFT + k * slot + (slot - bar_w) / 2
        parts.append(
            f'<rect x="{x:.3f}" y="{base_y - h:.3f}" width="{bar_w:.3f}" height="{h:.3f}" '
            f'fill="steelblue"><title>{escape(label)}: {value:.6f}</title></rect>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.3f}" y="{base_y + 16}" text-anchor="middle" '
            f'font-family="monospace" font-size="11">{escape(label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_distribution_svg(labels, p, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(distribution_svg(labels, p))

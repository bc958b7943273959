"""Deterministic SVG line charts: accuracy vs severity with CI bands.

Plain SVG 1.1 built by string concatenation, no external assets; the same
aggregate rows always produce the same bytes.
"""
from __future__ import annotations

from .sweep import AggregateRow

_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 160, 30, 50


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def emit_curves(rows: list[AggregateRow], path) -> None:
    """Write one polyline + CI band per model over the severity grid."""
    rows = [r for r in rows if r.mean is not None]
    if not rows:
        raise ValueError("no aggregate rows with data to plot")
    models: list[str] = []
    for r in rows:
        if r.model not in models:
            models.append(r.model)
    kind = rows[0].perturbation
    variant = rows[0].variant
    kappas = sorted({r.kappa for r in rows})
    x_lo, x_hi = min(kappas), max(kappas)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def X(k: float) -> float:
        return _ML + (k - x_lo) / (x_hi - x_lo) * plot_w

    def Y(acc: float) -> float:
        return _MT + (1.0 - acc) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    # axes
    parts.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
        f'stroke="black" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
        f'stroke="black" stroke-width="1"/>'
    )
    for i in range(5):
        acc = i / 4.0
        y = Y(acc)
        parts.append(
            f'<line x1="{_ML - 4}" y1="{_fmt(y)}" x2="{_ML}" y2="{_fmt(y)}" '
            f'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{_fmt(y + 4)}" font-size="11" '
            f'text-anchor="end" font-family="sans-serif">{_fmt(acc)}</text>'
        )
    ticks = kappas if len(kappas) <= 12 else [
        x_lo + i * (x_hi - x_lo) / 6 for i in range(7)
    ]
    for k in ticks:
        x = X(k)
        parts.append(
            f'<line x1="{_fmt(x)}" y1="{_H - _MB}" x2="{_fmt(x)}" '
            f'y2="{_H - _MB + 4}" stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x)}" y="{_H - _MB + 18}" font-size="11" '
            f'text-anchor="middle" font-family="sans-serif">{_fmt(k)}</text>'
        )
    x_label = f"kappa ({kind}:{variant})" if variant else f"kappa ({kind})"
    parts.append(
        f'<text x="{_ML + plot_w / 2:.6g}" y="{_H - 12}" font-size="13" '
        f'text-anchor="middle" font-family="sans-serif">{x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{_MT + plot_h / 2:.6g}" font-size="13" '
        f'text-anchor="middle" font-family="sans-serif" '
        f'transform="rotate(-90 16 {_MT + plot_h / 2:.6g})">accuracy</text>'
    )

    for m_idx, model in enumerate(models):
        color = _PALETTE[m_idx % len(_PALETTE)]
        series = sorted(
            (r for r in rows if r.model == model), key=lambda r: r.kappa
        )
        # CI band, clamped to [0, 1] for display
        if any((r.ci95 or 0.0) > 0 for r in series) and len(series) >= 2:
            upper = [
                (X(r.kappa), Y(min(1.0, r.mean + (r.ci95 or 0.0)))) for r in series
            ]
            lower = [
                (X(r.kappa), Y(max(0.0, r.mean - (r.ci95 or 0.0))))
                for r in reversed(series)
            ]
            pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in upper + lower)
            parts.append(
                f'<polygon points="{pts}" fill="{color}" fill-opacity="0.15" '
                f'stroke="none"/>'
            )
        if len(series) >= 2:
            pts = " ".join(
                f"{_fmt(X(r.kappa))},{_fmt(Y(r.mean))}" for r in series
            )
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
        for r in series:
            parts.append(
                f'<circle cx="{_fmt(X(r.kappa))}" cy="{_fmt(Y(r.mean))}" r="3" '
                f'fill="{color}"/>'
            )
        # legend
        ly = _MT + 14 + 18 * m_idx
        lx = _W - _MR + 12
        parts.append(
            f'<rect x="{lx}" y="{ly - 9}" width="12" height="12" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{lx + 18}" y="{ly + 2}" font-size="12" '
            f'font-family="sans-serif">{model}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")

"""Charts from an experiment directory: grouped d' bars, SNR bars with similarity lines,
and the bundled reference d' table. Output is self-contained SVG plus the CSV each
chart was drawn from; every plotted value is copied verbatim from a CSV cell.
"""

from __future__ import annotations

import csv
import io
import math
from importlib import resources
from pathlib import Path
from xml.sax.saxutils import escape

from . import targets as target_set
from .errors import SchemaError

SUMMARY_REQUIRED = ("target_id", "model", "d_prime", "mean_snr_db", "mean_gen_cosine")
REFERENCE_CSV = "dprime_targets.csv"

WIDTH, HEIGHT = 960, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 70, 40, 60
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def read_table(path, required=()):
    """Read a CSV into (header, rows); raises SchemaError naming any missing column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = list(reader.fieldnames or [])
        rows = list(reader)
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    return header, rows


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def reference_csv_text() -> str:
    return resources.files("phondrift.data").joinpath(REFERENCE_CSV).read_text()


def _num(s):
    try:
        v = float(s)
    except (TypeError, ValueError):
        return None
    return v if math.isfinite(v) else None


def _nice_max(values, floor=1.0):
    top = max([v for v in values if v is not None] + [floor])
    step = 10 ** math.floor(math.log10(top))
    for m in (1, 2, 2.5, 5, 10):
        if m * step >= top:
            return m * step
    return 10 * step


def _fmt_tick(v):
    return f"{v:g}"


class _Canvas:
    def __init__(self, title, n_categories):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<title>{escape(title)}</title>',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">'
            f'{escape(title)}</text>',
        ]
        self.x0, self.x1 = MARGIN_L, WIDTH - MARGIN_R
        self.y0, self.y1 = HEIGHT - MARGIN_B, MARGIN_T
        self.n = max(n_categories, 1)
        self.slot = (self.x1 - self.x0) / self.n

    def add(self, s):
        self.parts.append(s)

    def y_of(self, v, vmax):
        return self.y0 - (self.y0 - self.y1) * (v / vmax)

    def axes(self, categories, left_label, vmax, right_label=None, rmax=None):
        self.add(f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x1}" y2="{self.y0}" stroke="black"/>')
        self.add(f'<line x1="{self.x0}" y1="{self.y0}" x2="{self.x0}" y2="{self.y1}" stroke="black"/>')
        for k in range(6):
            v = vmax * k / 5
            y = self.y_of(v, vmax)
            self.add(f'<line x1="{self.x0 - 4}" y1="{y:.2f}" x2="{self.x0}" y2="{y:.2f}" '
                     f'stroke="black"/><text x="{self.x0 - 6}" y="{y + 4:.2f}" '
                     f'text-anchor="end">{_fmt_tick(v)}</text>')
        self.add(f'<text transform="translate(16,{(self.y0 + self.y1) / 2}) rotate(-90)" '
                 f'text-anchor="middle">{escape(left_label)}</text>')
        if right_label is not None:
            self.add(f'<line x1="{self.x1}" y1="{self.y0}" x2="{self.x1}" y2="{self.y1}" '
                     f'stroke="black"/>')
            for k in range(6):
                v = rmax * k / 5
                y = self.y_of(v, rmax)
                self.add(f'<text x="{self.x1 + 6}" y="{y + 4:.2f}">{_fmt_tick(v)}</text>')
            self.add(f'<text transform="translate({WIDTH - 14},{(self.y0 + self.y1) / 2}) '
                     f'rotate(90)" text-anchor="middle">{escape(right_label)}</text>')
        for i, c in enumerate(categories):
            x = self.x0 + self.slot * (i + 0.5)
            self.add(f'<text x="{x:.2f}" y="{self.y0 + 16}" text-anchor="middle">'
                     f'{escape(c)}</text>')

    def legend(self, names, kinds=None):
        for i, name in enumerate(names):
            x = self.x0 + 10 + 150 * i
            y = HEIGHT - 18
            color = PALETTE[i % len(PALETTE)]
            if kinds and kinds[i] == "line":
                self.add(f'<line x1="{x}" y1="{y - 4}" x2="{x + 14}" y2="{y - 4}" '
                         f'stroke="{color}" stroke-width="2"/>')
            else:
                self.add(f'<rect x="{x}" y="{y - 10}" width="12" height="10" fill="{color}"/>')
            self.add(f'<text x="{x + 18}" y="{y}">{escape(name)}</text>')

    def svg(self):
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def grouped_bar_svg(title, categories, series, ylabel):
    """Grouped bars; ``series`` maps a legend name to raw value strings per category.

    Each bar carries ``data-value`` with the untouched string so charts can be
    checked against their CSV. Non-numeric or non-finite cells draw no bar.
    """
    names = list(series)
    values = [_num(s) for col in series.values() for s in col]
    vmax = _nice_max(values)
    cv = _Canvas(title, len(categories))
    cv.axes(categories, ylabel, vmax)
    width = cv.slot * 0.8 / max(len(names), 1)
    for j, name in enumerate(names):
        color = PALETTE[j % len(PALETTE)]
        for i, raw in enumerate(series[name]):
            v = _num(raw)
            if v is None:
                continue
            v = max(v, 0.0)
            x = cv.x0 + cv.slot * (i + 0.1) + width * j
            y = cv.y_of(v, vmax)
            cv.add(f'<rect class="bar" data-series="{escape(name)}" '
                   f'data-category="{escape(categories[i])}" data-value="{escape(raw)}" '
                   f'x="{x:.2f}" y="{y:.2f}" width="{width:.2f}" height="{cv.y0 - y:.2f}" '
                   f'fill="{color}"/>')
    cv.legend(names)
    return cv.svg()


def bar_line_svg(title, categories, bars, bar_label, lines, line_label, line_max=1.0):
    """Bars on the left axis and one polyline per entry of ``lines`` on the right axis."""
    vmax = _nice_max([_num(s) for s in bars])
    cv = _Canvas(title, len(categories))
    cv.axes(categories, bar_label, vmax, line_label, line_max)
    for i, raw in enumerate(bars):
        v = _num(raw)
        if v is None:
            continue
        v = max(v, 0.0)
        x = cv.x0 + cv.slot * (i + 0.2)
        y = cv.y_of(v, vmax)
        cv.add(f'<rect class="bar" data-series="{escape(bar_label)}" '
               f'data-category="{escape(categories[i])}" data-value="{escape(raw)}" '
               f'x="{x:.2f}" y="{y:.2f}" width="{cv.slot * 0.6:.2f}" height="{cv.y0 - y:.2f}" '
               f'fill="#c7c7c7"/>')
    for j, (name, col) in enumerate(lines.items()):
        color = PALETTE[(j + 1) % len(PALETTE)]
        pts = []
        for i, raw in enumerate(col):
            v = _num(raw)
            if v is None:
                continue
            x = cv.x0 + cv.slot * (i + 0.5)
            y = cv.y_of(min(max(v, 0.0), line_max), line_max)
            pts.append(f"{x:.2f},{y:.2f}")
            cv.add(f'<circle class="point" data-series="{escape(name)}" '
                   f'data-category="{escape(categories[i])}" data-value="{escape(raw)}" '
                   f'cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
        if pts:
            cv.add(f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" '
                   f'stroke-width="2"/>')
    cv.legend([bar_label] + list(lines), ["bar"] + ["line"] * len(lines))
    return cv.svg()


def _pivot(rows, value_col):
    """target order as first seen; model columns in first-seen order."""
    tids, models, cell = [], [], {}
    for r in rows:
        if r["target_id"] not in tids:
            tids.append(r["target_id"])
        if r["model"] not in models:
            models.append(r["model"])
        cell[(r["target_id"], r["model"])] = r[value_col]
    return tids, models, cell


def render_reference(out_dir):
    """Copy the bundled reference d' table next to its grouped bar chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = reference_csv_text()
    (out_dir / "reference_dprime.csv").write_text(text)
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = [r for r in reader if r]
    categories = [r[0] for r in rows]
    series = {name: [r[k] for r in rows] for k, name in enumerate(header) if k >= 2}
    svg = grouped_bar_svg("Reference d' per target", categories, series, "d'")
    (out_dir / "reference_dprime.svg").write_text(svg)
    return out_dir / "reference_dprime.svg"


def variant_notes():
    return [f"{t.target_id}: attacked text '{t.text}'; {t.variant_note}"
            for t in target_set.TARGETS if t.variant_note]


def report(experiment_dir):
    """Render every chart for ``experiment_dir`` into ``experiment_dir/charts``.

    Returns the list of written paths. Raises SchemaError when summary.csv lacks
    a required column; a header-only summary renders empty charts.
    """
    exp = Path(experiment_dir)
    _, rows = read_table(exp / "summary.csv", SUMMARY_REQUIRED)
    out = exp / "charts"
    out.mkdir(parents=True, exist_ok=True)
    written = []

    tids, models, cell = _pivot(rows, "d_prime")
    table = [[t] + [cell.get((t, m), "") for m in models] for t in tids]
    write_table(out / "dprime_grouped.csv", ["target_id"] + models, table)
    series = {m: [r[k + 1] for r in table] for k, m in enumerate(models)}
    (out / "dprime_grouped.svg").write_text(
        grouped_bar_svg("d' per target and speaker model", tids, series, "d'"))
    written += [out / "dprime_grouped.csv", out / "dprime_grouped.svg"]

    _, _, cos = _pivot(rows, "mean_gen_cosine")
    snr = {}
    for r in rows:
        snr.setdefault(r["target_id"], r["mean_snr_db"])
    table = [[t, snr[t]] + [cos.get((t, m), "") for m in models] for t in tids]
    cos_cols = [f"cos_{m}" for m in models]
    write_table(out / "snr_similarity.csv", ["target_id", "mean_snr_db"] + cos_cols, table)
    lines = {m: [r[k + 2] for r in table] for k, m in enumerate(models)}
    (out / "snr_similarity.svg").write_text(bar_line_svg(
        "Mean SNR and genuine cosine similarity per target", tids, [r[1] for r in table],
        "mean SNR (dB)", lines, "cosine similarity"))
    written += [out / "snr_similarity.csv", out / "snr_similarity.svg"]

    written += [out / "reference_dprime.csv", render_reference(out)]
    notes = out / "notes.txt"
    notes.write_text("\n".join(variant_notes()) + "\n")
    written.append(notes)
    return written

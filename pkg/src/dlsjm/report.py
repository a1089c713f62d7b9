"""Static HTML summary of a completed run directory."""
from __future__ import annotations

import csv
import json
from html import escape
from pathlib import Path

import numpy as np

from .io import read_matrix_csv
from .plots import curves_svg, scatter_svg

__all__ = ["MissingRunError", "render_report"]

_STYLE = """
body { font-family: sans-serif; margin: 2em; max-width: 1100px; }
table { border-collapse: collapse; font-size: 12px; margin-bottom: 1.5em; }
td, th { border: 1px solid #ccc; padding: 2px 6px; text-align: right; }
.figs { display: flex; flex-wrap: wrap; gap: 1em; }
"""


class MissingRunError(FileNotFoundError):
    pass


def _rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _table(rows: list[dict], columns: list[str], limit: int = 0) -> str:
    shown = rows[:limit] if limit else rows
    out = ["<table><tr>" + "".join(f"<th>{escape(c)}</th>" for c in columns) + "</tr>"]
    for r in shown:
        cells = []
        for c in columns:
            v = str(r.get(c, ""))
            if "." in v:
                try:
                    v = f"{float(v):.3f}"
                except ValueError:
                    pass
            cells.append(f"<td>{escape(str(v))}</td>")
        out.append("<tr>" + "".join(cells) + "</tr>")
    out.append("</table>")
    if limit and len(rows) > limit:
        out.append(f"<p>{len(rows) - limit} more rows in the CSV.</p>")
    return "\n".join(out)


def _labels(path: Path, key: str) -> dict[str, int]:
    if not path.exists():
        return {}
    return {r[key]: int(r["cluster"]) - 1 for r in _rows(path)}


def _positions(path: Path) -> tuple[list[str], np.ndarray]:
    rows = _rows(path)
    names = [r[next(iter(r))] for r in rows]
    cols = list(rows[0].keys())[1:]
    return names, np.array([[float(r[c]) for c in cols] for r in rows])


def render_report(run_dir) -> Path:
    """Write ``report.html`` into ``run_dir``; curves use posterior means of the intercepts."""
    d = Path(run_dir)
    needed = ["manifest.json", "beta_summary.csv", "theta_summary.csv", "positions_person.csv",
              "positions_item.csv", "person_dist.csv", "item_dist.csv"]
    missing = [n for n in needed if not (d / n).exists()]
    if missing:
        raise MissingRunError(f"{d} is not a completed run; missing {missing}")
    manifest = json.loads((d / "manifest.json").read_text())
    beta = _rows(d / "beta_summary.csv")
    theta = _rows(d / "theta_summary.csv")
    persons, z = _positions(d / "positions_person.csv")
    items, w = _positions(d / "positions_item.csv")
    plab = _labels(d / "clusters_person.csv", "person")
    ilab = _labels(d / "clusters_item.csv", "item")
    plabels = np.array([plab.get(p, 0) for p in persons])
    ilabels = np.array([ilab.get(i, 0) for i in items])

    pdist, _ = read_matrix_csv(d / "person_dist.csv")
    idist, _ = read_matrix_csv(d / "item_dist.csv")
    figs = [
        scatter_svg(z, plabels, "Persons (posterior mean positions)", point_names=persons),
        scatter_svg(w, ilabels, "Items (posterior mean positions)", point_names=items, overlay=w,
                    overlay_labels=ilabels, overlay_names=items),
        curves_svg([float(r["mean"]) for r in beta], float(pdist.max()),
                   "P(pair of persons both correct on item) by distance"),
        curves_svg([float(r["mean"]) for r in theta], float(idist.max()),
                   "P(pair of items both correct for person) by distance", labels=plabels),
    ]
    zero = [r["person"] for r in theta if r["zero_score"] == "1"]
    acc = manifest.get("acceptance", {}).get("sampling_window_mean", {})
    clusters = manifest.get("clusters", {})
    parts = [
        "<!DOCTYPE html>", "<html><head><meta charset='utf-8'><title>DLSJM run report</title>",
        f"<style>{_STYLE}</style></head><body>",
        "<h1>DLSJM run report</h1>",
        f"<p>{len(persons)} respondents, {len(items)} items, {manifest.get('n_samples')} retained samples.</p>",
        "<h2>Latent spaces and probability curves</h2>", "<div class='figs'>",
        *figs, "</div>",
        "<h2>Acceptance rates after burn-in</h2>",
        _table([{"block": b, "rate": f"{r:.3f}"} for b, r in acc.items()], ["block", "rate"]),
        "<h2>Clusters</h2>",
        _table([{"side": s, **{k: str(v) for k, v in (c or {}).items()}} for s, c in clusters.items()],
               ["side", "n_clusters", "k_neighbors", "explained_variance", "sizes"]),
        "<h2>Item intercepts</h2>",
        _table(beta, ["item", "mean", "hpd_lower", "hpd_upper", "total_correct"]),
        "<h2>Person intercepts</h2>",
        f"<p>Respondents with a total score of 0 (prior-dominated intercepts): {escape(', '.join(zero)) or 'none'}.</p>",
        _table(theta, ["person", "mean", "hpd_lower", "hpd_upper", "score", "zero_score"], limit=50),
        "</body></html>",
    ]
    out = d / "report.html"
    out.write_text("\n".join(parts) + "\n")
    return out

"""Campaign summaries: one CSV row per iteration plus a trade-off plot."""

from __future__ import annotations

import csv
from pathlib import Path

from ..accounting import format_pct
from ..errors import ReportError
from ..robustness import format_delta, plot_tradeoff
from .campaign import STATE_FILE, PruneCampaignState

REPORT_CSV = "report.csv"
TRADEOFF_PNG = "tradeoff.png"
LATENCY_COLUMNS = ("latency_ms",)


def delta_keys(state: PruneCampaignState) -> list[str]:
    """Benchmarks in report order: clean, attacks as configured, corruption mean."""
    deltas = state.iterations[0].robustness.get("delta_pp") or {}
    keys = [k for k in deltas if k != "mean_corruption"]
    if "mean_corruption" in deltas:
        keys.append("mean_corruption")
    return keys


def report_rows(state: PruneCampaignState) -> list[dict]:
    if not state.iterations:
        raise ReportError("campaign has no iterations")
    keys = delta_keys(state)
    rows = []
    for rec in state.iterations:
        try:
            deltas = rec.robustness["delta_pp"]
            row = {
                "iteration": rec.iteration,
                "victim": rec.victim or "",
                "flops": rec.cost["flops"],
                "flop_reduction_pct": format_pct(rec.cost["flop_reduction_pct"]),
                "params": rec.cost["params"],
                "clean_acc": f"{rec.robustness['clean_acc']:.2f}",
            }
            row.update({f"delta_{k}": format_delta(deltas[k]) for k in keys})
        except KeyError as exc:
            raise ReportError(f"iteration {rec.iteration} lacks {exc}") from exc
        row["co2_kg"] = f"{rec.co2_kg:.6g}"
        lat = rec.cost.get("latency_ms")
        row["latency_ms"] = "" if lat is None else f"{lat:.3f}"
        rows.append(row)
    return rows


def write_report(campaign_dir, out_dir=None) -> tuple[Path, Path]:
    campaign_dir = Path(campaign_dir)
    out = Path(out_dir) if out_dir else campaign_dir
    out.mkdir(parents=True, exist_ok=True)
    state = PruneCampaignState.load(campaign_dir / STATE_FILE)
    rows = report_rows(state)
    csv_path = out / REPORT_CSV
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)

    reductions = [r.cost["flop_reduction_pct"] for r in state.iterations]
    curves = {k: [r.robustness["delta_pp"][k] for r in state.iterations] for k in delta_keys(state)}
    plot_path = out / TRADEOFF_PNG
    plot_tradeoff(reductions, curves, plot_path, title=f"{state.removals} removals ({state.status})")
    return csv_path, plot_path

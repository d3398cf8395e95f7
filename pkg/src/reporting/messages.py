"""Console message formatting for the CLI.

Keep all human-facing strings here so the pipeline modules stay clean.
"""

from __future__ import annotations

from typing import Optional

from src.explainers.summary import XaiQualitySummary
from src.llm.client import Completion
from src.llm.parser import ParsedExplanation
from src.llm.prompt import Instance, format_value
from src.thesaurus.benchmark import BenchmarkReport, RefinedAssignment, Selection
from src.validity.indices import format_index


DEFAULT_PREAMBLE = (
    "The records come from wearable devices and self-reports: physical activity, sleep, heart rate "
    "and location, aggregated per participant. Records were grouped by a clustering model into "
    "well-being profiles, and a transparent classifier was trained to reproduce those groups."
)


def _fmt(x: Optional[float], digits: int = 3) -> str:
    v = format_index(x)
    if v is None:
        return "n/a"
    if isinstance(v, str):
        return v
    return f"{v:.{digits}f}"


def format_benchmark(report: BenchmarkReport) -> str:
    ok = len(report.ok_rows())
    failed = sum(r.status.value == "failed" for r in report.rows)
    skipped = sum(r.status.value == "skipped" for r in report.rows)
    return f"📊 Benchmark: {len(report.rows)} cells ({ok} ok, {failed} failed, {skipped} skipped), seed {report.seed}"


def format_winner(selection: Selection) -> str:
    row = selection.row
    return (
        f"🏆 Winner: {row.algorithm} on {row.variant} (k={row.k})\n"
        f"{selection.criterion}: {_fmt(row.index(selection.criterion))} | "
        f"DBI: {_fmt(row.index('dbi'))} | CHI: {_fmt(row.index('chi'), 1)}\n"
        f"Rule: {selection.rationale}"
    )


def format_refinement(refined: RefinedAssignment) -> str:
    o = refined.outliers
    return (
        f"✂️ IQR (factor {o.factor:g}) removed {o.rows_removed}/{o.rows_before} rows\n"
        f"Silhouette: {_fmt(refined.silhouette_before)} → {_fmt(refined.silhouette_after)}"
    )


def format_xai_summary(s: XaiQualitySummary) -> str:
    lines = [
        f"🔍 Explanation quality over {s.n_instances} instances",
        f"Coefficients: accuracy {_fmt(s.coefficients_accuracy, 2)}, F1 {_fmt(s.coefficients_f1, 2)}",
        f"LIME: fidelity {_fmt(s.lime_fidelity, 2)}",
        f"Anchors: precision {_fmt(s.anchors_precision, 2)}, coverage {_fmt(s.anchors_coverage, 2)}",
        f"Counterfactuals: proximity {_fmt(s.cf_proximity, 2)}, sparsity {_fmt(s.cf_sparsity, 2)}",
    ]
    if s.anchors_below_threshold:
        lines.append(f"{s.anchors_below_threshold} anchor rules missed the precision threshold")
    if s.cf_not_found:
        lines.append(f"{s.cf_not_found} instances have no counterfactual")
    return "\n".join(lines)


def format_explanation(instance: Instance, parsed: ParsedExplanation, completion: Completion) -> str:
    lines = [
        f"🧾 Instance {instance.instance_id} → {instance.cluster_label}",
        "",
        "For experts (feature ranking):",
    ]
    lines += [f"  {i}. {name} ({sign})" for i, (name, sign) in enumerate(parsed.technical_ranking, start=1)]
    lines += [
        "",
        "In plain words:",
        f"  {parsed.narrative}",
        "",
        f"Model: {completion.model} via {completion.backend} | parse: {parsed.parse_path.value}",
    ]
    return "\n".join(lines)


def format_instance_features(instance: Instance) -> str:
    return ", ".join(f"{name}={format_value(v)}" for name, v in instance.features)


def format_quality_row(row: dict) -> str:
    return (
        f"{row['model']} / {row['technique']} (n={int(row['n'])}): "
        f"spearman {row['spearman']:.3f}, ndcg diff {row['ndcg_difference']:.3f}, "
        f"euclidean {row['euclidean']:.3f}, ARI {row['readability']:.2f}, "
        f"coherence {row['coherence']:.3f}, grammar {row['grammar_errors']:.1f}"
    )


def format_error(exc: Exception) -> str:
    return f"❌ {type(exc).__name__}: {exc}"

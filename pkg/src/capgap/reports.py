"""Report serialization: canonical JSON plus human-readable markdown."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .errors import StorageError
from .gaps import GapReport
from .model import ExperimentReport, Recommendation, canonical_json
from .stats import SeparationResult
from .synthesis import RecommendationFailure, SynthesisRun

Report = Union[GapReport, ExperimentReport, SeparationResult, SynthesisRun]


def _fmt(value: Optional[float], digits: int, signed: bool = False) -> str:
    if value is None:
        return "unscorable"
    spec = f"{{:+.{digits}f}}" if signed else f"{{:.{digits}f}}"
    return spec.format(value)


def experiment_markdown(
    report: ExperimentReport, labels: Optional[Mapping[str, str]] = None
) -> str:
    labels = labels or {}
    lines = [
        f"# Removal experiment: {report.pattern_name}",
        "",
        "| Subgoal | Original | After | Δ_abs | Δ_rel (%) | Retention (%) |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    for i, row in enumerate(report.rows):
        name = labels.get(row.subgoal_id, row.subgoal_id)
        if row.is_target:
            name = f"**{name}*** "
        retention = f"{report.retention_pct:.1f}" if i == 0 else ""
        lines.append(
            f"| {name} | {_fmt(row.original_mean, 3)} | {_fmt(row.after_mean, 3)} "
            f"| {_fmt(row.delta_abs, 3, signed=True)} "
            f"| {_fmt(row.delta_rel_pct, 2, signed=True)} | {retention} |"
        )
    lines.append("")
    lines.append("\\* target subgoal of this removal strategy.")
    if report.emptied:
        lines.append("")
        lines.append("Warning: the removal matched every sample; nothing survived.")
    return "\n".join(lines) + "\n"


def gap_markdown(report: GapReport) -> str:
    lines = [f"# Gap report (tau = {report.tau})", ""]
    if not report.findings and not report.unscorable_subgoal_ids:
        lines.append("No subgoal fell below the threshold.")
    for finding in report.findings:
        lines.append(f"## {report.label_for(finding.subgoal_id)}")
        lines.append("")
        for issue in finding.issues:
            lines.append(f"- Issue: {issue}")
        lines.append("")
        lines.append(
            f"Evidence: {finding.evidence_count} low-score explanation(s), "
            f"truncated to {finding.evidence_char_limit} characters each."
        )
        lines.append("")
    for sid in report.unscorable_subgoal_ids:
        lines.append(f"## {report.label_for(sid)}")
        lines.append("")
        lines.append("- unscorable: no successful evaluations for this subgoal")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def insights_markdown(
    report: GapReport,
    recommendations: Sequence[Union[Recommendation, RecommendationFailure]],
) -> str:
    """Issue/fix boxes pairing each finding with its recommendation."""
    by_subgoal = {r.subgoal_id: r for r in recommendations}
    lines = [f"# Coverage insights (tau = {report.tau})", ""]
    for finding in report.findings:
        lines.append(f"## {report.label_for(finding.subgoal_id)}")
        lines.append("")
        for issue in finding.issues:
            lines.append(f"- Issue: {issue}")
        recommendation = by_subgoal.get(finding.subgoal_id)
        if isinstance(recommendation, Recommendation):
            for fix in recommendation.remediation:
                lines.append(f"- Fix: {fix}")
            if recommendation.synthesis_plan is not None:
                plan = recommendation.synthesis_plan
                lines.append(
                    f"- Synthesis: {plan.target_count} sample(s) at threshold "
                    f"{plan.accept_threshold} within {plan.max_iterations} iteration(s)"
                )
        elif isinstance(recommendation, RecommendationFailure):
            lines.append(f"- Fix: unavailable ({recommendation.reason})")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def separation_markdown(result: SeparationResult) -> str:
    n = len(result.target_deltas)
    lines = [
        "# Separation summary",
        "",
        f"Across {n} removal experiments, mean relative degradation is "
        f"{result.mean_target_degradation:.1f}% for targets versus "
        f"{result.mean_nontarget_degradation:.1f}% for non-targets "
        f"(raw signed means {result.mean_target:.2f}% vs {result.mean_nontarget:.2f}%). "
        f"The effect size is Cohen's d = {result.cohens_d:.2f}, and the paired test "
        f"across removal experiments gives t = {result.t_statistic:.3f} "
        f"(two-sided p = {result.p_value:.4g}).",
        "",
        f"Convention: {result.convention_note}",
    ]
    return "\n".join(lines) + "\n"


def synthesis_markdown(run: SynthesisRun) -> str:
    lines = [
        f"# Synthesis run: {run.subgoal_id}",
        "",
        f"- accepted: {len(run.accepted)} of {run.target_count} requested",
        f"- rejected candidates: {run.rejected_count}",
        f"- iterations used: {run.iterations_used} of {run.max_iterations}",
        f"- acceptance threshold: {run.accept_threshold}",
    ]
    return "\n".join(lines) + "\n"


def render_markdown(report: Report, labels: Optional[Mapping[str, str]] = None) -> str:
    if isinstance(report, ExperimentReport):
        return experiment_markdown(report, labels)
    if isinstance(report, GapReport):
        return gap_markdown(report)
    if isinstance(report, SeparationResult):
        return separation_markdown(report)
    if isinstance(report, SynthesisRun):
        return synthesis_markdown(report)
    raise StorageError(f"no markdown renderer for {type(report).__name__}")


def write_report(
    report: Report,
    format: str,
    path: str | Path,
    labels: Optional[Mapping[str, str]] = None,
) -> Path:
    """Serialize a report deterministically; same report, same bytes."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if format == "json":
            path.write_text(canonical_json(report.to_dict()) + "\n", encoding="utf-8")
        elif format == "markdown":
            path.write_text(render_markdown(report, labels), encoding="utf-8")
        else:
            raise StorageError(f"unknown report format {format!r}")
    except OSError as exc:
        raise StorageError(f"cannot write report to {path}: {exc}") from exc
    return path

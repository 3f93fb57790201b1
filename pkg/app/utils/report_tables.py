"""
보고서 출력 형식

- JSON: {"tool_version", "command", "result"} 봉투, 비유한 실수는 "inf"/"-inf"/"nan" 문자열로 표기
- 텍스트: 고정 소수점 3자리, 로케일과 무관한 정렬 표
"""

import json
import math
from typing import Any, List, Optional, Sequence, Tuple

import pandas as pd

from .. import __version__
from ..dto.advising import AdvisorRecommendation
from ..dto.diagnostics import DiagnosticsReport
from ..dto.estimation import EstimateResult, to_plain
from ..dto.scenario import McSummary, TheoryComparison


def json_ready(value: Any) -> Any:
    """JSON 표준에 없는 inf/nan을 문자열로 바꾼 순수 파이썬 값"""
    value = to_plain(value)
    if isinstance(value, dict):
        return {key: json_ready(item) for key, item in value.items()}
    if isinstance(value, list):
        return [json_ready(item) for item in value]
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def envelope(command: str, result: Any) -> dict:
    if hasattr(result, "model_dump"):
        result = result.model_dump(mode="python")
    elif isinstance(result, list):
        result = [item.model_dump(mode="python") if hasattr(item, "model_dump") else item for item in result]
    return {"tool_version": __version__, "command": command, "result": json_ready(result)}


def envelope_text(command: str, result: Any) -> str:
    return json.dumps(envelope(command, result), indent=2, ensure_ascii=False) + "\n"


def fixed(value: Optional[float]) -> str:
    """소수점 3자리 고정 표기 (None은 '-')"""
    if value is None:
        return "-"
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return f"{value:.3f}"


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """첫 열은 왼쪽, 나머지는 오른쪽 정렬 (셀은 fixed 등으로 미리 문자열화)"""
    frame = pd.DataFrame([list(row) for row in rows], columns=list(headers), dtype=object)
    if frame.empty:
        return "  ".join(headers) + "\n"
    first = headers[0]
    width = max(len(first), int(frame[first].str.len().max()))
    text = frame.to_string(index=False, formatters={first: lambda cell: cell.ljust(width)})
    return "\n".join(line.rstrip() for line in text.splitlines()) + "\n"


ESTIMATE_HEADERS = ["Method", "Estimand", "Estimate", "Std.Err", "95% CI", "N", "Note"]


def estimate_rows(entries: Sequence[Tuple[str, Optional[EstimateResult], Optional[str]]]) -> List[List[str]]:
    rows = []
    for method, result, note in entries:
        if result is None:
            rows.append([method, "-", "-", "-", "-", "-", note or ""])
            continue
        interval = f"[{fixed(result.ci_low)}, {fixed(result.ci_high)}]"
        rows.append([method, result.estimand.value, fixed(result.estimate), fixed(result.std_err), interval,
                     str(result.n_used), note or ""])
    return rows


def estimate_table(entries: Sequence[Tuple[str, Optional[EstimateResult], Optional[str]]]) -> str:
    """방법별 처치효과 추정 비교 표"""
    return render_table(ESTIMATE_HEADERS, estimate_rows(entries))


def diagnostics_text(report: DiagnosticsReport) -> str:
    sections = []
    tables = ([report.balance_by_treatment] if report.balance_by_treatment else []) + list(report.balance_by_instrument)
    for table in tables:
        rows = [[row.covariate, fixed(row.mean_0), fixed(row.mean_1), fixed(row.pooled_sd), fixed(row.smd),
                 "zero variance" if row.zero_variance else ""] for row in table.rows]
        sections.append(f"Balance by {table.group}\n"
                        + render_table(["Covariate", "Mean(0)", "Mean(1)", "Pooled SD", "SMD", "Flag"], rows))

    tests = []
    for label, f_report in (("First-stage F", report.first_stage), ("First-stage F (HC0)", report.first_stage_robust)):
        if f_report is not None:
            tests.append([label, fixed(f_report.f), f"{f_report.df1}, {f_report.df2}", fixed(f_report.p),
                          "perfect fit" if f_report.infinite else ""])
    if report.sargan is not None:
        tests.append(["Sargan J", fixed(report.sargan.j), str(report.sargan.df), fixed(report.sargan.p),
                      report.sargan.flag or ""])
    if tests:
        sections.append("Instrument tests\n" + render_table(["Test", "Statistic", "df", "p", "Flag"], tests))

    if report.overlap is not None:
        o = report.overlap
        sections.append("Overlap\n" + render_table(
            ["n", "min", "max", "<0.01", "<0.05", ">0.95", ">0.99", "weight>10"],
            [[str(o.n), fixed(o.min), fixed(o.max), str(o.below_001), str(o.below_005), str(o.above_095),
              str(o.above_099), str(o.extreme_weight_count)]],
        ))
    if report.bias_ratio is not None:
        b = report.bias_ratio
        sections.append("Bias ratio\n" + render_table(
            ["bias_ols", "bias_tsls", "ratio", "Flags"],
            [[fixed(b.bias_ols), fixed(b.bias_tsls), fixed(b.ratio), "; ".join(b.flags)]],
        ))
    if report.epv is not None:
        e = report.epv
        sections.append("Events per variable\n" + render_table(
            ["events", "parameters", "EPV", "Flags"],
            [[str(e.events), str(e.n_parameters), fixed(e.epv), "; ".join(e.flags)]],
        ))
    if report.orthogonality is not None:
        p = report.orthogonality
        sections.append("Orthogonality\n" + render_table(
            ["Score", "linear", "quadratic", "Passes"],
            [["DML", fixed(p.linear), fixed(p.quadratic), "yes" if p.passes else "no"],
             ["naive", fixed(p.naive_linear), fixed(p.naive_quadratic), "yes" if p.naive_passes else "no"]],
        ))
    if report.notes:
        sections.append("Notes\n" + "".join(f"  - {note}\n" for note in report.notes))
    return "\n".join(sections)


SUMMARY_HEADERS = ["Estimator", "Mean", "Bias", "SD", "Mean SE", "RMSE", "Coverage", "Reject", "Errors"]


def summary_text(summary: McSummary) -> str:
    rows = [[row.label, fixed(row.mean_estimate), fixed(row.mean_bias), fixed(row.empirical_sd),
             fixed(row.mean_std_err), fixed(row.rmse), fixed(row.coverage), fixed(row.rejection_rate),
             str(row.n_errors)] for row in summary.rows]
    oracle = summary.oracle
    header = (f"Scenario {summary.spec_fingerprint[:12]}  n={summary.n}  reps={summary.reps}  "
              f"target={summary.target}\n"
              f"Oracle ATE={fixed(oracle.ate)}  ATT={fixed(oracle.att)}  LATE={fixed(oracle.late)}\n")
    text = header + render_table(SUMMARY_HEADERS, rows)
    if summary.theory is not None:
        theory = summary.theory
        text += (f"Theory: OLS bias={fixed(theory.ols_bias)}  adjusted={fixed(theory.ols_bias_adjusted)}  "
                 f"2SLS inconsistency={fixed(theory.tsls_inconsistency)}\n")
    return text


def comparison_text(comparison: TheoryComparison) -> str:
    rows = [[row.label, row.quantity or "-", fixed(row.empirical_bias), fixed(row.predicted_bias), fixed(row.mcse),
             fixed(row.z), "-" if row.within_tolerance is None else ("yes" if row.within_tolerance else "no")]
            for row in comparison.rows]
    return render_table(["Estimator", "Prediction", "Empirical", "Predicted", "MCSE", "z", "|z|<3"], rows)


def advice_text(advice: AdvisorRecommendation) -> str:
    lines = [f"Recommendation: {advice.recommendation}", "Path:"]
    lines.extend(f"  {step.question} -> {step.answer}" for step in advice.path)
    return "\n".join(lines) + "\n"

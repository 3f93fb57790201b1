"""
워크벤치 명령행 진입점

명령:
- simulate: 구조방정식 설정(JSON)에서 데이터셋 CSV 생성
- estimate: CSV 데이터셋에 추정기 실행 (--method all 이면 방법별 비교 표)
- diagnose: 균형, 도구변수 강도, 과대식별, 겹침, 편향 비율, EPV, DML 직교성 진단
- mc: 몬테카를로 시나리오 실행과 이론 예측 비교
- pool: EstimateResult JSON 파일들을 Rubin 규칙으로 결합
- advise: 방법 선택 흐름도

종료 코드: 0 성공, 1 입력/플래그 오류, 2 수치 계산 실패
"""

import argparse
import json
import logging
import sys
from typing import List, Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .config import settings
from .dto.advising import AdvisorInput
from .dto.dataset import RoleAssignment
from .dto.estimation import EstimateResult, LearnerSpec, MethodOptions
from .dto.scenario import ScenarioConfig
from .dto.simulation import ScmSpec
from .errors import DataValidationError, WorkbenchError
from .models.dataset import Dataset
from .repositories.dataset_repository import atomic_write_text, dataset_csv_text, ingest_csv, load_json
from .utils.advisor import advise
from .utils.diagnostics import diagnose
from .utils.mc_harness import compare_to_theory, run_gamma_z_grid, run_scenario, summary_to_csv
from .utils.method_registry import METHODS, run_all, run_method
from .utils.pooling import pool_rubin
from .utils.report_tables import (advice_text, comparison_text, diagnostics_text, envelope, envelope_text,
                                  estimate_table, summary_text)
from .utils.scm_simulator import oracle_effects, predicted_biases, simulate

logger = logging.getLogger(__name__)

LEARNER_KINDS = ["ols", "ridge", "lasso", "logistic", "forest", "column"]


class UsageError(Exception):
    """argparse 사용법 오류 (종료 코드 1)"""


class WorkbenchArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _column_list(text: str) -> List[str]:
    return [name.strip() for name in text.split(",") if name.strip()]


def _bounds(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected LOW,HIGH")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError("bounds must be numbers")


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers")


def _add_output(parser: argparse.ArgumentParser, formats: Sequence[str] = ("text", "json")) -> None:
    parser.add_argument("--out", help="출력 파일 (기본: 표준 출력)")
    parser.add_argument("--format", choices=list(formats), default=formats[0], help="출력 형식")


def _add_data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="데이터셋 CSV")
    parser.add_argument("--outcome", required=True, help="결과 열")
    parser.add_argument("--treatment", required=True, help="처치 열")
    parser.add_argument("--covariates", type=_column_list, default=[], help="공변량 열 (쉼표 구분)")
    parser.add_argument("--instruments", type=_column_list, default=[], help="도구변수 열 (쉼표 구분)")
    parser.add_argument("--continuous-treatment", action="store_true", help="처치 0/1 검증 생략")
    parser.add_argument("--seed", type=int, default=0, help="난수 시드")


def build_parser() -> argparse.ArgumentParser:
    parser = WorkbenchArgumentParser(prog="workbench", description="Causal effect estimation workbench")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=WorkbenchArgumentParser)

    sim = commands.add_parser("simulate", help="구조방정식 설정에서 데이터 생성")
    sim.add_argument("--spec", required=True, help="ScmSpec JSON")
    sim.add_argument("--n", type=int, required=True, help="행 수")
    sim.add_argument("--seed", type=int, default=0, help="난수 시드")
    sim.add_argument("--instrument", help="오라클 LATE 계산용 도구변수")
    sim.add_argument("--report", action="store_true", help="CSV 대신 오라클/이론 예측 보고서 출력")
    sim.add_argument("--n-probe", type=int, default=None, help="이론 예측 프로브 표본 크기")
    _add_output(sim)

    est = commands.add_parser("estimate", help="추정기 실행")
    _add_data(est)
    est.add_argument("--method", required=True, help=f"{', '.join(sorted(METHODS))} 또는 all")
    est.add_argument("--options", help="MethodOptions JSON (아래 플래그가 우선)")
    est.add_argument("--ps-model", choices=LEARNER_KINDS, help="성향점수 모형")
    est.add_argument("--ps-column", help="--ps-model column 일 때 성향점수 열")
    est.add_argument("--outcome-model", choices=LEARNER_KINDS, help="결과 모형")
    est.add_argument("--learner", choices=LEARNER_KINDS, help="DML 장애모수 학습기")
    est.add_argument("--penalty", type=float, help="lasso/ridge 학습기 벌점")
    est.add_argument("--n-trees", type=int, help="포레스트 트리 수")
    est.add_argument("--k-folds", type=int, help="교차적합 폴드 수")
    est.add_argument("--comparison-mode", action="store_true", help="k-folds 1 허용")
    est.add_argument("--stabilize", action="store_true", help="안정화 가중치")
    est.add_argument("--trim", type=_bounds, help="성향점수 절단 LOW,HIGH")
    est.add_argument("--horvitz-thompson", action="store_true", help="Horvitz-Thompson 정규화")
    est.add_argument("--iptw-estimand", choices=["ATE", "ATT"], help="IPTW 추정 대상")
    est.add_argument("--variance", choices=["sandwich", "bootstrap"], help="IPTW 분산 방식")
    est.add_argument("--lambda", dest="lasso_lambda", type=float, help="Post-LASSO 벌점")
    est.add_argument("--first-stage-link", choices=["linear", "logistic"], help="1단계 연결함수")
    est.add_argument("--no-split-cross-fit", action="store_true", help="표본분할 IV 한 방향만 사용")
    _add_output(est)

    diag = commands.add_parser("diagnose", help="가정 점검 진단")
    _add_data(diag)
    diag.add_argument("--ps-model", choices=LEARNER_KINDS, default="logistic", help="겹침 진단용 성향점수 모형")
    diag.add_argument("--ps-column", help="--ps-model column 일 때 성향점수 열")
    diag.add_argument("--omitted", help="편향 비율용 누락 교란 열")
    diag.add_argument("--beta2", type=float, help="누락 교란의 결과 계수")
    diag.add_argument("--bootstrap-reps", type=int, default=0, help="편향 비율 부트스트랩 재표본 수")
    diag.add_argument("--orthogonality", choices=LEARNER_KINDS, help="지정한 학습기로 DML 직교성 확인")
    diag.add_argument("--k-folds", type=int, help="직교성 확인 교차적합 폴드 수")
    _add_output(diag)

    mc = commands.add_parser("mc", help="몬테카를로 시나리오")
    mc.add_argument("--config", required=True, help="ScenarioConfig JSON")
    mc.add_argument("--max-concurrent", type=int, default=None, help="동시 실행 반복 수")
    mc.add_argument("--compare", action="store_true", help="이론 예측 비교 표 포함")
    mc.add_argument("--gamma-z-scales", type=_float_list, help="도구변수 강도 배수 목록 (예: 1,0.3,0.1)")
    _add_output(mc, ("text", "json", "csv"))

    pool = commands.add_parser("pool", help="Rubin 규칙 결합")
    pool.add_argument("--results", nargs="+", required=True, help="EstimateResult JSON 파일")
    _add_output(pool)

    adv = commands.add_parser("advise", help="방법 선택 흐름도")
    adv.add_argument("--unobserved-confounding", choices=["yes", "no"])
    adv.add_argument("--suitable-ivs", choices=["yes", "no"])
    adv.add_argument("--late-useful", choices=["yes", "no"])
    adv.add_argument("--sample-size", choices=["low", "high"])
    adv.add_argument("--iv-strength-or-proportion", choices=["weak_or_extreme", "ok"])
    _add_output(adv)
    return parser


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        atomic_write_text(out, text)
        logger.info(f"출력 저장 완료: {out}")
    else:
        sys.stdout.write(text)


def _validated(model, payload, step: str):
    try:
        return model.model_validate(payload)
    except ValidationError as e:
        raise DataValidationError(step, f"invalid {model.__name__}: {e.errors()[0]['msg']}",
                                  {"errors": json.loads(e.json())})


def _load_dataset(args) -> Dataset:
    roles = RoleAssignment(
        outcome=args.outcome,
        treatment=args.treatment,
        covariates=args.covariates,
        instruments=args.instruments,
        binary_treatment=not args.continuous_treatment,
    )
    return ingest_csv(args.data, roles)


def _learner(kind: Optional[str], base: LearnerSpec, args, column: Optional[str] = None) -> LearnerSpec:
    if kind is None:
        return base
    update = {"kind": kind}
    if column is not None:
        update["column"] = column
    if getattr(args, "penalty", None) is not None and kind in ("lasso", "ridge"):
        update["penalty"] = args.penalty
    if getattr(args, "n_trees", None) is not None and kind == "forest":
        update["n_trees"] = args.n_trees
    return LearnerSpec.model_validate({**base.model_dump(), **update})


def _method_options(args) -> MethodOptions:
    base = _validated(MethodOptions, load_json(args.options), "options") if args.options else MethodOptions()
    update = {}
    if args.covariates:
        update["covariates"] = args.covariates
    if args.instruments:
        update["instruments"] = args.instruments
    update["ps_model"] = _learner(args.ps_model, base.ps_model, args, args.ps_column)
    update["outcome_model"] = _learner(args.outcome_model, base.outcome_model, args)
    update["learner"] = _learner(args.learner, base.learner, args)
    flags = {
        "k_folds": args.k_folds,
        "trim": args.trim,
        "iptw_estimand": args.iptw_estimand,
        "variance": args.variance,
        "lasso_lambda": args.lasso_lambda,
        "first_stage_link": args.first_stage_link,
    }
    update.update({key: value for key, value in flags.items() if value is not None})
    for key in ("comparison_mode", "stabilize", "horvitz_thompson"):
        if getattr(args, key):
            update[key] = True
    if args.no_split_cross_fit:
        update["split_cross_fit"] = False
    return _validated(MethodOptions, {**base.model_dump(), **update}, "options")


def cmd_simulate(args) -> None:
    spec = _validated(ScmSpec, load_json(args.spec), "spec")
    ds = simulate(spec, args.n, args.seed)
    if args.report or args.format == "json":
        report = {
            "n_rows": ds.n_rows,
            "seed": args.seed,
            "spec_fingerprint": spec.fingerprint(),
            "oracle": oracle_effects(ds, args.instrument).model_dump(),
        }
        if args.report:
            report["theory"] = predicted_biases(spec, args.n_probe or settings.probe_n, args.seed).model_dump()
        _emit(envelope_text("simulate", report), args.out)
        return
    _emit(dataset_csv_text(ds), args.out)


def cmd_estimate(args) -> None:
    ds = _load_dataset(args)
    options = _method_options(args)
    if args.method == "all":
        entries = run_all(ds, options, args.seed)
        if args.format == "json":
            payload = [{"method": method, "result": result.model_dump() if result else None, "error": error}
                       for method, result, error in entries]
            _emit(envelope_text("estimate", payload), args.out)
        else:
            _emit(estimate_table(entries), args.out)
        return
    if args.method not in METHODS:
        raise DataValidationError("estimate", f"unknown method: {args.method}", {"methods": sorted(METHODS)})
    result = run_method(ds, args.method, options, args.seed)
    if args.format == "json":
        _emit(envelope_text("estimate", result), args.out)
    else:
        _emit(estimate_table([(args.method, result, None)]), args.out)


def cmd_diagnose(args) -> None:
    ds = _load_dataset(args)
    ps_model = LearnerSpec(kind=args.ps_model, column=args.ps_column)
    report = diagnose(ds, args.covariates or None, args.instruments or None, ps_model, args.omitted, args.beta2,
                      args.bootstrap_reps, args.seed,
                      LearnerSpec(kind=args.orthogonality) if args.orthogonality else None, args.k_folds)
    if args.format == "json":
        _emit(envelope_text("diagnose", report), args.out)
    else:
        _emit(diagnostics_text(report), args.out)


def _scaled_specs(config: ScenarioConfig, scales: Optional[Sequence[float]]) -> List[ScmSpec]:
    if not scales:
        return [config.spec]
    return [config.spec.model_copy(update={"gamma_z": [value * scale for value in config.spec.gamma_z]})
            for scale in scales]


def cmd_mc(args) -> None:
    config = _validated(ScenarioConfig, load_json(args.config), "config")
    for invocation in config.estimators:
        if invocation.method not in METHODS:
            raise DataValidationError("mc", f"unknown method: {invocation.method}", {"methods": sorted(METHODS)})
    if args.gamma_z_scales:
        summaries = run_gamma_z_grid(config, args.gamma_z_scales, args.max_concurrent)
    else:
        summaries = [run_scenario(config, args.max_concurrent)]

    if args.format == "csv":
        _emit("".join(summary_to_csv(summary) for summary in summaries), args.out)
        return
    comparisons = []
    if args.compare:
        specs = _scaled_specs(config, args.gamma_z_scales)
        comparisons = [compare_to_theory(summary, spec, config) for summary, spec in zip(summaries, specs)]
    if args.format == "json":
        payload = {"summaries": [summary.model_dump() for summary in summaries],
                   "comparisons": [comparison.model_dump() for comparison in comparisons]}
        _emit(envelope_text("mc", payload), args.out)
        return
    text = "\n".join(summary_text(summary) for summary in summaries)
    if comparisons:
        text += "\nTheory comparison\n" + "\n".join(comparison_text(comparison) for comparison in comparisons)
    _emit(text, args.out)


def _result_documents(document) -> List[dict]:
    if isinstance(document, dict) and "result" in document and "command" in document:
        document = document["result"]
    return document if isinstance(document, list) else [document]


def cmd_pool(args) -> None:
    results = []
    for path in args.results:
        for item in _result_documents(load_json(path)):
            results.append(_validated(EstimateResult, item, "pool"))
    pooled = pool_rubin(results)
    if args.format == "json":
        _emit(envelope_text("pool", pooled), args.out)
    else:
        _emit(estimate_table([(f"{pooled.method} (pooled, m={pooled.metadata['m']})", pooled, None)]), args.out)


def cmd_advise(args) -> None:
    answers = AdvisorInput(
        unobserved_confounding=args.unobserved_confounding,
        suitable_ivs=args.suitable_ivs,
        late_useful=args.late_useful,
        sample_size=args.sample_size,
        iv_strength_or_proportion=args.iv_strength_or_proportion,
    )
    advice = advise(answers)
    if args.format == "json":
        _emit(envelope_text("advise", advice), args.out)
    else:
        _emit(advice_text(advice), args.out)


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "diagnose": cmd_diagnose,
    "mc": cmd_mc,
    "pool": cmd_pool,
    "advise": cmd_advise,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    명령 실행

    Args:
        argv: 인자 목록 (기본: sys.argv[1:])

    Returns:
        종료 코드 (0 성공, 1 입력 오류, 2 수치 실패)
    """
    logging.basicConfig(level=getattr(logging, settings.log_level.upper(), logging.INFO), stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return 1
    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)

    try:
        COMMANDS[args.command](args)
        return 0
    except WorkbenchError as e:
        logger.error(f"{e.step} 실패: {e.message}")
        sys.stderr.write(f"error: {e.message}\n")
        return e.exit_code
    except Exception as e:
        logger.error(f"{args.command} 처리 중 예상치 못한 오류: {str(e)}")
        sys.stderr.write(f"error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

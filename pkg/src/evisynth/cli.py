"""Command-line interface: validate, estimate, plot, score, reward, infer."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .corpus import (
    CorpusError,
    join_predictions,
    load_corpus,
    load_predictions,
    save_predictions,
    scan_corpus,
)
from .errors import ValidationError
from .forest import make_plot_spec, plot_table, render_svg
from .gateway import (
    ENV_ENDPOINT,
    ENV_MODEL,
    ENV_TOKEN,
    GatewayConfig,
    GatewayError,
    run_batch,
)
from .metrics import aggregate, report_to_json, report_to_text, score_study
from .outcomes import (
    BinaryArms,
    ContinuousArms,
    EffectEstimate,
    Scale,
    estimate,
)
from .rewards import combined_reward, group_advantages
from .schema import SchemaError, parse_response

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

CONFIG_KEYS = ("endpoint", "model", "temperature", "max_tokens", "timeout_s",
               "max_retries", "concurrency")


def _setup_logging() -> None:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")


def _fmt2(value: float) -> str:
    return f"{value:.2f}"


def _estimate_line(est: EffectEstimate, conclusion) -> str:
    name = "RR" if est.scale is Scale.RATIO else "MD"
    if not est.estimable:
        return f"{name} not estimable, conclusion {conclusion.display}"
    return (f"{name} {_fmt2(est.point)}, CI ({_fmt2(est.ci_low)}, "
            f"{_fmt2(est.ci_high)}), conclusion {conclusion.display}")


def _int_like(value: float, name: str) -> int:
    if float(value).is_integer():
        return int(value)
    raise ValidationError(f"{name} must be an integer")


def _cmd_validate(args: argparse.Namespace) -> int:
    records, issues = scan_corpus(args.corpus)
    for issue in issues:
        sys.stderr.write(f"line {issue.line}: {issue.kind}: {issue.message}\n")
    print(f"{len(records)} valid record(s), {len(issues)} issue(s)")
    return EXIT_INVALID if issues else EXIT_OK


def _cmd_estimate(args: argparse.Namespace) -> int:
    if args.binary is not None:
        events_t, total_t, events_c, total_c = (_int_like(v, "counts")
                                                for v in args.binary)
        est, conclusion = estimate(BinaryArms(events_t, total_t, events_c, total_c))
        print(_estimate_line(est, conclusion))
        return EXIT_OK
    if args.continuous is not None:
        mean_t, sd_t, n_t, mean_c, sd_c, n_c = args.continuous
        arms = ContinuousArms(mean_t, sd_t, _int_like(n_t, "group size"),
                              mean_c, sd_c, _int_like(n_c, "group size"))
        est, conclusion = estimate(arms)
        print(_estimate_line(est, conclusion))
        return EXIT_OK
    records = load_corpus(args.corpus)
    print("id\tscale\tpoint\tstd_error\tci_low\tci_high\tconclusion")
    for record in records:
        est, conclusion = estimate(record.gold_data)
        if est.estimable:
            print(f"{record.id}\t{est.scale.value}\t{_fmt2(est.point)}\t"
                  f"{_fmt2(est.std_error)}\t{_fmt2(est.ci_low)}\t"
                  f"{_fmt2(est.ci_high)}\t{conclusion.display}")
        else:
            print(f"{record.id}\t{est.scale.value}\tNA\tNA\tNA\tNA\t"
                  f"{conclusion.display}")
    return EXIT_OK


def _cmd_plot(args: argparse.Namespace) -> int:
    records = load_corpus(args.corpus)
    if not records:
        raise ValidationError("corpus has no loadable records")
    wanted = Scale(args.scale) if args.scale else None
    labeled = []
    for record in records:
        est, _ = estimate(record.gold_data)
        if wanted is None or est.scale is wanted:
            labeled.append((record.id, est))
    if not labeled:
        raise ValidationError("no records on the requested scale")
    spec = make_plot_spec(labeled, include_pooled=args.pooled, width_px=args.width)
    out = Path(args.out)
    out.write_text(render_svg(spec), encoding="utf-8")
    sidecar = out.with_suffix(".json")
    sidecar.write_text(json.dumps(plot_table(spec), sort_keys=True, indent=2) + "\n",
                       encoding="utf-8")
    sys.stderr.write(f"wrote {out} and {sidecar}\n")
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    records = load_corpus(args.corpus)
    predictions = load_predictions(args.predictions)
    pairs = join_predictions(records, predictions)
    if not pairs:
        raise ValidationError("no prediction matched a study record")
    scores = [score_study(parsed, record) for record, parsed in pairs]
    report = aggregate(scores, log_scale_mse=args.mse_log_scale)
    sys.stdout.write(report_to_text(report))
    if args.report:
        Path(args.report).write_text(report_to_json(report), encoding="utf-8")
        sys.stderr.write(f"wrote {args.report}\n")
    if args.figure:
        from .figures import render_score_figure

        render_score_figure(report, scores, args.figure)
        sys.stderr.write(f"wrote {args.figure}\n")
    return EXIT_OK


def _cmd_reward(args: argparse.Namespace) -> int:
    records = {record.id: record for record in load_corpus(args.corpus)}
    predictions = load_predictions(args.predictions)
    groups: dict[str, list] = {}
    for pred in predictions:
        if pred.id not in records:
            sys.stderr.write(f"skipping prediction for unknown id {pred.id}\n")
            continue
        groups.setdefault(pred.id, []).append(pred)
    print("id\tresponse\tcorrectness\tformat\tthought_format\texact\tcombined"
          "\tadvantage")
    for study_id, preds in groups.items():
        gold = records[study_id].gold_data
        breakdowns = [combined_reward(parse_response(p.raw_response), gold)
                      for p in preds]
        advantages: list[float] | None = None
        if len(breakdowns) >= 2:
            advantages = list(group_advantages(
                [b.combined for b in breakdowns]).advantages)
        for index, breakdown in enumerate(breakdowns):
            adv = f"{advantages[index]:.4f}" if advantages is not None else ""
            print(f"{study_id}\t{index}\t{breakdown.correctness:.4f}\t"
                  f"{breakdown.format:.4f}\t{breakdown.thought_format:.4f}\t"
                  f"{breakdown.exact:.4f}\t{breakdown.combined:.4f}\t{adv}")
    return EXIT_OK


def _read_config_file(path: str) -> dict[str, str]:
    settings: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(),
                                   start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValidationError(f"{path} line {line_no}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip().lower()
        if key not in CONFIG_KEYS:
            raise ValidationError(f"{path} line {line_no}: unknown key {key!r}")
        settings[key] = value.strip().strip("\"'")
    return settings


def _gateway_config(args: argparse.Namespace) -> tuple[GatewayConfig, int]:
    file_settings = _read_config_file(args.config) if args.config else {}

    def pick(flag, file_key: str, env_key: str | None, default=None):
        if flag is not None:
            return flag
        if file_key in file_settings:
            return file_settings[file_key]
        if env_key and os.environ.get(env_key):
            return os.environ[env_key]
        return default

    endpoint = pick(args.endpoint, "endpoint", ENV_ENDPOINT)
    model = pick(args.model, "model", ENV_MODEL)
    if not endpoint:
        raise ValidationError(f"no endpoint configured (flag, config file, or "
                              f"{ENV_ENDPOINT})")
    if not model:
        raise ValidationError(f"no model configured (flag, config file, or "
                              f"{ENV_MODEL})")
    config = GatewayConfig(
        endpoint_url=str(endpoint),
        model_name=str(model),
        temperature=float(pick(args.temperature, "temperature", None, 0.7)),
        max_tokens=int(pick(args.max_tokens, "max_tokens", None, 2048)),
        timeout_s=int(pick(args.timeout, "timeout_s", None, 60)),
        max_retries=int(pick(args.retries, "max_retries", None, 3)),
        auth_token=os.environ.get(ENV_TOKEN, ""),
    )
    concurrency = int(pick(args.concurrency, "concurrency", None, 4))
    return config, concurrency


def _cmd_infer(args: argparse.Namespace) -> int:
    config, concurrency = _gateway_config(args)
    records = load_corpus(args.corpus)
    if not records:
        raise ValidationError("corpus has no loadable records")
    predictions = run_batch(config, records, concurrency)
    save_predictions(predictions, args.out)
    filled = sum(1 for p in predictions if p.raw_response)
    sys.stderr.write(f"wrote {len(predictions)} prediction(s) to {args.out} "
                     f"({filled} nonempty)\n")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evisynth",
        description="Evidence-synthesis toolkit: validate corpora, estimate "
                    "effects, plot, score, reward, and run extraction inference.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a JSONL corpus")
    p_validate.add_argument("corpus")
    p_validate.set_defaults(handler=_cmd_validate)

    p_estimate = sub.add_parser("estimate", help="effect estimate with 95% CI")
    group = p_estimate.add_mutually_exclusive_group(required=True)
    group.add_argument("--binary", nargs=4, type=float,
                       metavar=("EVENTS_T", "TOTAL_T", "EVENTS_C", "TOTAL_C"))
    group.add_argument("--continuous", nargs=6, type=float,
                       metavar=("MEAN_T", "SD_T", "N_T", "MEAN_C", "SD_C", "N_C"))
    group.add_argument("--corpus", help="estimate every record in a corpus")
    p_estimate.set_defaults(handler=_cmd_estimate)

    p_plot = sub.add_parser("plot", help="render a forest plot as SVG")
    p_plot.add_argument("corpus")
    p_plot.add_argument("-o", "--out", required=True)
    p_plot.add_argument("--pooled", action="store_true",
                        help="append a fixed-effect pooled diamond")
    p_plot.add_argument("--scale", choices=[s.value for s in Scale],
                        help="keep only records on this scale")
    p_plot.add_argument("--width", type=int, default=800)
    p_plot.set_defaults(handler=_cmd_plot)

    p_score = sub.add_parser("score", help="evaluate predictions against a corpus")
    p_score.add_argument("corpus")
    p_score.add_argument("predictions")
    p_score.add_argument("-o", "--report", help="also write the report as JSON")
    p_score.add_argument("--figure", help="also render a summary figure (PNG/SVG)")
    p_score.add_argument("--mse-log-scale", action="store_true",
                         help="compute MSE on log points for ratio outcomes")
    p_score.set_defaults(handler=_cmd_score)

    p_reward = sub.add_parser("reward", help="per-response rewards and advantages")
    p_reward.add_argument("corpus")
    p_reward.add_argument("predictions")
    p_reward.set_defaults(handler=_cmd_reward)

    p_infer = sub.add_parser("infer", help="fetch completions for a corpus")
    p_infer.add_argument("corpus")
    p_infer.add_argument("-o", "--out", required=True)
    p_infer.add_argument("--config", help="key = value settings file")
    p_infer.add_argument("--endpoint")
    p_infer.add_argument("--model")
    p_infer.add_argument("--temperature", type=float)
    p_infer.add_argument("--max-tokens", type=int, dest="max_tokens")
    p_infer.add_argument("--timeout", type=int)
    p_infer.add_argument("--retries", type=int)
    p_infer.add_argument("--concurrency", type=int)
    p_infer.set_defaults(handler=_cmd_infer)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    _setup_logging()
    try:
        return args.handler(args)
    except (ValidationError, SchemaError, CorpusError) as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_INVALID
    except GatewayError as err:
        sys.stderr.write(f"gateway error: {err}\n")
        return EXIT_IO
    except OSError as err:
        sys.stderr.write(f"io error: {err}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

    fcu train     --config run.ini [--seed N] [--out DIR] [--force]
    fcu unlearn   --config run.ini --checkpoint DIR [--no-fgmp] [--no-post-train] ...
    fcu retrain   --config run.ini ...
    fcu finetune  --config run.ini --checkpoint DIR ...
    fcu compare   report.json [report.json ...] [--force] [--out FILE]

Exit codes: 0 success, 2 configuration error, 3 checkpoint mismatch or
collision, 4 comparing reports whose config digests disagree (pass --force
to compare anyway).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from fcu import experiment, federation, metrics
from fcu import unlearn as unlearning
from fcu.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from fcu.config import ConfigError, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_COMPARE = 4


class CompareError(Exception):
    pass


def _provenance(cfg, phase: str, rounds: int | None = None) -> dict:
    prov = {"phase": phase, "seed": cfg.seed, "config_digest": cfg.digest()}
    if rounds is not None:
        prov["rounds"] = rounds
    return prov


def _out_dir(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(report: metrics.MetricsReport, out: Path) -> None:
    path = out / f"report_{report.method}.json"
    metrics.emit_report([report], path)
    print(metrics.render_table([report]))
    print(f"report: {path}")


def cmd_train(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    exp = experiment.build_experiment(cfg)
    out = _out_dir(cfg)
    result = federation.fl_train(
        exp.template, exp.clients, cfg.federation, initial=exp.initial_params()
    )
    save_checkpoint(
        out / "m_tr", result.model,
        _provenance(cfg, "train", cfg.federation.rounds), force=args.force,
    )
    (out / "train_log.json").write_text(
        json.dumps({"per_round": result.per_round}, indent=2, sort_keys=True) + "\n"
    )
    print(f"trained {cfg.federation.rounds} rounds over {cfg.federation.n_clients} clients "
          f"in {result.elapsed_seconds:.3f}s; checkpoint: {out / 'm_tr'}")
    _finish(experiment.evaluate(result.model, exp, "origin", result.elapsed_seconds), out)
    return EXIT_OK


def cmd_unlearn(args) -> int:
    cfg = load_config(
        args.config, seed=args.seed, out_dir=args.out,
        fgmp_enabled=not args.no_fgmp,
        post_train_enabled=not args.no_post_train,
    )
    exp = experiment.build_experiment(cfg)
    trained, _ = load_checkpoint(args.checkpoint)
    if trained.layers != exp.template.layers:
        raise CheckpointError(
            f"{args.checkpoint}: checkpoint architecture does not match the configured model"
        )
    downgraded = exp.template.with_params(exp.initial_params())
    out = _out_dir(cfg)

    result = unlearning.local_unlearn(trained, downgraded, exp.forget_data, cfg.unlearn)
    runtime = result.elapsed_seconds
    save_checkpoint(out / "m_un", result.model, _provenance(cfg, "unlearn"), force=args.force)
    print(f"unlearned client {cfg.target_client} for {cfg.unlearn.iterations} iterations "
          f"in {result.elapsed_seconds:.3f}s (fgmp={'on' if cfg.unlearn.fgmp_enabled else 'off'})")

    final_model = result.model
    if cfg.post_train_enabled:
        post = federation.post_train(
            exp.template, result.model.params, exp.clients,
            cfg.federation, cfg.target_client, cfg.post_rounds,
        )
        final_model = post.model
        runtime += post.elapsed_seconds
        print(f"post-trained {cfg.post_rounds} rounds in {post.elapsed_seconds:.3f}s")
    save_checkpoint(
        out / "m_un_final", final_model,
        _provenance(cfg, "unlearn+post" if cfg.post_train_enabled else "unlearn"),
        force=args.force,
    )
    _finish(experiment.evaluate(final_model, exp, "fcu", runtime), out)
    return EXIT_OK


def cmd_retrain(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    exp = experiment.build_experiment(cfg)
    out = _out_dir(cfg)
    result = federation.retrain_baseline(exp.template, exp.clients, cfg.federation, cfg.target_client)
    save_checkpoint(
        out / "m_retrain", result.model,
        _provenance(cfg, "retrain", cfg.federation.rounds), force=args.force,
    )
    print(f"retrained without client {cfg.target_client} in {result.elapsed_seconds:.3f}s")
    _finish(experiment.evaluate(result.model, exp, "retrain", result.elapsed_seconds, gap=0.0), out)
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    exp = experiment.build_experiment(cfg)
    trained, _ = load_checkpoint(args.checkpoint)
    if trained.layers != exp.template.layers:
        raise CheckpointError(
            f"{args.checkpoint}: checkpoint architecture does not match the configured model"
        )
    out = _out_dir(cfg)
    result = federation.finetune_baseline(
        exp.template, trained.params, exp.clients, cfg.federation, cfg.target_client, cfg.post_rounds
    )
    save_checkpoint(
        out / "m_finetune", result.model,
        _provenance(cfg, "finetune", cfg.post_rounds), force=args.force,
    )
    print(f"fine-tuned {cfg.post_rounds} rounds without client {cfg.target_client} "
          f"in {result.elapsed_seconds:.3f}s")
    _finish(experiment.evaluate(result.model, exp, "finetune", result.elapsed_seconds), out)
    return EXIT_OK


def cmd_compare(args) -> int:
    reports: list[metrics.MetricsReport] = []
    for path in args.reports:
        try:
            reports.extend(metrics.load_reports(path))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot read report {path}: {exc}") from exc
    digests = {r.config_digest for r in reports}
    if len(digests) > 1 and not args.force:
        raise CompareError(
            f"reports span {len(digests)} different configurations; "
            "pass --force to compare anyway"
        )
    merged = metrics.with_gaps(reports)
    print(metrics.render_table(merged))
    if args.out:
        metrics.emit_report(merged, args.out)
        print(f"combined report: {args.out}")
    return EXIT_OK


def _add_run_args(p: argparse.ArgumentParser, checkpoint: bool = False) -> None:
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    p.add_argument("--out", default=None, help="override [run] out_dir")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    if checkpoint:
        p.add_argument("--checkpoint", required=True, help="trained-model checkpoint directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcu",
        description="federated training, client unlearning, and baseline comparison",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="federated training over all clients")
    _add_run_args(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("unlearn", help="erase the target client from a trained model")
    _add_run_args(p, checkpoint=True)
    p.add_argument("--no-fgmp", action="store_true", help="disable frequency blending")
    p.add_argument("--no-post-train", action="store_true", help="skip recovery rounds")
    p.set_defaults(fn=cmd_unlearn)

    p = sub.add_parser("retrain", help="retrain from scratch without the target client")
    _add_run_args(p)
    p.set_defaults(fn=cmd_retrain)

    p = sub.add_parser("finetune", help="recovery rounds only, skipping unlearning")
    _add_run_args(p, checkpoint=True)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("compare", help="merge reports into one table")
    p.add_argument("reports", nargs="+", help="report JSON files")
    p.add_argument("--force", action="store_true", help="allow mixed config digests")
    p.add_argument("--out", default=None, help="write the merged report document here")
    p.set_defaults(fn=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except CompareError as exc:
        print(f"compare error: {exc}", file=sys.stderr)
        return EXIT_COMPARE


if __name__ == "__main__":
    sys.exit(main())

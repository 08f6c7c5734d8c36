"""Command-line entry point.

Subcommands:

    pretrain --config F --seed N --out DIR
    finetune --task {cls|span|choice} --init CKPT --data F --out DIR
             [--strategies kd,smart,smoothing] [--teacher CKPT] ...
    corpus {clean|convert|dedup|sample} --in F --out F [--table F]
    verify --suite NAME
    synth --seed N --out DIR [--cls N] [--span N] [--choice N]

All modes are deterministic given their flags: rerunning with the same seed
reproduces checkpoints bitwise and metrics logs line for line.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from ..errors import DeskLMError
from ..finetune import TaskSpec

__all__ = ["main", "build_parser"]

_TASK_KINDS = {"cls": "classification", "span": "span", "choice": "multichoice"}
_STRATEGY_FLAGS = ("kd", "smart", "smoothing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="desklm",
                                     description="desk-scale language model laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="run the two-stage pre-training curriculum")
    p.add_argument("--config", required=True, help="UTF-8 JSON run config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")

    f = sub.add_parser("finetune", help="fine-tune a checkpoint on one task")
    f.add_argument("--task", required=True, choices=sorted(_TASK_KINDS))
    f.add_argument("--init", required=True, help="init checkpoint (.mzck)")
    f.add_argument("--data", required=True, help="task data (JSON lines)")
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--strategies", default="", help="comma list from {kd,smart,smoothing}")
    f.add_argument("--teacher", default=None, help="teacher checkpoint for kd")
    f.add_argument("--config", default=None, help="optional JSON run config to start from")
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--lr", type=float, default=None)
    f.add_argument("--batch", type=int, default=None)
    f.add_argument("--epochs", type=int, default=None)
    f.add_argument("--extra-data", action="append", default=[],
                   help="additional task data merged into training (repeatable)")

    c = sub.add_parser("corpus", help="corpus pipeline stages")
    c.add_argument("stage", choices=("clean", "convert", "dedup", "sample"))
    c.add_argument("--in", dest="inp", required=True, help="input JSON-lines corpus")
    c.add_argument("--out", required=True, help="output file")
    c.add_argument("--table", default=None, help="conversion table (convert only)")
    c.add_argument("--stage-id", type=int, default=1, choices=(1, 2), help="sample only")
    c.add_argument("--epoch", type=int, default=0, help="sample only")
    c.add_argument("--seed", type=int, default=0, help="sample only")

    v = sub.add_parser("verify", help="run a named self-check suite")
    v.add_argument("--suite", required=True)

    s = sub.add_parser("synth", help="generate synthetic corpus and task data")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--articles", type=int, default=48)
    s.add_argument("--vocab", type=int, default=64)
    s.add_argument("--cls", type=int, default=0, help="classification examples to emit")
    s.add_argument("--span", type=int, default=0, help="span examples to emit")
    s.add_argument("--choice", type=int, default=0, help="multi-choice examples to emit")
    return parser


def _cmd_pretrain(args) -> int:
    from .pretrain_loop import run_pretrain
    from .runconfig import RunConfig

    config = RunConfig.from_json(args.config)
    if config.mode != "pretrain":
        raise DeskLMError(f"config mode is {config.mode!r}, expected 'pretrain'")
    if args.seed is not None:
        config.seed = args.seed
    config.paths["out"] = args.out
    result = run_pretrain(config)
    print(json.dumps(result, sort_keys=True))
    return 0


def _toggle(strategy_cfg, names):
    unknown = [n for n in names if n not in _STRATEGY_FLAGS]
    if unknown:
        raise DeskLMError(f"unknown strategies {unknown}; choose from {list(_STRATEGY_FLAGS)}")
    out = strategy_cfg
    for name in names:
        section = getattr(out, name)
        out = dataclasses.replace(out, **{name: dataclasses.replace(section, enabled=True)})
    return out


def _cmd_finetune(args) -> int:
    from .checkpoint import load_checkpoint
    from .finetune_loop import run_finetune
    from .runconfig import FinetuneParams, RunConfig

    kind = _TASK_KINDS[args.task]
    if args.config:
        config = RunConfig.from_json(args.config)
        if config.mode != "finetune":
            raise DeskLMError(f"config mode is {config.mode!r}, expected 'finetune'")
    else:
        _, ckpt_cfg = load_checkpoint(args.init)
        defaults = {"span": 384, "classification": 256, "multichoice": 256}
        spec = TaskSpec(kind=kind,
                        num_classes=2 if kind == "classification" else None,
                        num_choices=3 if kind == "multichoice" else None,
                        max_len=min(defaults[kind], ckpt_cfg.max_positions))
        config = RunConfig(mode="finetune", model=ckpt_cfg, task=spec)
    if args.seed is not None:
        config.seed = args.seed
    ft = config.finetune
    if args.lr is not None or args.batch is not None or args.epochs is not None:
        config.finetune = FinetuneParams(
            lr=args.lr if args.lr is not None else ft.lr,
            batch_size=args.batch if args.batch is not None else ft.batch_size,
            epochs=args.epochs if args.epochs is not None else ft.epochs,
        )
        config.finetune.validate(config.allow_off_grid)
    names = [n for n in args.strategies.split(",") if n]
    config.strategies = _toggle(config.strategies, names)
    if args.extra_data:
        aug = dataclasses.replace(config.strategies.augmentation,
                                  extra_paths=tuple(args.extra_data))
        config.strategies = dataclasses.replace(config.strategies, augmentation=aug)
    config.paths.update({"init": args.init, "data": args.data, "out": args.out})
    if args.teacher:
        config.paths["teacher"] = args.teacher
    result = run_finetune(config)
    print(json.dumps(result, sort_keys=True))
    return 0


def _cmd_corpus(args) -> int:
    from ..corpus import (
        Article,
        ConversionTable,
        clean_text,
        dedup,
        default_table,
        global_sample,
        make_article,
        read_corpus,
        t2s_convert,
        write_corpus,
    )
    from ..pretrain import TrainingSchedule

    articles = read_corpus(args.inp)
    if args.stage == "clean":
        out = [make_article(clean_text(a.text), source=a.source) for a in articles]
        out = [a for a in out if a.text]
        write_corpus(args.out, out)
    elif args.stage == "convert":
        table = ConversionTable.from_file(args.table) if args.table else default_table()
        out = [make_article(t2s_convert(a.text, table), source=a.source) for a in articles]
        write_corpus(args.out, out)
    elif args.stage == "dedup":
        write_corpus(args.out, list(dedup(articles)))
    else:
        schedule = TrainingSchedule(total_steps=10)
        windows = global_sample(articles, schedule, epoch=args.epoch, seed=args.seed,
                                stage_id=args.stage_id)
        with open(args.out, "w", encoding="utf-8") as fh:
            for w in windows:
                fh.write(json.dumps({"article_id": w.article_id, "start": w.start,
                                     "tokens": [int(t) for t in w.tokens]},
                                    sort_keys=True) + "\n")
    return 0


def _cmd_verify(args) -> int:
    from .verify import run_suite

    report = run_suite(args.suite)
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0 if report["passed"] else 1


def _cmd_synth(args) -> int:
    from .synth import (
        make_synthetic_choice,
        make_synthetic_classification,
        make_synthetic_corpus,
        make_synthetic_span,
        write_task_data,
    )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = make_synthetic_corpus(out_dir, seed=args.seed, n_articles=args.articles,
                                  vocab=args.vocab)
    emitted = dict(paths)
    for name, count, make in (
        ("cls", args.cls, make_synthetic_classification),
        ("span", args.span, make_synthetic_span),
        ("choice", args.choice, make_synthetic_choice),
    ):
        if count > 0:
            records = make(args.seed, count, args.vocab)
            path = out_dir / f"{name}.jsonl"
            write_task_data(path, records)
            emitted[name] = str(path)
    print(json.dumps(emitted, sort_keys=True))
    return 0


_COMMANDS = {
    "pretrain": _cmd_pretrain,
    "finetune": _cmd_finetune,
    "corpus": _cmd_corpus,
    "verify": _cmd_verify,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DeskLMError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

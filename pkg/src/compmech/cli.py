"""Command-line front end: ``build-dataset``, ``run <experiment>`` and ``plot``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from compmech import plotting
from compmech.dataset import (
    dedupe_records, filter_base_factual, filter_full_binary, filter_single_token,
    read_records, write_records, write_rejections,
)
from compmech.errors import CompMechError
from compmech.experiments import EXPERIMENTS, ExperimentConfig, apply_override
from compmech.manifest import RunManifest, config_hash, file_digest
from compmech.model_io import CHECKPOINT_NAME, MODEL_DIR_ENV
from compmech.runtime import Model

log = logging.getLogger("compmech")


def cmd_build_dataset(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    try:
        records = read_records(args.input)
    except (OSError, CompMechError) as exc:
        log.error("cannot read prompt bank: %s", exc)
        return 1
    settings = {"input": str(args.input), "template": args.template, "model_dir": str(args.model_dir)}
    manifest = RunManifest(
        command="build-dataset", config_path=None, config_hash=config_hash(settings),
        model_digest=None, dataset_digest=file_digest(args.input),
    )
    kept_path, rej_path = out / "filtered.jsonl", out / "rejections.jsonl"

    if not records:
        log.warning("input %s holds no records; writing empty outputs", args.input)
        write_records(kept_path, [])
        write_rejections(rej_path, [])
    else:
        try:
            model = Model.from_dir(args.model_dir)
        except (OSError, CompMechError) as exc:
            log.error("cannot load model: %s", exc)
            return 1
        manifest.model_digest = file_digest(model.checkpoint_path)
        records, collisions = dedupe_records(records)
        kept, rej_tok = filter_single_token(records, model.tokenizer)
        kept, rej_base = filter_base_factual(kept, model, args.template, args.n_jobs)
        kept, rej_full = filter_full_binary(kept, model, args.template, args.n_jobs)
        rejections = collisions + rej_tok + rej_base + rej_full
        write_records(kept_path, kept)
        write_rejections(rej_path, rejections)
        print(f"input={len(records) + len(collisions)} duplicates={len(collisions)} "
              f"multi_token={len(rej_tok)} base_not_factual={len(rej_base)} "
              f"full_neither={len(rej_full)} kept={len(kept)}")
    manifest.add(kept_path)
    manifest.add(rej_path)
    manifest.finish()
    manifest.write(out / "manifest.json")
    return 0 if manifest.verify() else 1


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = list(args.set or [])
    for flag, key in (("model_dir", "model.dir"), ("dataset", "dataset.path"), ("output_dir", "run.output_dir")):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f'{key}="{Path(value).resolve()}"')
    if args.config:
        return ExperimentConfig.from_toml(args.config, overrides)
    data: dict = {}
    for item in overrides:
        apply_override(data, item)
    data.setdefault("model", {}).setdefault("dir", None)
    return ExperimentConfig.from_mapping(data)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = _load_config(args)
    except (OSError, CompMechError) as exc:
        log.error("invalid configuration: %s", exc)
        return 2
    if cfg.output_dir is None:
        cfg.output_dir = str(Path("runs") / args.kind)
    out = Path(cfg.output_dir)
    model_dir = cfg.model_dir or os.environ.get(MODEL_DIR_ENV)
    manifest = RunManifest(
        command=f"run {args.kind}", config_path=cfg.config_path, config_hash=cfg.hash,
        model_digest=file_digest(Path(model_dir) / CHECKPOINT_NAME) if model_dir else None,
        dataset_digest=file_digest(cfg.dataset),
    )
    try:
        result = EXPERIMENTS[args.kind](cfg)
    except (OSError, CompMechError) as exc:
        log.error("run aborted: %s", exc)
        for path in sorted(out.glob("*")) if out.is_dir() else []:
            if path.name != "manifest.json":
                manifest.add(path)
        manifest.notes.append(f"aborted: {exc}; listed artifacts are partial")
        manifest.finish("failed")
        manifest.write(out / "manifest.json")
        return 1
    for path in result.artifacts:
        manifest.add(path)
    manifest.finish()
    manifest.write(out / "manifest.json")
    for path in result.artifacts:
        print(path)
    ok = bool(result.artifacts) and manifest.verify()
    return 0 if ok else 1


def cmd_plot(args: argparse.Namespace) -> int:
    try:
        written = plotting.render(args.artifact, args.kind, args.out)
    except (OSError, CompMechError, KeyError, ValueError) as exc:
        log.error("cannot plot %s: %s", args.artifact, exc)
        return 1
    for path in written:
        print(path)
    return 0 if written and all(p.is_file() for p in written) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compmech", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-dataset", help="filter a prompt bank for one model")
    b.add_argument("--input", required=True, help="prompt bank (JSON lines)")
    b.add_argument("--out-dir", required=True)
    b.add_argument("--model-dir", default=None, help=f"model directory (default: ${MODEL_DIR_ENV})")
    b.add_argument("--template", choices=("redefine", "qna"), default="redefine")
    b.add_argument("--n-jobs", type=int, default=1)
    b.set_defaults(func=cmd_build_dataset)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("kind", choices=sorted(EXPERIMENTS))
    r.add_argument("--config", help="TOML experiment config")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    r.add_argument("--model-dir")
    r.add_argument("--dataset")
    r.add_argument("--output-dir")
    r.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render an artifact to SVG")
    p.add_argument("artifact")
    p.add_argument("--kind", choices=plotting.PLOT_KINDS, default="auto")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""``recovery360`` command line.

Exit codes: 0 success, 1 input or configuration error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import pipeline
from .config import ConfigError, RunConfig, load_config, parse_value
from .fixtures import InfeasibleConfig, SynthConfig, gen_matches
from .ingest import IngestError
from .model import ModelFormatError, SchemaMismatch

logger = logging.getLogger("recovery360")

INPUT_ERRORS = (
    ConfigError,
    pipeline.PipelineInputError,
    IngestError,
    InfeasibleConfig,
    SchemaMismatch,
    ModelFormatError,
    FileNotFoundError,
)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration file")
    common.add_argument("--manifest", help="match manifest CSV (overrides the config)")
    common.add_argument("--out", help="output root (overrides config and $RECOVERY360_OUT)")
    common.add_argument("--seed", type=int, help="training seed")
    common.add_argument("--threads", type=int, help="worker threads for pitch control")
    common.add_argument("--k", type=int, help="recovery window length in actions")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override any config key, e.g. --set train.n_trees=100 (repeatable)",
    )
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="recovery360", description="Ball-recovery models on 360 freeze-frame data.")
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("ingest", parents=[common], help="parse, convert and orient every match in the manifest")
    sub.add_parser("features", parents=[common], help="build schema A and A+T feature tables")
    sub.add_parser("train", parents=[common], help="fit both models and write evaluation reports")
    sub.add_parser("ddi", parents=[common], help="per-action DDI and its team/zone/player reports")
    sub.add_parser("report", parents=[common], help="collect evaluation and DDI reports into one text file")
    sub.add_parser("sweep", parents=[common], help="retrain and evaluate over a range of window lengths")
    sub.add_parser("run", parents=[common], help="ingest, features, train, ddi and report in one go")
    pl = sub.add_parser("plot", parents=[common], help="render a figure plus its numeric sidecar")
    pl.add_argument("what", choices=("surface", "zones", "timeline"))
    pl.add_argument("selector", nargs="?", default="", help="MATCH:SEQ, team id, or MATCH:FIRST-LAST")
    sy = sub.add_parser("synth", help="write a synthetic dataset and its manifest")
    sy.add_argument("out_dir")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--matches", type=int, default=SynthConfig.n_matches)
    sy.add_argument("--actions", type=int, default=SynthConfig.actions_per_match)
    sy.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override any generator setting (repeatable)"
    )
    sy.add_argument("-v", "--verbose", action="store_true")
    return p


def build_config(args) -> RunConfig:
    cfg = load_config(args.config)
    over = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        over[key.strip()] = parse_value(value)
    if args.manifest:
        over["manifest"] = args.manifest
    if args.out:
        over["out_dir"] = args.out
    if args.seed is not None:
        over["train.seed"] = args.seed
    if args.threads is not None:
        over["threads"] = args.threads
    if args.k is not None:
        over["k"] = args.k
    return cfg.with_overrides(**over) if over else cfg


def _synth(args) -> int:
    fields = {"seed": args.seed, "n_matches": args.matches, "actions_per_match": args.actions}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        if key not in SynthConfig.__dataclass_fields__:
            raise ConfigError(f"unknown generator setting {key!r}")
        v = parse_value(value)
        fields[key] = tuple(v) if isinstance(v, list) else v
    res = gen_matches(replace(SynthConfig(), **fields), args.out_dir)
    print(res.manifest_path)
    return 0


def _dispatch(args) -> int:
    if args.verb == "synth":
        return _synth(args)
    cfg = build_config(args)
    if args.verb == "ingest":
        out, summary = pipeline.cmd_ingest(cfg)
        if summary["n_failed"]:
            logger.warning("%d of %d match(es) failed to ingest", summary["n_failed"], summary["n_matches"])
        print(out)
    elif args.verb == "features":
        out, rep = pipeline.cmd_features(cfg)
        print(out)
        print(json.dumps(rep, sort_keys=True))
    elif args.verb == "train":
        out, res = pipeline.cmd_train(cfg)
        print(out)
        for sid, rep in res.items():
            if rep is not None:
                print(f"{sid}: nbs={rep.nbs:.4f} auroc={rep.auroc:.4f} mean_pred={rep.mean_prediction:.4f} rate={rep.positive_rate:.4f}")
    elif args.verb == "ddi":
        out, summary = pipeline.cmd_ddi(cfg)
        print(out)
        print(json.dumps(summary, sort_keys=True))
    elif args.verb == "report":
        path, text = pipeline.cmd_report(cfg)
        sys.stdout.write(text)
        print(path)
    elif args.verb == "sweep":
        out, df = pipeline.cmd_sweep(cfg)
        print(df.to_string(index=False))
        print(out)
    elif args.verb == "run":
        paths = pipeline.run_all(cfg)
        for stage, path in paths.items():
            if stage not in ("sweep", "plots"):
                print(f"{stage}: {path}")
    elif args.verb == "plot":
        svg, side = pipeline.cmd_plot(cfg, args.what, args.selector)
        print(svg)
        print(side)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        logger.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

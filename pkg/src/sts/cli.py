"""``sts`` command-line interface.

Exit codes: 0 on success, 1 when a stage fails at run time, 2 for usage or
configuration errors (including missing input files).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, StageError, StsError
from .labels import StSClass

CONFIG_VERSION = 1
DEFAULT_SEED = 0

log = logging.getLogger("sts")


class UsageError(Exception):
    pass


def _require(*paths: Path) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise UsageError(f"missing input: {p}")


def _read_config(path) -> dict:
    if path is None:
        return {}
    _require(Path(path))
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    version = cfg.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise UsageError(f"{path}: unsupported config version {version}")
    return cfg


def _date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def _direction(text: str) -> StSClass:
    try:
        c = StSClass.parse(text)
    except StsError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if c == StSClass.Other:
        raise argparse.ArgumentTypeError("direction must be Sit-to-Stand or Stand-to-Sit")
    return c


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- subcommands


def cmd_synth(args) -> int:
    from .synth import HouseScenario, generate_house

    cfg = _read_config(args.config)
    try:
        scenario = HouseScenario.from_dict({k: v for k, v in cfg.items() if k != "version"})
    except (TypeError, ValueError, StsError) as exc:
        raise UsageError(f"invalid scenario: {exc}") from None
    if args.seed is not None:
        scenario = HouseScenario.from_dict({**scenario.to_dict(), "seed": args.seed})
    ds = generate_house(scenario, args.out)
    print(ds.ground_truth)
    return 0


def _load_training_set(dirs, net_config):
    from .classifier.inference import prepare_batch
    from .dataset import load_house

    xs, ys = [], []
    for d in dirs:
        house = load_house(d)
        xs.append(prepare_batch(house.clips, net_config))
        ys += house.labels
    return np.concatenate(xs), ys


def _configs(cfg: dict, args):
    from .classifier.network import DESK_CONFIG, NetworkConfig
    from .classifier.training import TrainConfig

    try:
        net_config = NetworkConfig.from_dict(cfg["network"]) if "network" in cfg else DESK_CONFIG
        net_config.check()
        hyper = dict(cfg.get("train", {}))
        for k in ("lr", "momentum", "epochs", "batch"):
            if getattr(args, k, None) is not None:
                hyper[k] = getattr(args, k)
        hyper["seed"] = args.seed if args.seed is not None else hyper.get("seed", DEFAULT_SEED)
        return net_config, TrainConfig.from_dict(hyper)
    except (TypeError, ConfigurationError) as exc:
        raise UsageError(f"invalid network/training config: {exc}") from None


def cmd_train(args) -> int:
    from .classifier.checkpoint import save_checkpoint
    from .classifier.network import Network
    from .classifier.training import train

    cfg = _read_config(args.config)
    _require(*[Path(d) / "labels.csv" for d in args.data])
    net_config, hyper = _configs(cfg, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    x, y = _load_training_set(args.data, net_config)
    net = Network(net_config, seed=hyper.seed, dtype=np.float32)
    try:
        result = train(net, x, y, hyper, checkpoint_dir=out / "checkpoints",
                       progress=lambda e: log.info("epoch %d loss %.4f train acc %.3f", e.epoch, e.loss,
                                                   e.train_accuracy))
    except StsError as exc:
        raise StageError("train", exc) from exc
    result.write_log(out / "train_log.json")
    print(save_checkpoint(net, out / "model.ckpt", {"epochs": hyper.epochs}))
    return 0


def cmd_classify(args) -> int:
    from .classifier.inference import write_classifications
    from .pipeline import classify_house

    data = Path(args.data)
    if args.oracle:
        _require(data / "labels.csv")
    else:
        if args.model is None:
            raise UsageError("classify needs --model or --oracle")
        _require(Path(args.model), data / "tracks")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        results = classify_house(data, args.model, oracle_labels=data / "labels.csv" if args.oracle else None)
    except StsError as exc:
        raise StageError("classify", exc) from exc
    print(write_classifications(out / "classifications.csv", results))
    return 0


def cmd_measure(args) -> int:
    from .classifier.inference import read_classifications
    from .kinematics import write_measurements
    from .pipeline import measure_house, write_skipped

    _require(Path(args.classifications), Path(args.data) / "tracks")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        measurements, skipped = measure_house(args.data, read_classifications(args.classifications))
    except StsError as exc:
        raise StageError("measure", exc) from exc
    for cid, reason in skipped:
        log.warning("skipped %s: %s", cid, reason)
    write_skipped(out / "skipped.csv", skipped)
    print(write_measurements(out / "measurements.csv", measurements))
    return 0


def cmd_trend(args) -> int:
    from .kinematics import read_measurements
    from .pipeline import build_trend

    _require(Path(args.measurements))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        _, stats = build_trend(read_measurements(args.measurements), args.epoch, args.event_date, out,
                               args.direction)
    except StsError as exc:
        raise StageError("trend", exc) from exc
    print(json.dumps(stats.to_dict(), sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    from .classifier.checkpoint import save_checkpoint
    from .classifier.crossval import HouseData, cross_validate
    from .classifier.inference import prepare_batch
    from .dataset import load_house

    cfg = _read_config(args.config)
    if len(args.data) < 2:
        raise UsageError("validate needs at least two house directories")
    _require(*[Path(d) / "labels.csv" for d in args.data])
    net_config, hyper = _configs(cfg, args)
    houses = []
    for d in args.data:
        h = load_house(d)
        houses.append(HouseData(Path(d).name, prepare_batch(h.clips, net_config), h.labels))
    try:
        cv = cross_validate(houses, net_config, hyper, seed=hyper.seed,
                            progress=lambda e: log.info("epoch %d loss %.4f", e.epoch, e.loss))
    except StsError as exc:
        raise StageError("validate", exc) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    folds = []
    for f in cv.folds:
        f.confusion.write_csv(out / f"confusion_{f.held_out}.csv")
        save_checkpoint(f.network, out / f"model_without_{f.held_out}.ckpt", {"held_out": f.held_out})
        folds.append({"held_out": f.held_out, "overall": f.overall,
                      "recalls": {c.value: r for c, r in f.recalls.items()},
                      "false_positive_rate": f.confusion.false_positive_rate()})
    print(_write_json(out / "crossval.json", {"folds": folds, "mean_overall": cv.mean_overall}))
    return 0


def cmd_report(args) -> int:
    from .pipeline import run_report

    data = Path(args.data)
    _require(data / "tracks")
    if not args.oracle:
        if args.model is None:
            raise UsageError("report needs --model or --oracle")
        _require(Path(args.model))
    elif not (data / "labels.csv").exists():
        raise UsageError(f"missing input: {data / 'labels.csv'} (needed by --oracle)")
    try:
        run_report(data, args.out, model_path=args.model, oracle=args.oracle, epoch=args.epoch,
                   event_date=args.event_date, direction=args.direction)
    except StageError:
        raise
    except StsError as exc:
        raise UsageError(str(exc)) from None
    print(Path(args.out) / "summary.json")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default: from config, else 0)")
    common.add_argument("--config", default=None, help="JSON config file with a \"version\": 1 key")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="sts", description="Sit-to-stand detection and speed-of-ascent trends.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic house from a scenario JSON")
    p.set_defaults(func=cmd_synth)

    def hyper_flags(p):
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--momentum", type=float, default=None)
        p.add_argument("--batch", type=int, default=None)

    p = sub.add_parser("train", parents=[common], help="train the clip classifier on labelled houses")
    p.add_argument("--data", nargs="+", required=True, help="house directories")
    hyper_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", parents=[common], help="classify every clip of a house")
    p.add_argument("--data", required=True, help="house directory")
    p.add_argument("--model", default=None, help="checkpoint written by train")
    p.add_argument("--oracle", action="store_true", help="use labels.csv as a perfect classifier")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("measure", parents=[common], help="measure speed of ascent/descent of classified clips")
    p.add_argument("--data", required=True, help="house directory (box tracks)")
    p.add_argument("--classifications", required=True, help="classifications.csv")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("trend", parents=[common], help="weekly trend, R^2 and plot from measurements")
    p.add_argument("--measurements", required=True, help="measurements.csv")
    p.add_argument("--epoch", type=_date, required=True, help="week-bin anchor date (ISO)")
    p.add_argument("--event-date", type=_date, default=None, help="event date drawn on the plot (ISO)")
    p.add_argument("--direction", type=_direction, default=StSClass.SitToStand)
    p.set_defaults(func=cmd_trend)

    p = sub.add_parser("validate", parents=[common], help="leave-one-house-out cross-validation")
    p.add_argument("--data", nargs="+", required=True, help="house directories (>= 2)")
    hyper_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", parents=[common], help="full pipeline on one house with a summary JSON")
    p.add_argument("--data", required=True, help="house directory")
    p.add_argument("--model", default=None, help="checkpoint written by train")
    p.add_argument("--oracle", action="store_true", help="use labels.csv as a perfect classifier")
    p.add_argument("--epoch", type=_date, default=None, help="default: start_date from scenario.json")
    p.add_argument("--event-date", type=_date, default=None, help="default: event week from scenario.json")
    p.add_argument("--direction", type=_direction, default=StSClass.SitToStand)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad usage
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.verbose:
        logging.getLogger("sts").setLevel(logging.INFO)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sts {args.command}: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"sts {args.command}: {exc}", file=sys.stderr)
        return 1
    except (StsError, OSError) as exc:
        print(f"sts {args.command}: stage {args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

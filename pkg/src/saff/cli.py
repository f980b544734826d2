"""Command-line entry point: ``saff <command> [--key value ...]``.

Every config key is also a flag (``--loss.alpha 0.5``). A ``--config`` file is
read first and flags override it. Each run writes into ``--out`` (or a fresh
``runs/<timestamp>-seed<seed>`` directory) and records the fully resolved
configuration as ``config.resolved``.

Exit codes: 0 success, 1 invalid input, 2 training diverged.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import analysis, pipeline, theory
from .config import CONFIG_KEYS, TrainConfig, read_config, write_config
from .data import Dataset, load_csv, save_csv
from .errors import ContractError, DivergenceError, ParseError, SaffError, ValidationError
from .membank import MemoryBank
from .model import ModelParams
from .numerics import load_checkpoint, save_checkpoint

log = logging.getLogger("saff")

COMMANDS = ("gen-data", "pretrain", "train", "eval", "ablate", "sweep-alpha", "verify-bound", "analyze")


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; that code is reserved for divergence
    def error(self, message):
        raise ValidationError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value file read before the flags")
    common.add_argument("--out", help="output directory (default: runs/<timestamp>-seed<seed>)")
    common.add_argument("-v", "--verbose", action="store_true")
    keys = common.add_argument_group("config keys")
    for key in CONFIG_KEYS:
        keys.add_argument(f"--{key}", dest=key, default=None, metavar="VALUE")

    parser = _Parser(prog="saff", description="Style-aware feature fusion experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("gen-data", parents=[common], help="write source/target CSVs")
    sub.add_parser("pretrain", parents=[common], help="source-only pretraining")

    p = sub.add_parser("train", parents=[common], help="full SAFF training")
    p.add_argument("--init", help="start from this checkpoint instead of pretraining")

    p = sub.add_parser("eval", parents=[common], help="accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)

    for name in ("ablate", "sweep-alpha"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
        if name == "sweep-alpha":
            p.add_argument("--values", type=_float_list, default=[0.0, 0.5, 1.0, 1.5, 2.0])

    p = sub.add_parser("verify-bound", parents=[common], help="Monte-Carlo check of the closed-form bound")
    p.add_argument("--M", type=_int_list, default=[1000, 10000, 100000])
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--anchors", type=int, default=4)
    p.add_argument("--proportions", type=_float_list, help="class proportions, e.g. estimated from a run")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("analyze", parents=[common], help="class centres, distance and histograms")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--projection-dim", type=int, default=8)
    p.add_argument("--bins", type=int, default=50)
    return parser


# -- helpers --------------------------------------------------------------------

def resolve_config(args: argparse.Namespace) -> TrainConfig:
    values = read_config(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return TrainConfig.from_keys(values).validate()


def run_dir(args: argparse.Namespace, config: TrainConfig) -> str:
    path = args.out or os.path.join("runs", f"{time.strftime('%Y%m%d-%H%M%S')}-seed{config.seed}")
    os.makedirs(path, exist_ok=True)
    write_config(os.path.join(path, "config.resolved"), config.to_keys())
    return path


def _require(config: TrainConfig, *attrs: str) -> None:
    names = {v: k for k, v in CONFIG_KEYS.items()}
    for attr in attrs:
        if not getattr(config, attr):
            raise ValidationError(f"missing required flag --{names[attr]}")


def _load(path: str, domain: str) -> Dataset:
    if not os.path.exists(path):
        raise ValidationError(f"no such file: {path}")
    return load_csv(path, domain)


def save_model(path: str, params: ModelParams, bank: Optional[MemoryBank] = None) -> None:
    arrays = dict(params.state_dict())
    arrays["meta.tokens"] = np.array(float(params.tokens))
    if bank is not None:
        arrays.update(bank.state_dict())
    save_checkpoint(path, arrays)


def load_model(path: str, activation: str = "tanh") -> ModelParams:
    if not os.path.exists(path):
        raise ValidationError(f"no such checkpoint: {path}")
    state = load_checkpoint(path)
    if "meta.tokens" not in state:
        raise ParseError(path, 0, "checkpoint lacks meta.tokens")
    return ModelParams.from_state_dict(state, int(state["meta.tokens"]), activation)


def _eval_set(config: TrainConfig, target: Optional[Dataset]) -> Optional[Dataset]:
    if config.target_eval:
        return _load(config.target_eval, "target")
    return target if target is not None and target.has_labels else None


# -- commands -------------------------------------------------------------------

def cmd_gen_data(config: TrainConfig, out: str, args) -> None:
    source, target = pipeline.make_data(config)
    save_csv(source, os.path.join(out, "source.csv"))
    save_csv(target.hidden(), os.path.join(out, "target.csv"))
    save_csv(target, os.path.join(out, "target_eval.csv"))


def cmd_pretrain(config: TrainConfig, out: str, args) -> None:
    _require(config, "source")
    source = _load(config.source, "source")
    params = pipeline.pretrain_source(config, source)
    save_model(os.path.join(out, "pretrained.ckpt"), params)
    log.info("source accuracy %.4f", pipeline.evaluate(params, source))


def cmd_train(config: TrainConfig, out: str, args) -> None:
    _require(config, "source", "target")
    source = _load(config.source, "source")
    target = _load(config.target, "target")
    target_eval = _eval_set(config, target)
    params = load_model(args.init, config.activation) if args.init else None
    if params is None:
        params = pipeline.pretrain_source(config, source)
        save_model(os.path.join(out, "pretrained.ckpt"), params)
    epochs_csv = os.path.join(out, "epochs.csv")
    if os.path.exists(epochs_csv):
        os.remove(epochs_csv)
    result = pipeline.train(config, source, target, target_eval, params=params,
                            on_epoch=lambda r: pipeline.write_epoch_csv(epochs_csv, [r], append=True))
    save_model(os.path.join(out, "model.ckpt"), result.params, result.bank)


def cmd_eval(config: TrainConfig, out: str, args) -> None:
    params = load_model(args.checkpoint, config.activation)
    rows = []
    for attr, domain in (("source", "source"), ("target_eval", "target")):
        path = getattr(config, attr)
        if path:
            rows.append((domain, pipeline.evaluate(params, _load(path, domain))))
    if not rows:
        raise ValidationError("missing required flag --data.source or --data.target_eval")
    with open(os.path.join(out, "eval.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["set", "accuracy"])
        for name, acc in rows:
            w.writerow([name, repr(acc)])


def _table(config: TrainConfig, out: str, args, name: str) -> None:
    _require(config, "source", "target")
    source = _load(config.source, "source")
    target = _load(config.target, "target")
    target_eval = _eval_set(config, target)
    if target_eval is None:
        raise ValidationError("accuracy tables need --data.target_eval")
    if name == "ablation":
        rows = pipeline.ablate(config, source, target, target_eval, args.seeds)
    else:
        rows = pipeline.sweep_alpha(config, args.values, source, target, target_eval, args.seeds)
    pipeline.write_table_csv(os.path.join(out, f"{name}.csv"), rows, args.seeds)


def cmd_verify_bound(config: TrainConfig, out: str, args) -> None:
    model, clf, labels = theory.random_problem(config.seed, args.classes, args.dim, args.anchors)
    if args.proportions is not None:
        props = np.asarray(args.proportions, dtype=np.float64)
        if props.shape != (args.classes,) or np.any(props < 0) or props.sum() <= 0:
            raise ValidationError(f"--proportions needs {args.classes} non-negative values")
        model = theory.GaussianClassModel(model.means, model.variances, props / props.sum())
    rows = theory.convergence_report(model, clf, labels, args.M, args.seeds, workers=args.workers)
    with open(os.path.join(out, "bound.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(theory.ConvergenceRow.CSV_FIELDS)
        for r in rows:
            w.writerow(r.csv_row())


def cmd_analyze(config: TrainConfig, out: str, args) -> None:
    _require(config, "source", "target")
    params = load_model(args.checkpoint, config.activation)
    sets = {"source": _load(config.source, "source"), "target": _load(config.target, "target").hidden()}
    centers = {}
    for domain, ds in sets.items():
        feats, pred = analysis.features(params, ds)
        labels = ds.labels if domain == "source" else pred
        centers[domain] = analysis.centers_from(feats, labels, params.n_classes, domain)
        analysis.write_centers(os.path.join(out, f"centers_{domain}.csv"), centers[domain])
        for k in range(params.n_classes):
            rows = feats[labels == k]
            if len(rows) >= 2:
                hist = analysis.jl_histogram(rows, args.projection_dim, args.bins, config.seed)
                analysis.write_histogram(os.path.join(out, f"hist_{domain}_{k}.csv"), hist)
    dist = analysis.inter_domain_distance(centers["source"], centers["target"])
    with open(os.path.join(out, "distance.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "target", "distance"])
        w.writerow(["source", "target", repr(dist)])


HANDLERS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": lambda c, o, a: _table(c, o, a, "ablation"),
    "sweep-alpha": lambda c, o, a: _table(c, o, a, "alpha"),
    "verify-bound": cmd_verify_bound,
    "analyze": cmd_analyze,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s", stream=sys.stderr)
        config = resolve_config(args)
        out = run_dir(args, config)
        log.info("%s -> %s", args.command, out)
        HANDLERS[args.command](config, out, args)
    except DivergenceError as exc:
        print(f"saff: diverged: {exc}", file=sys.stderr)
        return 2
    except (SaffError, ValueError, OSError) as exc:
        print(f"saff: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""m2slt command line: synth, segment, cluster, train, eval, translate.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 non-finite numbers.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .encoder import VideoEncoder
from .metrics import score_corpus
from .numkit import NumericError, load_checkpoint, save_checkpoint
from .pipeline import cluster_samples, segment_sample
from .synth import DatasetError, LoadedDataset, gen_dataset, load_dataset, write_dataset
from .translate import Translator, evaluate, prepare, train

log = logging.getLogger("m2slt")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
PROTO_KEY = "mar.prototypes"


class DataError(RuntimeError):
    pass


def _config(args) -> RunConfig:
    cfg = RunConfig.from_path(args.config) if args.config else RunConfig()
    for assignment in args.set or []:
        cfg.override(assignment)
    if args.seed is not None:
        cfg.set("synth", "seed", args.seed)
        cfg.set("train", "seed", args.seed)
    return cfg


def _dataset(path, allow_empty=False) -> LoadedDataset:
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"{root}: dataset directory not found")
    if allow_empty and not (root / "manifest.json").exists() and not any(root.iterdir()):
        log.warning("%s is empty; nothing to do", root)
        return LoadedDataset([], {})
    try:
        return load_dataset(root)
    except DatasetError as exc:
        raise DataError(str(exc)) from None
    except ValueError as exc:
        raise DataError(f"{root}: {exc}") from None


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _encoder(cfg: RunConfig) -> VideoEncoder:
    e = cfg.data["encoder"]
    return VideoEncoder(out_dim=e["out_dim"], hidden=e["hidden"], seed=e["seed"])


def _check_vocab(ds: LoadedDataset, cfg: RunConfig) -> None:
    v = cfg.model().vocab_size
    for s in ds.samples:
        if any(t >= v for t in s.tokens):
            raise ConfigError(f"sample {s.meta} has token ids beyond model.vocab_size={v}")


def _load_model(path, cfg: RunConfig) -> Translator:
    try:
        state = load_checkpoint(Path(path).read_bytes())
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if PROTO_KEY not in state:
        raise DataError(f"{path}: checkpoint has no {PROTO_KEY}")
    model = Translator(cfg.model(), state[PROTO_KEY], seed=cfg.data["train"]["seed"])
    try:
        model.load(Path(path).read_bytes())
    except ValueError as exc:
        raise ConfigError(f"checkpoint does not match config: {exc}") from None
    return model


# -- subcommands -------------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig) -> int:
    if not args.out:
        raise ConfigError("synth needs --out DIR")
    spec = cfg.synth()
    n = args.n if args.n is not None else cfg.n_samples
    samples, manifest = gen_dataset(spec, n, spec.seed)
    try:
        write_dataset(samples, manifest, args.out)
    except OSError as exc:
        raise DataError(f"cannot write {exc.filename or args.out}: {exc.strerror}") from None
    log.info("wrote %d samples to %s", n, args.out)
    return EXIT_OK


def cmd_segment(args, cfg: RunConfig) -> int:
    ds = _dataset(args.dataset, allow_empty=True)
    seg = cfg.segment()
    lines = []
    for s in ds.samples:
        merged, rgb, evt = segment_sample(s, seg)
        rec = {"sample": s.meta, "segments": [p.as_pair() for p in merged], "source": "merged"}
        if args.verbose:
            rec["rgb"] = [p.as_pair() for p in rgb]
            rec["event"] = [p.as_pair() for p in evt]
        lines.append(json.dumps(rec))
    _emit(args, "".join(line + "\n" for line in lines))
    return EXIT_OK


def cmd_cluster(args, cfg: RunConfig) -> int:
    if not args.out:
        raise ConfigError("cluster needs --out DIR")
    ds = _dataset(args.dataset)
    if not ds.samples:
        raise DataError(f"{args.dataset}: no samples")
    report = cluster_samples(ds.samples, cfg.segment(), cfg.window(), cfg.dbscan(), _encoder(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "prototypes.m2sw").write_bytes(save_checkpoint({PROTO_KEY: report.prototypes.prototypes}))
    text = json.dumps(report.to_json(), sort_keys=True)
    (out / "cluster_report.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def _read_prototypes(path, cfg: RunConfig) -> np.ndarray:
    try:
        state = load_checkpoint(Path(path).read_bytes())
    except OSError as exc:
        raise DataError(f"cannot read prototypes {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if PROTO_KEY not in state:
        raise DataError(f"{path}: no {PROTO_KEY} tensor")
    protos = state[PROTO_KEY]
    want = cfg.data["encoder"]["out_dim"]
    if protos.shape[1] != want:
        raise ConfigError(f"prototype dim {protos.shape[1]} != encoder.out_dim {want}")
    return protos


def cmd_train(args, cfg: RunConfig) -> int:
    if not args.out:
        raise ConfigError("train needs --out DIR")
    if not args.prototypes:
        raise ConfigError("train needs --prototypes FILE")
    protos = _read_prototypes(args.prototypes, cfg)
    ds = _dataset(args.dataset)
    if not ds.samples:
        raise DataError(f"{args.dataset}: no samples")
    _check_vocab(ds, cfg)
    model_cfg = cfg.model()
    result = train(ds.samples, model_cfg, cfg.sgd(), protos, epochs=cfg.epochs, seed=cfg.data["train"]["seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.m2sw").write_bytes(result.model.save())
    (out / "loss.csv").write_text(result.csv())
    log.info("final mean loss %.4f", result.epoch_loss[-1])
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    if not args.checkpoint:
        raise ConfigError("eval needs --checkpoint FILE")
    model = _load_model(args.checkpoint, cfg)
    ds = _dataset(args.dataset)
    _check_vocab(ds, cfg)
    hyps, refs = evaluate(model, ds.samples)
    report = score_corpus(hyps, refs) if hyps else None
    payload = report.to_json() if report else {"bleu1": 0.0, "bleu2": 0.0, "bleu3": 0.0, "bleu4": 0.0, "rouge_l": 0.0, "n": 0}
    _emit(args, json.dumps(payload, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_translate(args, cfg: RunConfig) -> int:
    if not args.checkpoint:
        raise ConfigError("translate needs --checkpoint FILE")
    model = _load_model(args.checkpoint, cfg)
    ds = _dataset(args.dataset, allow_empty=True)
    lines = []
    for s in ds.samples:
        hyp = model.translate(prepare(s, model.cfg))
        lines.append(json.dumps({"sample": s.meta, "tokens": list(hyp), "reference": list(s.tokens)}))
    _emit(args, "".join(line + "\n" for line in lines))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "segment": cmd_segment,
    "cluster": cmd_cluster,
    "train": cmd_train,
    "eval": cmd_eval,
    "translate": cmd_translate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="overrides synth.seed and train.seed")
    common.add_argument("--config", help="JSON run config; {} means all defaults")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="m2slt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--n", type=int, default=None, help="number of samples (synth.n_samples)")
    p = sub.add_parser("segment", parents=[common], help="print informative-segment proposals")
    p.add_argument("dataset")
    p = sub.add_parser("cluster", parents=[common], help="build macro-sign prototypes")
    p.add_argument("dataset")
    p = sub.add_parser("train", parents=[common], help="train the translator")
    p.add_argument("dataset")
    p.add_argument("--prototypes", help="prototype file written by cluster")
    for name in ("eval", "translate"):
        p = sub.add_parser(name, parents=[common], help=f"{name} with a trained checkpoint")
        p.add_argument("dataset")
        p.add_argument("--checkpoint", help="model file written by train")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = _config(args)
        with np.errstate(over="ignore", invalid="ignore"):
            return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (DataError, OSError, ValueError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

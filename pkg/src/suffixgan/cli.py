"""Command-line front end: ``prepare``, ``train``, ``predict``, ``evaluate``, ``synth``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import checkpoint as ckpt
from .config import ConfigError, RunConfig
from .decode import beam_search
from .encoding import (UnknownLabel, Vocabulary, build_vocabulary, fit_normalizer, load_pairs, log_checksum,
                       make_dataset, save_pairs)
from .eventlog import EventLogError, parse_csv, split_log, write_csv
from .metrics import EmptyPredictionSet, ScoredPrefix, evaluate
from .seq2seq import ModelConfig, build_models
from .synthetic import branching_model, chain_model, generate_synthetic_log, load_model
from .training import LOSS_COLUMNS, LossRecord, NonFiniteLoss, Trainer

log = logging.getLogger("suffixgan")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
SPLITS = ("train", "test", "validation")


class VocabularyMismatch(ValueError):
    pass


class Workdir:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def _dir(self, name: str) -> Path:
        d = self.root / name
        d.mkdir(parents=True, exist_ok=True)
        return d

    @property
    def dataset(self) -> Path:
        return self._dir("dataset")

    @property
    def checkpoints(self) -> Path:
        return self._dir("checkpoints")

    @property
    def predictions(self) -> Path:
        return self._dir("predictions")

    @property
    def reports(self) -> Path:
        return self._dir("reports")


def _write_manifest(directory: Path, files: list[Path], **info) -> None:
    manifest = {"files": {p.name: ckpt.file_sha256(p) for p in files}, **info}
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- prepare -----------------------------------------------------------------------

def cmd_prepare(cfg: RunConfig) -> dict[str, int]:
    """Parse, split and encode the log; write one pair file per split."""
    if not cfg.log:
        raise ConfigError("no event log given (config key 'log')")
    event_log = parse_csv(cfg.log, cfg.column_map, cfg.timestamp_format)
    train, test, val = split_log(event_log, tuple(cfg.split), cfg.seed)
    vocab = build_vocabulary(event_log)
    norm = fit_normalizer(train)
    max_len = max(len(t) for t in train.traces) if train.traces else max(len(t) for t in event_log.traces)
    checksum = log_checksum(cfg.log)
    wd = Workdir(cfg.workdir)
    counts, files = {}, []
    for name, part in zip(SPLITS, (train, test, val)):
        pairs = make_dataset(part, vocab, norm)
        path = wd.dataset / f"{name}.jsonl"
        save_pairs(path, pairs, vocab, norm, checksum,
                   extra={"split": name, "max_len": max_len, "n_traces": len(part)})
        counts[name] = len(pairs)
        files.append(path)
    _write_manifest(wd.dataset, files, counts=counts, source_sha256=checksum, seed=cfg.seed, split=cfg.split)
    for name in SPLITS:
        print(f"{name}: {counts[name]} pairs")
    return counts


# -- train --------------------------------------------------------------------------

def _read_history(path: Path) -> list[LossRecord]:
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        return [LossRecord(int(r["epoch"]), *(float(r[c]) for c in LOSS_COLUMNS[1:])) for r in csv.DictReader(fh)]


def write_history(path: Path, history: list[LossRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOSS_COLUMNS)
        for rec in history:
            writer.writerow([rec.epoch] + [repr(float(getattr(rec, c))) for c in LOSS_COLUMNS[1:]])


def cmd_train(cfg: RunConfig, resume: bool = False) -> Path:
    """Train on the prepared dataset; writes ``best.ckpt``, ``last.ckpt`` and ``loss_history.csv``."""
    wd = Workdir(cfg.workdir)
    train_pairs, vocab, norm, header = load_pairs(wd.dataset / "train.jsonl")
    val_pairs, val_vocab, _, _ = load_pairs(wd.dataset / "validation.jsonl")
    if val_vocab != vocab:
        raise VocabularyMismatch("train and validation files disagree on the vocabulary")
    last_path = wd.checkpoints / "last.ckpt"
    best_path = wd.checkpoints / "best.ckpt"
    history_path = wd.checkpoints / "loss_history.csv"

    model_cfg = cfg.model_config(len(vocab))
    prior_meta = None
    if resume and last_path.exists():
        state, prior_meta = ckpt.load_checkpoint(last_path)
        _check_vocab(prior_meta, vocab)
        model_cfg = ModelConfig(**prior_meta["model"])
    generator, discriminator = build_models(model_cfg, cfg.seed)
    trainer = Trainer(generator, discriminator, cfg.train_config())
    if prior_meta is not None:
        trainer.load_state_dict(state)
        trainer.history = _read_history(history_path)
        trainer.best_validation = prior_meta["best_validation"]
        trainer.best_epoch = prior_meta["best_epoch"]
        trainer.best_state = ckpt.load_checkpoint(best_path)[0]
        log.info("resuming at epoch %d", trainer.epoch)

    def progress(rec: LossRecord):
        log.info("epoch %d  d=%.4f  g_adv=%.4f  g_sup=%.4f  val=%.4f", rec.epoch, rec.d_loss,
                 rec.g_adv_loss, rec.g_supervised_loss, rec.validation_loss)

    # ``epochs`` is the total; a resumed run only does what is left
    trainer.fit(train_pairs, val_pairs, epochs=max(0, cfg.epochs - trainer.epoch), progress=progress)

    meta = {
        "vocabulary": list(vocab.labels),
        "scale": norm.scale,
        "model": asdict(model_cfg),
        "train": asdict(trainer.config),
        "seed": cfg.seed,
        "epoch": trainer.epoch,
        "best_epoch": trainer.best_epoch,
        "best_validation": trainer.best_validation,
        "max_len": header["max_len"],
    }
    ckpt.save_checkpoint(last_path, trainer.state_dict(), {**meta, "kind": "last"})
    ckpt.save_checkpoint(best_path, trainer.best_state, {**meta, "kind": "best"})
    write_history(history_path, trainer.history)
    _write_manifest(wd.checkpoints, [best_path, last_path, history_path],
                    epoch=trainer.epoch, best_epoch=trainer.best_epoch)
    print(f"trained to epoch {trainer.epoch}; best validation loss {trainer.best_validation:.4f} "
          f"at epoch {trainer.best_epoch}")
    return best_path


def _check_vocab(meta: dict, vocab: Vocabulary) -> None:
    if tuple(meta["vocabulary"]) != vocab.labels:
        raise VocabularyMismatch(f"checkpoint vocabulary {meta['vocabulary']} != dataset vocabulary "
                                 f"{list(vocab.labels)}")


def load_generator(path: str | Path):
    state, meta = ckpt.load_checkpoint(path)
    generator, _ = build_models(ModelConfig(**meta["model"]), 0)
    generator.load_state_dict(state["generator"])
    generator.eval()
    return generator, meta


# -- predict ------------------------------------------------------------------------

def cmd_predict(cfg: RunConfig, checkpoint: str | Path | None = None, ground_truth: bool = False) -> Path:
    """Beam-decode every test prefix; one JSON line per (case_id, prefix length).

    With ``ground_truth=True`` the true suffix is written as the single
    prediction, which exercises the evaluation path end to end.
    """
    wd = Workdir(cfg.workdir)
    pairs, vocab, norm, header = load_pairs(wd.dataset / "test.jsonl")
    out_path = wd.predictions / "predictions.jsonl"

    if ground_truth:
        def predict(p):
            return [{"labels": p.suffix_labels(vocab), "score": 0.0,
                     "remaining_time": p.remaining_time, "finished": True}]
    else:
        generator, meta = load_generator(checkpoint or wd.checkpoints / "best.ckpt")
        _check_vocab(meta, vocab)
        max_len = cfg.max_len or meta["max_len"]

        def predict(p):
            preds = beam_search(generator, p.prefix, cfg.k, max_len, vocab, norm, cfg.score_eos)
            return [{"labels": r.suffix_labels, "score": r.score, "remaining_time": r.remaining_time,
                     "finished": r.finished} for r in preds]

    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            ranked = list(pool.map(predict, pairs))
    else:
        ranked = [predict(p) for p in pairs]

    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for p, suffixes in zip(pairs, ranked):
            rec = {
                "case_id": p.case_id,
                "prefix_length": p.k,
                "beam_width": cfg.k,
                "suffixes": suffixes,
                "ground_truth": {"labels": p.suffix_labels(vocab), "remaining_time": p.remaining_time},
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _write_manifest(wd.predictions, [out_path], n_records=len(pairs), beam_width=cfg.k)
    print(f"wrote {len(pairs)} prediction records to {out_path}")
    return out_path


def read_predictions(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- evaluate -----------------------------------------------------------------------

def cmd_evaluate(cfg: RunConfig, predictions: str | Path | None = None):
    """Join predictions with the test pairs and write ``rows.csv`` and ``summary.json``."""
    wd = Workdir(cfg.workdir)
    pairs, vocab, _, _ = load_pairs(wd.dataset / "test.jsonl")
    records = read_predictions(predictions or wd.predictions / "predictions.jsonl")
    if not records:
        raise EmptyPredictionSet("prediction file is empty")
    by_key = {}
    for rec in records:
        key = (rec["case_id"], rec["prefix_length"])
        if key in by_key:
            raise ValueError(f"duplicate prediction for case {key[0]} prefix length {key[1]}")
        by_key[key] = rec
    items = []
    for p in pairs:
        rec = by_key.pop((p.case_id, p.k), None)
        if rec is None:
            raise ValueError(f"no prediction for case {p.case_id} prefix length {p.k}")
        items.append(ScoredPrefix(
            case_id=p.case_id,
            k=p.k,
            predicted=[s["labels"] for s in rec["suffixes"]],
            predicted_times=[s["remaining_time"] for s in rec["suffixes"]],
            true_labels=p.suffix_labels(vocab),
            true_time=p.remaining_time,
        ))
    if by_key:
        raise ValueError(f"{len(by_key)} predictions do not match any test pair")
    report = evaluate(items, restricted=cfg.restricted_dl)
    report.write(wd.reports / "rows.csv", wd.reports / "summary.json")
    _write_manifest(wd.reports, [wd.reports / "rows.csv", wd.reports / "summary.json"])
    line = f"mean similarity {report.mean_similarity:.4f}  MAE {report.mae_days:.4f} days  n={report.n}"
    if report.mean_best_of_k_similarity is not None:
        line += f"  best-of-k similarity {report.mean_best_of_k_similarity:.4f}"
    print(line)
    return report


# -- synth --------------------------------------------------------------------------

def cmd_synth(model: str, n_traces: int, seed: int, out: str | Path) -> Path:
    presets = {"chain": chain_model, "branching": branching_model}
    process = presets[model]() if model in presets else load_model(model)
    event_log = generate_synthetic_log(process, n_traces, seed)
    write_csv(event_log, out)
    print(f"wrote {len(event_log)} traces, {event_log.n_events} events to {out}")
    return Path(out)


# -- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--workdir")
    common.add_argument("--log", help="event log CSV (prepare)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="suffixgan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", parents=[common], help="split and encode an event log")
    p = sub.add_parser("train", parents=[common], help="adversarial training")
    p.add_argument("--epochs", type=int)
    p.add_argument("--resume", action="store_true", help="continue from checkpoints/last.ckpt")
    p = sub.add_parser("predict", parents=[common], help="beam-search suffixes for the test set")
    p.add_argument("--k", type=int, help="beam width")
    p.add_argument("--jobs", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--ground-truth", action="store_true", help="emit true suffixes (pipeline check)")
    p = sub.add_parser("evaluate", parents=[common], help="similarity and MAE report")
    p.add_argument("--predictions")
    p = sub.add_parser("synth", parents=[common], help="write a synthetic event log")
    p.add_argument("--model", default="branching", help="'chain', 'branching' or a model JSON file")
    p.add_argument("--n-traces", type=int, default=200)
    p.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            cmd_synth(args.model, args.n_traces, args.seed if args.seed is not None else 0, args.out)
            return EXIT_OK
        overrides = {"seed": args.seed, "workdir": args.workdir, "log": args.log,
                     "epochs": getattr(args, "epochs", None), "k": getattr(args, "k", None),
                     "jobs": getattr(args, "jobs", None)}
        cfg = RunConfig.load(args.config, **overrides)
        if args.command == "prepare":
            cmd_prepare(cfg)
        elif args.command == "train":
            cmd_train(cfg, resume=args.resume)
        elif args.command == "predict":
            cmd_predict(cfg, args.checkpoint, ground_truth=args.ground_truth)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.predictions)
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EventLogError, ConfigError, UnknownLabel, VocabularyMismatch, EmptyPredictionSet,
            FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

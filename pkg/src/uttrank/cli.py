"""Command-line entry point binding all modules.

Every subcommand resolves its configuration from built-in defaults, then an
optional JSON config file (--config), then explicit flags — flags win. Each
run that writes files also writes a manifest.json next to them recording the
command, the fully resolved configuration, the seed, the toolkit version,
and content digests of the input files. Outputs are byte-identical across
runs with identical inputs and seeds; only the manifest timestamp differs.

Exit codes: 0 success, 1 validation/domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import SPLITS, load_corpus, save_corpus
from .errors import UttrankError, ValidationError
from .evaluation import COMPARISON_OBJECTIVES, run_comparison
from .pipeline import PipelineConfig, run_pipeline
from .rouge import rouge_l, rouge_n
from .scorer import FEATURE_DIM, init_model, load_model, save_model
from .synthesis import synth_splits
from .trainer import (
    OBJECTIVES,
    TrainConfig,
    grad_check,
    make_objective_assembly,
    train_baseline,
    train_ranker,
    train_reranker,
)

logger = logging.getLogger(__name__)

__all__ = ["RunManifest", "dispatch", "main"]


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: dict
    seed: int | None
    version: str
    input_digests: dict
    timestamp: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, seed, inputs) -> None:
    manifest = RunManifest(
        command=command,
        config=config,
        seed=seed,
        version=__version__,
        input_digests={str(p): _sha256(Path(p)) for p in inputs},
        timestamp=datetime.now(timezone.utc).isoformat(),
    )
    (out_dir / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        loaded = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(loaded, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return loaded


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults <- config file <- explicit flags (flags win)."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
        elif key in file_cfg:
            resolved[key] = file_cfg[key]
        else:
            resolved[key] = default
    return resolved


def _dims(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


TRAIN_DEFAULTS = {
    "objective": "pairwise",
    "epochs": 10,
    "learning_rate": 5e-3,
    "seed": 0,
    "base_margin": 0.01,
    "listwise_k": 10,
    "shuffle": True,
    "hidden_dims": "16",
    "locator_positives": 8,
    "use_spans": False,
    "sample_size": 32,
    "per_sample_top": 4,
}


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve(args, TRAIN_DEFAULTS)
    out = _out_dir(args.out_dir)
    corpus = load_corpus(args.corpus, split="train")
    train_config = TrainConfig(
        objective=cfg["objective"],
        learning_rate=float(cfg["learning_rate"]),
        epochs=int(cfg["epochs"]),
        seed=int(cfg["seed"]),
        base_margin=float(cfg["base_margin"]),
        listwise_k=int(cfg["listwise_k"]),
        shuffle=bool(cfg["shuffle"]),
        hidden_dims=_dims(cfg["hidden_dims"]),
        locator_positives=int(cfg["locator_positives"]),
        locator_use_spans=bool(cfg["use_spans"]),
    )
    pipeline_config = PipelineConfig(
        sample_size=int(cfg["sample_size"]), per_sample_top=int(cfg["per_sample_top"])
    )
    inputs = [args.corpus]
    if cfg["objective"] == "pairwise":
        result = train_ranker(corpus, train_config, pipeline_config)
    elif cfg["objective"] == "listwise":
        if not args.stage1_model:
            raise ValidationError("objective 'listwise' requires --stage1-model")
        stage1 = load_model(args.stage1_model)
        inputs.append(args.stage1_model)
        result = train_reranker(corpus, stage1, train_config, pipeline_config)
    else:
        result = train_baseline(corpus, train_config, pipeline_config)

    save_model(result.model, out / "model.json")
    with open(out / "loss_history.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(result.epoch_losses, start=1):
            writer.writerow([epoch, repr(loss)])
    _write_manifest(out, "train", cfg, train_config.seed, inputs)
    logger.info("wrote %s", out / "model.json")
    return 0


EXTRACT_DEFAULTS = {
    "sample_size": 32,
    "per_sample_top": 4,
    "top_k": 10,
    "token_budget": 1024,
}


def _cmd_extract(args: argparse.Namespace) -> int:
    cfg = _resolve(args, EXTRACT_DEFAULTS)
    out = _out_dir(args.out_dir)
    corpus = load_corpus(args.corpus, split="test")
    model = load_model(args.model)
    reranker = load_model(args.reranker) if args.reranker else None
    pipeline_config = PipelineConfig(
        sample_size=int(cfg["sample_size"]),
        per_sample_top=int(cfg["per_sample_top"]),
        top_k=int(cfg["top_k"]),
        token_budget=int(cfg["token_budget"]),
        rerank_enabled=reranker is not None,
    )
    with open(out / "extractions.jsonl", "w", encoding="utf-8") as fh:
        for instance in corpus:
            result = run_pipeline(instance, model, reranker, pipeline_config)
            record = {
                "instance_id": result.instance_id,
                "selected_indices": list(result.selected_indices),
                "selection_scores": list(result.selection_scores),
                "generator_input": result.generator_input,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    inputs = [args.corpus, args.model] + ([args.reranker] if args.reranker else [])
    cfg_snapshot = dict(cfg, rerank_enabled=reranker is not None)
    _write_manifest(out, "extract", cfg_snapshot, None, inputs)
    return 0


EVAL_DEFAULTS = {
    "objectives": ",".join(COMPARISON_OBJECTIVES),
    "epochs": 10,
    "learning_rate": 5e-3,
    "seed": 0,
    "base_margin": 0.01,
    "listwise_k": 10,
    "hidden_dims": "16",
    "sample_size": 32,
    "per_sample_top": 4,
    "top_k": 10,
    "token_budget": 1024,
    "reranker_epochs": 0,
    "reranker_learning_rate": 0.0,
}


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve(args, EVAL_DEFAULTS)
    out = _out_dir(args.out_dir)
    corpora = {
        "train": load_corpus(args.train_corpus, split="train"),
        "validation": load_corpus(args.validation_corpus, split="validation"),
        "test": load_corpus(args.test_corpus, split="test"),
    }
    objectives = [o.strip() for o in str(cfg["objectives"]).split(",") if o.strip()]
    train_config = TrainConfig(
        objective="pairwise",
        learning_rate=float(cfg["learning_rate"]),
        epochs=int(cfg["epochs"]),
        seed=int(cfg["seed"]),
        base_margin=float(cfg["base_margin"]),
        listwise_k=int(cfg["listwise_k"]),
        hidden_dims=_dims(cfg["hidden_dims"]),
    )
    reranker_config = None
    if cfg["reranker_epochs"] or cfg["reranker_learning_rate"]:
        reranker_config = TrainConfig(
            objective="listwise",
            learning_rate=float(cfg["reranker_learning_rate"]) or train_config.learning_rate,
            epochs=int(cfg["reranker_epochs"]) or train_config.epochs,
            seed=train_config.seed,
            base_margin=train_config.base_margin,
            listwise_k=train_config.listwise_k,
            hidden_dims=train_config.hidden_dims,
        )
    pipeline_config = PipelineConfig(
        sample_size=int(cfg["sample_size"]),
        per_sample_top=int(cfg["per_sample_top"]),
        top_k=int(cfg["top_k"]),
        token_budget=int(cfg["token_budget"]),
    )
    report = run_comparison(
        corpora,
        objectives=objectives,
        train_config=train_config,
        pipeline_config=pipeline_config,
        reranker_config=reranker_config,
    )
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "report.txt").write_text(report.format_table() + "\n", encoding="utf-8")
    print(report.format_table())
    inputs = [args.train_corpus, args.validation_corpus, args.test_corpus]
    _write_manifest(out, "eval", cfg, train_config.seed, inputs)
    return 0


def _rouge_pairs(args: argparse.Namespace) -> list[tuple[str, str]]:
    if args.pairs:
        pairs = []
        with open(args.pairs, encoding="utf-8", newline="") as fh:
            for row_number, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
                if not row:
                    continue
                if len(row) != 2:
                    raise ValidationError(
                        f"{args.pairs}:{row_number}: expected 2 tab-separated columns, got {len(row)}"
                    )
                pairs.append((row[0], row[1]))
        if not pairs:
            raise ValidationError(f"{args.pairs}: no candidate/reference pairs found")
        return pairs
    if args.candidate and args.reference:
        candidate = Path(args.candidate).read_text(encoding="utf-8")
        reference = Path(args.reference).read_text(encoding="utf-8")
        return [(candidate, reference)]
    raise ValidationError("rouge needs either --pairs TSV or both --candidate and --reference")


def _cmd_rouge(args: argparse.Namespace) -> int:
    pairs = _rouge_pairs(args)
    rows = []
    for candidate, reference in pairs:
        scores = {
            "rouge1": rouge_n(candidate, reference, 1),
            "rouge2": rouge_n(candidate, reference, 2),
            "rougeL": rouge_l(candidate, reference),
        }
        rows.append(
            {
                name: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
                for name, s in scores.items()
            }
        )
    mean = {
        name: {
            part: sum(r[name][part] for r in rows) / len(rows)
            for part in ("precision", "recall", "f1")
        }
        for name in ("rouge1", "rouge2", "rougeL")
    }
    payload = json.dumps({"pairs": rows, "mean": mean}, indent=2, sort_keys=True)
    print(payload)
    if args.out_dir:
        out = _out_dir(args.out_dir)
        (out / "rouge.json").write_text(payload + "\n", encoding="utf-8")
        inputs = [p for p in (args.pairs, args.candidate, args.reference) if p]
        _write_manifest(out, "rouge", {}, None, inputs)
    return 0


GRADCHECK_DEFAULTS = {
    "objectives": ",".join(OBJECTIVES),
    "points": 50,
    "seed": 0,
    "epsilon": 1e-6,
    "hidden_dims": "16",
}


def _random_assembly(objective: str, rng: np.random.Generator):
    n = int(rng.integers(4, 9))
    features = rng.uniform(0.0, 1.0, size=(n, FEATURE_DIM))
    if objective == "bce":
        targets = rng.integers(0, 2, size=n).astype(float)
    else:
        targets = rng.uniform(0.0, 1.0, size=n)
    return make_objective_assembly(objective, features, targets, listwise_k=min(3, n))


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    cfg = _resolve(args, GRADCHECK_DEFAULTS)
    objectives = [o.strip() for o in str(cfg["objectives"]).split(",") if o.strip()]
    unknown = [o for o in objectives if o not in OBJECTIVES]
    if unknown:
        raise ValidationError(f"unknown objectives {unknown}, expected among {list(OBJECTIVES)}")
    rng = np.random.default_rng(int(cfg["seed"]))
    dims = (FEATURE_DIM, *_dims(cfg["hidden_dims"]), 1)
    results = {}
    all_passed = True
    for objective in objectives:
        worst = 0.0
        for _ in range(int(cfg["points"])):
            model = init_model(dims, seed=int(rng.integers(0, 2**31)))
            assembly = _random_assembly(objective, rng)
            report = grad_check(assembly, model, epsilon=float(cfg["epsilon"]))
            worst = max(worst, report.max_relative_error)
        passed = worst <= 1e-4
        all_passed &= passed
        results[objective] = {"max_relative_error": worst, "passed": passed}
    payload = json.dumps(results, indent=2, sort_keys=True)
    print(payload)
    if args.out_dir:
        out = _out_dir(args.out_dir)
        (out / "gradcheck.json").write_text(payload + "\n", encoding="utf-8")
        _write_manifest(out, "gradcheck", cfg, int(cfg["seed"]), [])
    return 0 if all_passed else 1


SYNTH_DEFAULTS = {
    "instances": 200,
    "validation_instances": 0,
    "test_instances": 0,
    "utterances": 40,
    "noise": 0.05,
    "seed": 0,
    "summary_words": 60,
    "query_words": 30,
    "min_tokens": 10,
    "max_tokens": 14,
    "segment_len": 10,
    "offtopic_cap": 0.15,
}


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve(args, SYNTH_DEFAULTS)
    out = _out_dir(args.out_dir)
    n_train = int(cfg["instances"])
    n_validation = int(cfg["validation_instances"]) or max(1, n_train // 10)
    n_test = int(cfg["test_instances"]) or max(1, n_train // 4)
    splits = synth_splits(
        n_train,
        n_validation,
        n_test,
        n_utterances=int(cfg["utterances"]),
        noise=float(cfg["noise"]),
        seed=int(cfg["seed"]),
        summary_words=int(cfg["summary_words"]),
        query_words=int(cfg["query_words"]),
        min_tokens=int(cfg["min_tokens"]),
        max_tokens=int(cfg["max_tokens"]),
        segment_len=int(cfg["segment_len"]),
        offtopic_cap=float(cfg["offtopic_cap"]),
    )
    for split in SPLITS:
        save_corpus(splits[split], out / f"{split}.jsonl")
    resolved = dict(cfg, validation_instances=n_validation, test_instances=n_test)
    _write_manifest(out, "synth", resolved, int(cfg["seed"]), [])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uttrank",
        description="Utterance ranking and extraction toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a scoring model")
    train.add_argument("--corpus", required=True)
    train.add_argument("--out-dir", required=True)
    train.add_argument("--config", help="JSON config file; explicit flags win")
    train.add_argument("--objective", choices=OBJECTIVES)
    train.add_argument("--epochs", type=int)
    train.add_argument("--learning-rate", type=float)
    train.add_argument("--seed", type=int)
    train.add_argument("--base-margin", type=float)
    train.add_argument("--listwise-k", type=int)
    train.add_argument("--shuffle", action=argparse.BooleanOptionalAction, default=None)
    train.add_argument("--hidden-dims", help="comma-separated hidden layer sizes")
    train.add_argument("--locator-positives", type=int)
    train.add_argument("--use-spans", action=argparse.BooleanOptionalAction, default=None)
    train.add_argument("--sample-size", type=int)
    train.add_argument("--per-sample-top", type=int)
    train.add_argument("--stage1-model", help="frozen stage-1 checkpoint (listwise only)")
    train.set_defaults(func=_cmd_train)

    extract = sub.add_parser("extract", help="run the extraction pipeline")
    extract.add_argument("--corpus", required=True)
    extract.add_argument("--model", required=True)
    extract.add_argument("--reranker", help="re-ranker checkpoint; omit to disable re-ranking")
    extract.add_argument("--out-dir", required=True)
    extract.add_argument("--config")
    extract.add_argument("--sample-size", type=int)
    extract.add_argument("--per-sample-top", type=int)
    extract.add_argument("--top-k", type=int)
    extract.add_argument("--token-budget", type=int)
    extract.set_defaults(func=_cmd_extract)

    evaluate = sub.add_parser("eval", help="train and compare extraction objectives")
    evaluate.add_argument("--train-corpus", required=True)
    evaluate.add_argument("--validation-corpus", required=True)
    evaluate.add_argument("--test-corpus", required=True)
    evaluate.add_argument("--out-dir", required=True)
    evaluate.add_argument("--config")
    evaluate.add_argument("--objectives", help="comma-separated comparison rows")
    evaluate.add_argument("--epochs", type=int)
    evaluate.add_argument("--learning-rate", type=float)
    evaluate.add_argument("--seed", type=int)
    evaluate.add_argument("--base-margin", type=float)
    evaluate.add_argument("--listwise-k", type=int)
    evaluate.add_argument("--hidden-dims")
    evaluate.add_argument("--sample-size", type=int)
    evaluate.add_argument("--per-sample-top", type=int)
    evaluate.add_argument("--top-k", type=int)
    evaluate.add_argument("--token-budget", type=int)
    evaluate.add_argument("--reranker-epochs", type=int)
    evaluate.add_argument("--reranker-learning-rate", type=float)
    evaluate.set_defaults(func=_cmd_eval)

    rouge = sub.add_parser("rouge", help="score candidate/reference text pairs")
    rouge.add_argument("--pairs", help="two-column TSV of candidate<TAB>reference")
    rouge.add_argument("--candidate", help="candidate text file")
    rouge.add_argument("--reference", help="reference text file")
    rouge.add_argument("--out-dir")
    rouge.set_defaults(func=_cmd_rouge)

    gradcheck = sub.add_parser("gradcheck", help="finite-difference gradient check")
    gradcheck.add_argument("--config")
    gradcheck.add_argument("--objectives", help="comma-separated loss names")
    gradcheck.add_argument("--points", type=int)
    gradcheck.add_argument("--seed", type=int)
    gradcheck.add_argument("--epsilon", type=float)
    gradcheck.add_argument("--hidden-dims")
    gradcheck.add_argument("--out-dir")
    gradcheck.set_defaults(func=_cmd_gradcheck)

    synth = sub.add_parser("synth", help="generate a planted-order synthetic corpus")
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--config")
    synth.add_argument("--instances", type=int, help="train split size")
    synth.add_argument("--validation-instances", type=int)
    synth.add_argument("--test-instances", type=int)
    synth.add_argument("--utterances", type=int)
    synth.add_argument("--noise", type=float)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--summary-words", type=int)
    synth.add_argument("--query-words", type=int)
    synth.add_argument("--min-tokens", type=int)
    synth.add_argument("--max-tokens", type=int)
    synth.add_argument("--segment-len", type=int, help="utterances per speaker block")
    synth.add_argument("--offtopic-cap", type=float, help="relevance ceiling off the queried speakers")
    synth.set_defaults(func=_cmd_synth)

    return parser


def dispatch(argv) -> int:
    logging.basicConfig(
        level=os.environ.get("UTTRANK_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UttrankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))

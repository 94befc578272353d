"""Command-line entry points for the experimental workflows.

Every command reads one structured config (YAML or JSON), applies
``--seed`` and dotted ``key=value`` overrides, and writes JSON reports that
embed the full resolved config plus content hashes of every input file.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure, 5 provenance violation.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import hashlib
import json
import logging
import re
import sys
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import __version__
from .errors import CheckpointError, ConfigError, DataError, NumericError, ProvenanceError

log = logging.getLogger("eeg2text")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_PROVENANCE = 0, 2, 3, 4, 5

DEFAULTS: dict[str, Any] = {
    "seed": 312,
    "data": {
        "inputs": [],  # prepare-data: raw interchange files
        "tasks": None,  # optional task filter
        "ratios": [0.8, 0.1, 0.1],
        "split": "per_task",  # or unique_sentence (one global split over the merged corpus)
        "feature_dim": 840,
        "train": None,
        "dev": None,
        "test": None,
    },
    "synthetic": {
        "vocab_size": 50,
        "n_sentences": 620,
        "min_len": 4,
        "max_len": 10,
        "noise_sigma": 0.0,
        "feature_dim": 840,
        "task": "synthetic",
        "subject": "synthetic",
        "token_weights": None,
        "sentiment_cues": None,  # {"positive": [...], "negative": [...]} labels records by a keyword rule
    },
    "backbone": {"kind": "toy", "hidden_size": 32, "layers": 2, "heads": 2, "ff_dim": 64, "dropout": 0.0},
    "translator": {
        "mte_layers": 1,
        "mte_heads": 2,
        "mte_ff_dim": 128,
        "max_target_len": 56,
        "dropout": 0.0,
        "freeze_backbone": False,
    },
    "train": {},  # TrainConfig fields; unset fields keep their defaults
    "decode": {"strategy": "beam:5"},
    "metrics": {"ner": "gazetteer"},
    "classifier": {"kind": "bow", "corpus": None, "C": 1.0, "positive": [], "negative": [], "exclude": []},
    "baseline": {"kind": "mlp"},  # EEGClassifierConfig fields
    "scaling": {"unions": [], "seeds": [312]},
}


# ---------------------------------------------------------------------------
# configuration


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (``5e-7``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def _yaml(text: str):
    return yaml.load(text, Loader=_Loader)


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as YAML so numbers and lists work."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    try:
        value = _yaml(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from exc
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.setdefault(p, {}), dict):
            raise ConfigError(f"override {key!r} descends into a non-mapping")
        node = node[p]
    node[parts[-1]] = value


def load_config(path: str | None, overrides: Sequence[str] = (), seed: int | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            loaded = _yaml(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must hold a mapping")
        cfg = deep_merge(cfg, loaded)
    for o in overrides:
        apply_override(cfg, o)
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def make_report(command: str, cfg: dict, inputs: dict[str, str | None], **body) -> dict:
    hashes = {name: file_hash(p) for name, p in inputs.items() if p is not None}
    return {"command": command, "version": __version__, "config": cfg, "input_hashes": hashes, **body}


def _require(cfg: dict, section: str, key: str):
    value = cfg.get(section, {}).get(key)
    if value in (None, "", []):
        raise ConfigError(f"config needs {section}.{key}")
    return value


def train_config(cfg: dict):
    from .trainer import TrainConfig

    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(cfg["train"]) - fields
    if unknown:
        raise ConfigError(f"unknown train options {sorted(unknown)}")
    return TrainConfig(**{**cfg["train"], "seed": cfg["seed"]})


def _load(path, cfg, labeled: bool = False):
    from .data import load_corpus

    records = load_corpus(path, feature_dim=cfg["data"]["feature_dim"])
    if not records:
        raise DataError(f"{path} holds no records")
    if labeled and any(r.sentiment is None for r in records):
        raise DataError(f"{path}: every record needs a sentiment label")
    return records


# ---------------------------------------------------------------------------
# model construction


def build_model(cfg: dict, texts: Sequence[str]):
    """Decoder from config; the toy backbone's vocabulary is built from ``texts``."""
    from .backbone import WordTokenizer, build_backbone
    from .translator import TranslatorConfig, build_translator

    bspec = dict(cfg["backbone"])
    if bspec.get("kind", "toy") == "toy":
        backbone_kwargs = {k: v for k, v in bspec.items() if k != "kind"}
        import torch

        torch.manual_seed(cfg["seed"])
        backbone = build_backbone({"kind": "toy", **backbone_kwargs}, tokenizer=WordTokenizer.from_texts(texts))
    else:
        backbone = build_backbone(bspec)
    tfields = {f.name for f in dataclasses.fields(TranslatorConfig)}
    unknown = set(cfg["translator"]) - tfields
    if unknown:
        raise ConfigError(f"unknown translator options {sorted(unknown)}")
    tcfg = TranslatorConfig(
        **{
            **cfg["translator"],
            "input_dim": cfg["data"]["feature_dim"],
            "backbone_hidden": backbone.hidden_size,
            "vocab_size": backbone.vocab_size,
            "decode_strategy": cfg["decode"]["strategy"],
        }
    )
    return build_translator(tcfg, backbone, seed=cfg["seed"])


def ner_provider(cfg: dict):
    from .metrics import GazetteerNER, SpacyNER

    name = cfg["metrics"]["ner"]
    if name == "gazetteer":
        return GazetteerNER()
    if name.startswith("spacy"):
        return SpacyNER(name.split(":", 1)[1]) if ":" in name else SpacyNER()
    raise ConfigError(f"unknown NER provider {name!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_make_synthetic(cfg: dict, out: Path, args) -> dict:
    from .data import SyntheticEncoderConfig, default_synthetic_vocab, generate_synthetic_corpus, write_corpus

    s = cfg["synthetic"]
    vocab = default_synthetic_vocab(int(s["vocab_size"]))
    enc = SyntheticEncoderConfig(vocab, noise_sigma=float(s["noise_sigma"]), seed=cfg["seed"],
                                 feature_dim=int(s["feature_dim"]))
    records = generate_synthetic_corpus(enc, int(s["n_sentences"]), (int(s["min_len"]), int(s["max_len"])),
                                        subject_id=s["subject"], task_id=s["task"], token_weights=s["token_weights"],
                                        id_prefix=s["task"])
    if s["sentiment_cues"]:
        from .sentiment import KeywordClassifier

        rule = KeywordClassifier(s["sentiment_cues"].get("positive", []), s["sentiment_cues"].get("negative", []))
        for r in records:
            r.sentiment = int(rule.predict(r.text)[0])
    path = out / "corpus.jsonl"
    write_corpus(records, path)
    report = make_report("make-synthetic", cfg, {}, output=str(path), n_records=len(records),
                         output_hash=file_hash(path))
    write_json(out / "report.json", report)
    return report


def cmd_prepare_data(cfg: dict, out: Path, args) -> dict:
    from .data import clean_nan, corpus_stats, load_corpus, merge_tasks, split_by_unique_sentence, split_per_task
    from .data import write_corpus

    inputs = list(args.inputs or cfg["data"]["inputs"])
    if not inputs:
        raise ConfigError("prepare-data needs input files (data.inputs or positional arguments)")
    corpora, dropped, paths = [], {}, []
    for spec in inputs:
        # "TASK=path" relabels the file's records; a bare path keeps their own task ids
        task, _, path = str(spec).rpartition("=") if "=" in str(spec) else ("", "", str(spec))
        paths.append(path)
        try:
            records = load_corpus(path, feature_dim=cfg["data"]["feature_dim"])
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from exc
        kept = clean_nan(records)
        dropped[path] = len(records) - len(kept)
        if task:
            corpora.append((task, kept))
        else:
            for t in sorted({r.task_id for r in kept}):
                corpora.append((t, [r for r in kept if r.task_id == t]))
    records = merge_tasks(corpora)
    tasks = cfg["data"]["tasks"]
    if tasks:
        records = [r for r in records if r.task_id in set(tasks)]
    if not records:
        raise DataError("no records left after cleaning and task filtering")
    splitter = {"unique_sentence": split_by_unique_sentence, "per_task": split_per_task}.get(cfg["data"]["split"])
    if splitter is None:
        raise ConfigError(f"unknown split mode {cfg['data']['split']!r}")
    split = splitter(records, cfg["data"]["ratios"], cfg["seed"])
    files = {}
    for part in ("train", "dev", "test"):
        files[part] = str(out / f"{part}.jsonl")
        write_corpus(getattr(split, part), files[part])
    stats = {
        "per_task": corpus_stats(records),
        "dropped_non_finite": dropped,
        "dropped_total": sum(dropped.values()),
        "split_sentences": {p: len(split.texts(p)) for p in ("train", "dev", "test")},
        "split_records": split.sizes(),
    }
    write_json(out / "stats.json", stats)
    report = make_report("prepare-data", cfg, {f"input:{p}": p for p in paths}, outputs=files,
                         output_hashes={p: file_hash(f) for p, f in files.items()}, stats=stats)
    write_json(out / "report.json", report)
    return report


def cmd_train_decoder(cfg: dict, out: Path, args) -> dict:
    from .data import DatasetSplit
    from .trainer import load_checkpoint, save_checkpoint, train_decoder

    train_path = _require(cfg, "data", "train")
    dev_path = cfg["data"]["dev"]
    train = _load(train_path, cfg)
    dev = _load(dev_path, cfg) if dev_path else []
    tc = train_config(cfg)
    ckpt = out / "checkpoint.pt"
    state = None
    if args.resume:
        if not ckpt.exists():
            raise ConfigError(f"--resume given but {ckpt} does not exist")
        model, state = load_checkpoint(ckpt)
        if state is None:
            raise ConfigError(f"{ckpt} holds no training state")
    else:
        model = build_model(cfg, [r.text for r in train + dev])
    split = DatasetSplit(train, dev, [], ratios=tuple(cfg["data"]["ratios"]), seed=cfg["seed"])
    out.mkdir(parents=True, exist_ok=True)
    model, train_log = train_decoder(model, split, tc, log_path=out / "train_log.jsonl", checkpoint_path=ckpt,
                                     resume=state)
    best = out / "best.pt"
    save_checkpoint(model, None, best, train_config=tc)
    report = make_report(
        "train-decoder", cfg, {"train": train_path, "dev": dev_path},
        checkpoint=str(best), checkpoint_hash=file_hash(best),
        best_epoch=train_log.best_epoch, best_dev_value=train_log.best_dev_value,
        epochs=train_log.epochs,
    )
    write_json(out / "report.json", report)
    return report


def _decoder(cfg: dict, args):
    from .sentiment import TextEchoDecoder
    from .trainer import load_checkpoint

    if args.identity:
        return TextEchoDecoder(), "identity"
    if not args.checkpoint:
        raise ConfigError("give --checkpoint or --identity")
    try:
        model, _ = load_checkpoint(args.checkpoint)
    except FileNotFoundError as exc:
        raise ConfigError(f"checkpoint not found: {args.checkpoint}") from exc
    if model.config.input_dim != cfg["data"]["feature_dim"]:
        raise CheckpointError(
            f"checkpoint expects feature dim {model.config.input_dim}, config data.feature_dim is "
            f"{cfg['data']['feature_dim']}"
        )
    model.eval()
    return model, file_hash(args.checkpoint)


def cmd_evaluate_decoder(cfg: dict, out: Path, args) -> dict:
    from .metrics import score_pairs

    test_path = _require(cfg, "data", "test")
    test = _load(test_path, cfg)
    decoder, ckpt_id = _decoder(cfg, args)
    strategy = cfg["decode"]["strategy"]
    pairs = [(r.text, decoder.decode_text(r, strategy)) for r in test]
    metrics = score_pairs(pairs, ner=ner_provider(cfg), decode_strategy=strategy,
                          provenance={"checkpoint": ckpt_id, "test_split_hash": file_hash(test_path)})
    dump = out / "decoded.tsv"
    out.mkdir(parents=True, exist_ok=True)
    with open(dump, "w", encoding="utf-8") as fh:
        fh.write("sentence_id\ttruth\tdecoded\n")
        for r, (truth, dec) in zip(test, pairs):
            fh.write(f"{r.sentence_id}\t{truth}\t{dec}\n")
    report = make_report("evaluate-decoder", cfg, {"test": test_path, "checkpoint": args.checkpoint},
                         metrics=metrics.to_dict(), decoded=str(dump))
    write_json(out / "report.json", report)
    return report


def cmd_train_classifier(cfg: dict, out: Path, args) -> dict:
    from .data import load_corpus
    from .sentiment import BagOfWordsClassifier, KeywordClassifier, exclude_overlap, load_sentiment_corpus
    from .sentiment import save_classifier

    c = cfg["classifier"]
    corpus_path = _require(cfg, "classifier", "corpus")
    pairs = load_sentiment_corpus(corpus_path)
    protected = []
    for p in c["exclude"]:
        protected += [r.text for r in load_corpus(p, feature_dim=None)]
    kept = exclude_overlap(pairs, protected)
    if not kept:
        raise DataError("no classifier training sentences left after overlap exclusion")
    if c["kind"] == "bow":
        clf = BagOfWordsClassifier(C=float(c["C"]), seed=cfg["seed"]).fit(kept)
    elif c["kind"] == "keyword":
        clf = KeywordClassifier(c["positive"], c["negative"]).fit(kept)
    else:
        raise ConfigError(f"unknown classifier kind {c['kind']!r}")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "classifier.pkl"
    save_classifier(clf, path)
    inputs = {"corpus": corpus_path, **{f"exclude:{p}": p for p in c["exclude"]}}
    report = make_report("train-classifier", cfg, inputs, classifier=str(path), n_train=len(kept),
                         n_excluded=len(pairs) - len(kept), classifier_hash=file_hash(path))
    write_json(out / "report.json", report)
    return report


def cmd_train_baseline(cfg: dict, out: Path, args) -> dict:
    import torch

    from .sentiment import EEGClassifierConfig, classification_report, train_eeg_baseline

    train_path = _require(cfg, "data", "train")
    train = _load(train_path, cfg, labeled=True)
    dev = _load(cfg["data"]["dev"], cfg, labeled=True) if cfg["data"]["dev"] else None
    test = _load(cfg["data"]["test"], cfg, labeled=True) if cfg["data"]["test"] else None
    fields = {f.name for f in dataclasses.fields(EEGClassifierConfig)}
    unknown = set(cfg["baseline"]) - fields
    if unknown:
        raise ConfigError(f"unknown baseline options {sorted(unknown)}")
    bcfg = EEGClassifierConfig(**{**cfg["baseline"], "input_dim": cfg["data"]["feature_dim"]})
    tc = train_config(cfg)
    if tc.selection_metric in ("dev_bleu1",):
        raise ConfigError("dev_bleu1 does not apply to classifiers")
    clf = train_eeg_baseline(bcfg, train, tc, dev)
    out.mkdir(parents=True, exist_ok=True)
    torch.save({"config": dataclasses.asdict(bcfg), "state": clf.net.state_dict()}, out / "baseline.pt")
    body = {"epochs": clf.train_log.epochs, "best_epoch": clf.train_log.best_epoch, "warnings": clf.warnings}
    if test:
        body["test"] = classification_report([int(p) for p in clf.predict(test)], [r.sentiment for r in test])
    report = make_report("train-baseline", cfg, {"train": train_path, "dev": cfg["data"]["dev"],
                                                 "test": cfg["data"]["test"]}, **body)
    write_json(out / "report.json", report)
    return report


def cmd_run_zeroshot(cfg: dict, out: Path, args) -> dict:
    from .sentiment import load_classifier, zero_shot_evaluate

    test_path = _require(cfg, "data", "test")
    test = _load(test_path, cfg, labeled=True)
    if not args.classifier:
        raise ConfigError("run-zeroshot needs --classifier")
    decoder, ckpt_id = _decoder(cfg, args)
    clf = load_classifier(args.classifier)
    strategy = cfg["decode"]["strategy"]
    results, cls_report = zero_shot_evaluate(decoder, clf, test, strategy)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.tsv", "w", encoding="utf-8") as fh:
        fh.write("sentence_id\tgold\tpredicted\tdecoded\n")
        for r, res in zip(test, results):
            fh.write(f"{r.sentence_id}\t{r.sentiment}\t{int(res.label)}\t{res.decoded_text}\n")
    report = make_report("run-zeroshot", cfg, {"test": test_path, "classifier": args.classifier,
                                               "checkpoint": args.checkpoint},
                         decoder=ckpt_id, classifier_kind=getattr(clf, "name", type(clf).__name__),
                         decode_strategy=strategy, report=cls_report)
    write_json(out / "report.json", report)
    return report


def cmd_scaling_study(cfg: dict, out: Path, args) -> dict:
    from .data import DatasetSplit
    from .metrics import score_pairs
    from .trainer import train_decoder

    unions = cfg["scaling"]["unions"]
    if len(unions) < 2:
        raise ConfigError("scaling-study needs at least two task unions in scaling.unions")
    train_path, test_path = _require(cfg, "data", "train"), _require(cfg, "data", "test")
    dev_path = cfg["data"]["dev"]
    train, test = _load(train_path, cfg), _load(test_path, cfg)
    dev = _load(dev_path, cfg) if dev_path else []
    known = {r.task_id for r in train}
    rows = []
    for union in unions:
        missing = set(union) - known
        if missing:
            raise DataError(f"union {union} names tasks absent from training data: {sorted(missing)}")
        for seed in cfg["scaling"]["seeds"]:
            run_cfg = {**cfg, "seed": seed}
            members = [r for r in train if r.task_id in set(union)]
            member_dev = [r for r in dev if r.task_id in set(union)]
            model = build_model(run_cfg, [r.text for r in members + member_dev])
            split = DatasetSplit(members, member_dev, [], ratios=tuple(cfg["data"]["ratios"]), seed=seed)
            model, tlog = train_decoder(model, split, train_config(run_cfg))
            model.eval()
            strategy = cfg["decode"]["strategy"]
            pairs = [(r.text, model.decode_text(r, strategy)) for r in test]
            metrics = score_pairs(pairs, ner=ner_provider(cfg), decode_strategy=strategy,
                                  provenance={"union": list(union), "seed": seed})
            rows.append({
                "union": "+".join(union),
                "seed": seed,
                "train_records": len(members),
                "train_records_per_task": {t: sum(r.task_id == t for r in members) for t in union},
                "best_epoch": tlog.best_epoch,
                "metrics": metrics.to_dict(),
            })
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.md").write_text(render_table(rows), encoding="utf-8")
    report = make_report("scaling-study", cfg, {"train": train_path, "dev": dev_path, "test": test_path},
                         rows=rows)
    write_json(out / "report.json", report)
    return report


def render_table(rows: Sequence[dict]) -> str:
    header = "| union | seed | #train | BLEU-1 | BLEU-2 | BLEU-3 | BLEU-4 | ROUGE-1 P | ROUGE-1 R | ROUGE-1 F |"
    lines = [header, "|" + "---|" * 10]
    for r in rows:
        m = r["metrics"]
        b = m["bleu"]
        lines.append(
            f"| {r['union']} | {r['seed']} | {r['train_records']} | "
            + " | ".join(f"{100 * b[str(n)]:.2f}" for n in range(1, 5))
            + f" | {100 * m['rouge1']['precision']:.2f} | {100 * m['rouge1']['recall']:.2f} | "
            f"{100 * m['rouge1']['f']:.2f} |"
        )
    return "\n".join(lines) + "\n"


def cmd_report(cfg: dict, out: Path, args) -> dict:
    """Render stored JSON reports as one markdown table."""
    if not args.reports:
        raise ConfigError("report needs one or more report.json paths")
    rows, lines = [], []
    for path in args.reports:
        try:
            rep = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read report {path}: {exc}") from exc
        kind = rep.get("command")
        if kind == "scaling-study":
            rows += rep["rows"]
        elif kind == "evaluate-decoder":
            rows.append({"union": Path(path).parent.name, "seed": rep["config"]["seed"], "train_records": "-",
                         "metrics": rep["metrics"]})
        elif kind in ("run-zeroshot", "train-baseline"):
            r = rep.get("report") or rep.get("test")
            if r:
                lines.append(f"| {Path(path).parent.name} | {kind} | {100 * r['macro_f1']:.2f} | "
                             f"{100 * r['accuracy']:.2f} |")
        else:
            raise DataError(f"{path}: no table renderer for command {kind!r}")
    text = render_table(rows) if rows else ""
    if lines:
        text += "\n| run | command | macro F1 | accuracy |\n|---|---|---|---|\n" + "\n".join(lines) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.md").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return {"command": "report", "inputs": list(args.reports)}


COMMANDS = {
    "make-synthetic": cmd_make_synthetic,
    "prepare-data": cmd_prepare_data,
    "train-decoder": cmd_train_decoder,
    "evaluate-decoder": cmd_evaluate_decoder,
    "train-classifier": cmd_train_classifier,
    "train-baseline": cmd_train_baseline,
    "run-zeroshot": cmd_run_zeroshot,
    "scaling-study": cmd_scaling_study,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eeg2text", description="EEG-to-text decoding experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--seed", type=int, help="overrides the config seed (default 312)")
        p.add_argument("--out", default="runs/" + name, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        p.add_argument("overrides", nargs="*", help="dotted overrides such as train.learning_rate=5e-7")
        if name in ("evaluate-decoder", "run-zeroshot"):
            p.add_argument("--checkpoint")
            p.add_argument("--identity", action="store_true", help="use the text-echo stub decoder")
        if name == "run-zeroshot":
            p.add_argument("--classifier")
        if name == "train-decoder":
            p.add_argument("--resume", action="store_true", help="continue from OUT/checkpoint.pt")
        if name == "prepare-data":
            p.add_argument("--inputs", nargs="+", help="raw interchange files")
        if name == "report":
            p.add_argument("--reports", nargs="+", help="report.json files to render")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
        log.info("seed %d", cfg["seed"])
        COMMANDS[args.command](cfg, Path(args.out), args)
    except (ConfigError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ProvenanceError as exc:
        print(f"provenance violation: {exc}", file=sys.stderr)
        return EXIT_PROVENANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

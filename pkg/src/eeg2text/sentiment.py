"""Ternary sentence sentiment from EEG.

Supervised EEG baselines (MLP on averaged features, stacked Bi-LSTM,
transformer encoder) and the zero-shot pipeline that decodes EEG to text and
hands the text to a classifier trained only on external text-sentiment pairs.
"""

from __future__ import annotations

import json
import logging
import pickle
import warnings
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .data import EEGSentenceRecord, average_sentence_feature, normalize_text, text_fingerprint
from .errors import ConfigError, DataError, ProvenanceError
from .trainer import TrainConfig, run_epochs

log = logging.getLogger(__name__)


class SentimentLabel(IntEnum):
    NEGATIVE = 0
    NEUTRAL = 1
    POSITIVE = 2


N_CLASSES = 3


def bin_sst_score(score: float) -> SentimentLabel | None:
    """[0, 0.2] negative, (0.4, 0.6] neutral, (0.8, 1.0] positive, else None (dropped)."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"sentiment score {score} outside [0, 1]")
    if score <= 0.2:
        return SentimentLabel.NEGATIVE
    if 0.4 < score <= 0.6:
        return SentimentLabel.NEUTRAL
    if score > 0.8:
        return SentimentLabel.POSITIVE
    return None


def load_sentiment_corpus(path) -> list[tuple[str, SentimentLabel]]:
    """Read ``{"text", "score"}`` or ``{"text", "label"}`` JSONL; scores are binned."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                text = obj["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed sentiment record") from exc
            if "label" in obj and obj["label"] is not None:
                if obj["label"] not in (0, 1, 2):
                    raise DataError(f"{path}:{lineno}: label must be 0, 1 or 2")
                pairs.append((text, SentimentLabel(obj["label"])))
            elif "score" in obj:
                try:
                    label = bin_sst_score(float(obj["score"]))
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: {exc}") from exc
                if label is not None:
                    pairs.append((text, label))
            else:
                raise DataError(f"{path}:{lineno}: needs 'score' or 'label'")
    return pairs


def exclude_overlap(external, protected_texts) -> list:
    """Drop external pairs whose text (casefolded, whitespace collapsed) is protected."""
    protected = {normalize_text(t) for t in protected_texts}
    return [pair for pair in external if normalize_text(pair[0]) not in protected]


# ---------------------------------------------------------------------------
# text classifiers


@runtime_checkable
class TextClassifier(Protocol):
    provenance: dict | None

    def fit(self, pairs: Sequence[tuple[str, int]]) -> "TextClassifier": ...

    def predict(self, text: str) -> tuple[SentimentLabel, np.ndarray]: ...


def _text_provenance(pairs) -> dict:
    return {"kind": "text-sentiment", "texts": sorted({text_fingerprint(t) for t, _ in pairs})}


class BagOfWordsClassifier:
    """Multinomial logistic regression over unigram counts."""

    name = "bow-logreg"

    def __init__(self, C: float = 1.0, seed: int = 312):
        self.C = C
        self.seed = seed
        self.provenance: dict | None = None
        self._vec = None
        self._clf = None

    def fit(self, pairs):
        from sklearn.feature_extraction.text import CountVectorizer
        from sklearn.linear_model import LogisticRegression

        texts = [t for t, _ in pairs]
        labels = [int(c) for _, c in pairs]
        if len(set(labels)) < 2:
            raise DataError("text classifier needs at least two classes")
        self._vec = CountVectorizer(lowercase=True, token_pattern=r"(?u)\b\w+\b")
        X = self._vec.fit_transform(texts)
        self._clf = LogisticRegression(C=self.C, max_iter=2000, random_state=self.seed).fit(X, labels)
        self.provenance = _text_provenance(pairs)
        return self

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        if self._clf is None:
            raise RuntimeError("classifier is not trained")
        raw = self._clf.predict_proba(self._vec.transform(list(texts)))
        probs = np.zeros((len(texts), N_CLASSES))
        probs[:, self._clf.classes_] = raw
        return probs

    def predict(self, text):
        p = self.predict_proba([text])[0]
        return SentimentLabel(int(np.argmax(p))), p


class KeywordClassifier:
    """Rule classifier: counts positive and negative cue words.

    More positive cues -> positive, more negative -> negative, otherwise
    neutral. Probabilities are a softmax over (neg, 0, pos) cue scores.
    """

    name = "keyword"

    def __init__(self, positive: Sequence[str], negative: Sequence[str], temperature: float = 1.0):
        self.positive = {w.casefold() for w in positive}
        self.negative = {w.casefold() for w in negative}
        self.temperature = temperature
        self.provenance: dict | None = None

    def fit(self, pairs):
        # nothing to learn; records what it was "trained" on for provenance checks
        self.provenance = _text_provenance(pairs)
        return self

    def predict(self, text):
        words = normalize_text(text).split()
        pos = sum(w in self.positive for w in words)
        neg = sum(w in self.negative for w in words)
        if pos > neg:
            label = SentimentLabel.POSITIVE
        elif neg > pos:
            label = SentimentLabel.NEGATIVE
        else:
            label = SentimentLabel.NEUTRAL
        scores = np.array([neg - pos, 0.0, pos - neg], dtype=np.float64) / self.temperature
        p = np.exp(scores - scores.max())
        return label, p / p.sum()


def save_classifier(clf, path) -> None:
    with open(path, "wb") as fh:
        pickle.dump(clf, fh)


def load_classifier(path):
    with open(path, "rb") as fh:
        return pickle.load(fh)


# ---------------------------------------------------------------------------
# supervised EEG baselines


@dataclass
class EEGClassifierConfig:
    kind: str = "mlp"  # mlp | bilstm | encoder
    input_dim: int = 840
    hidden: int = 256
    dropout: float = 0.2
    lstm_layers: int = 4
    encoder_layers: int = 2
    encoder_heads: int = 8
    encoder_ff_dim: int = 2048

    def __post_init__(self):
        if self.kind not in ("mlp", "bilstm", "encoder"):
            raise ConfigError(f"unknown baseline kind {self.kind!r}")
        if self.kind == "encoder" and self.hidden % self.encoder_heads:
            raise ConfigError("encoder hidden size must be divisible by encoder_heads")


class MLPClassifier(nn.Module):
    """Three fully connected layers with ReLU and one dropout layer, on the
    sentence-averaged EEG feature."""

    def __init__(self, cfg: EEGClassifierConfig):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(cfg.input_dim, cfg.hidden),
            nn.ReLU(),
            nn.Dropout(cfg.dropout),
            nn.Linear(cfg.hidden, cfg.hidden // 2),
            nn.ReLU(),
            nn.Linear(cfg.hidden // 2, N_CLASSES),
        )

    def forward(self, eeg, mask):
        m = mask.unsqueeze(-1).to(eeg.dtype)
        mean = (eeg * m).sum(1) / m.sum(1)
        return self.net(mean)


class BiLSTMClassifier(nn.Module):
    """Four stacked bidirectional LSTM layers, single linear head on the
    final forward and backward states."""

    def __init__(self, cfg: EEGClassifierConfig):
        super().__init__()
        self.lstm = nn.LSTM(cfg.input_dim, cfg.hidden, num_layers=cfg.lstm_layers,
                            batch_first=True, bidirectional=True)
        self.head = nn.Linear(2 * cfg.hidden, N_CLASSES)

    def forward(self, eeg, mask):
        lengths = mask.sum(1).cpu()
        packed = nn.utils.rnn.pack_padded_sequence(eeg, lengths, batch_first=True, enforce_sorted=False)
        _, (h, _) = self.lstm(packed)
        return self.head(torch.cat([h[-2], h[-1]], dim=-1))


class EncoderClassifier(nn.Module):
    """Affine projection to the encoder width, stacked transformer encoder
    layers, and a linear head on a learned classification token."""

    def __init__(self, cfg: EEGClassifierConfig):
        super().__init__()
        from .backbone import sinusoidal_positions

        self.projection = nn.Linear(cfg.input_dim, cfg.hidden)
        self.cls = nn.Parameter(torch.zeros(1, 1, cfg.hidden))
        layer = nn.TransformerEncoderLayer(cfg.hidden, cfg.encoder_heads, cfg.encoder_ff_dim,
                                           cfg.dropout, batch_first=True, norm_first=True)
        self.encoder = nn.TransformerEncoder(layer, cfg.encoder_layers, norm=nn.LayerNorm(cfg.hidden),
                                             enable_nested_tensor=False)
        self.register_buffer("positions", sinusoidal_positions(513, cfg.hidden), persistent=False)
        self.head = nn.Linear(cfg.hidden, N_CLASSES)

    def forward(self, eeg, mask):
        x = F.relu(self.projection(eeg))
        x = torch.cat([self.cls.expand(x.shape[0], -1, -1), x], dim=1)
        x = x + self.positions[: x.shape[1]].to(x.dtype)
        mask = torch.cat([torch.ones_like(mask[:, :1]), mask], dim=1)
        return self.head(self.encoder(x, src_key_padding_mask=~mask)[:, 0])


_KINDS = {"mlp": MLPClassifier, "bilstm": BiLSTMClassifier, "encoder": EncoderClassifier}


class EEGSentimentClassifier:
    """Trained EEG baseline with a record-level prediction interface."""

    def __init__(self, cfg: EEGClassifierConfig, net: nn.Module):
        self.cfg = cfg
        self.net = net
        self.warnings: list[str] = []
        self.train_log = None

    @torch.no_grad()
    def predict_proba(self, records: Sequence[EEGSentenceRecord]) -> np.ndarray:
        self.net.eval()
        eeg, mask = pad_eeg(records, self.cfg.input_dim)
        return F.softmax(self.net(eeg, mask).double(), dim=-1).numpy()

    def predict(self, records) -> list[SentimentLabel]:
        return [SentimentLabel(int(i)) for i in np.argmax(self.predict_proba(records), axis=1)]


def pad_eeg(records: Sequence[EEGSentenceRecord], input_dim: int, dtype=torch.float32):
    L = max(len(r) for r in records)
    eeg = torch.zeros(len(records), L, input_dim, dtype=dtype)
    mask = torch.zeros(len(records), L, dtype=torch.bool)
    for i, r in enumerate(records):
        if r.feature_dim != input_dim:
            raise DataError(f"record {r.sentence_id!r}: feature dim {r.feature_dim} != {input_dim}")
        eeg[i, : len(r)] = torch.from_numpy(r.eeg).to(dtype)
        mask[i, : len(r)] = True
    return eeg, mask


def train_eeg_baseline(
    cfg: EEGClassifierConfig,
    records: Sequence[EEGSentenceRecord],
    train_cfg: TrainConfig,
    dev_records: Sequence[EEGSentenceRecord] | None = None,
) -> EEGSentimentClassifier:
    """Cross-entropy training with the decoder's loop, schedule and selection rules."""
    records = list(records)
    if not records:
        raise ValueError("no training records")
    if any(r.sentiment is None for r in records):
        raise DataError("every baseline training record needs a sentiment label")
    torch.manual_seed(train_cfg.seed)
    clf = EEGSentimentClassifier(cfg, _KINDS[cfg.kind](cfg))
    present = {r.sentiment for r in records}
    for c in SentimentLabel:
        if c not in present:
            msg = f"class {c.name} absent from training data"
            clf.warnings.append(msg)
            warnings.warn(msg, stacklevel=2)
    if cfg.kind == "mlp":
        # the MLP consumes the sentence average; precompute it once
        feats = torch.tensor(np.stack([average_sentence_feature(r) for r in records]), dtype=torch.float32)
        ones = torch.ones(len(records), 1, dtype=torch.bool)

        def inputs(idx):
            return feats[idx].unsqueeze(1), ones[idx]
    else:
        def inputs(idx):
            return pad_eeg([records[i] for i in idx], cfg.input_dim)

    labels = torch.tensor([r.sentiment for r in records])

    def batch_loss(idx):
        eeg, mask = inputs(idx)
        return F.cross_entropy(clf.net(eeg, mask), labels[idx]), len(idx)

    dev_metric = None
    if dev_records:
        dev_labels = [r.sentiment for r in dev_records]
        dev_eeg, dev_mask = pad_eeg(dev_records, cfg.input_dim)

        def dev_metric():
            clf.net.eval()
            with torch.no_grad():
                logits = clf.net(dev_eeg, dev_mask)
            if train_cfg.selection_metric == "dev_loss":
                return F.cross_entropy(logits, torch.tensor(dev_labels)).item()
            report = classification_report(logits.argmax(-1).tolist(), dev_labels)
            key = "macro_f1" if train_cfg.selection_metric == "dev_macro_f1" else "accuracy"
            return report[key]

    clf.train_log = run_epochs(clf.net, len(records), batch_loss, dev_metric, train_cfg)
    clf.net.eval()
    return clf


# ---------------------------------------------------------------------------
# zero-shot pipeline


@dataclass
class ZeroShotResult:
    label: SentimentLabel
    probabilities: np.ndarray
    decoded_text: str


def check_provenance(decoder, classifier, eval_texts: Sequence[str] = ()) -> None:
    """Refuse pipelines that would use EEG-sentiment pairs, directly or by leakage.

    The classifier must be trained on text-sentiment pairs only, and none of
    its training sentences may appear in the decoder's training data or in
    the evaluated EEG corpus.
    """
    cprov = getattr(classifier, "provenance", None)
    if not cprov or cprov.get("kind") != "text-sentiment":
        raise ProvenanceError("classifier carries no text-sentiment provenance; train it with fit() first")
    dprov = getattr(decoder, "provenance", None)
    if not dprov or dprov.get("kind") != "eeg-text":
        raise ProvenanceError("decoder carries no EEG-text provenance")
    ctexts = set(cprov["texts"])
    leaked = ctexts & set(dprov["texts"])
    if leaked:
        raise ProvenanceError(f"{len(leaked)} classifier training sentences also trained the decoder")
    leaked = ctexts & {text_fingerprint(t) for t in eval_texts}
    if leaked:
        raise ProvenanceError(f"{len(leaked)} classifier training sentences appear in the evaluated EEG corpus")


def zero_shot_classify(decoder, classifier, record: EEGSentenceRecord, strategy: str | None = None,
                       *, checked: bool = False) -> ZeroShotResult:
    """Decode EEG to text, then classify the text."""
    if not checked:
        check_provenance(decoder, classifier, [record.text])
    text = decoder.decode_text(record, strategy)
    label, probs = classifier.predict(text)
    return ZeroShotResult(SentimentLabel(label), np.asarray(probs), text)


def zero_shot_evaluate(decoder, classifier, records: Sequence[EEGSentenceRecord], strategy: str | None = None):
    """Run the pipeline over labeled records; returns ``(results, report)``."""
    check_provenance(decoder, classifier, [r.text for r in records])
    results = [zero_shot_classify(decoder, classifier, r, strategy, checked=True) for r in records]
    golds = [r.sentiment for r in records]
    if any(g is None for g in golds):
        raise DataError("zero-shot evaluation needs gold sentiment labels")
    return results, classification_report([int(r.label) for r in results], golds)


class TextEchoDecoder:
    """Decoder stub that returns the record's own text; for pipeline checks."""

    def __init__(self, provenance_texts: Sequence[str] = ()):
        self.provenance = {"kind": "eeg-text", "texts": sorted({text_fingerprint(t) for t in provenance_texts})}

    def decode_text(self, record, strategy=None):
        return record.text


# ---------------------------------------------------------------------------
# reporting


def classification_report(predictions: Sequence[int], golds: Sequence[int]) -> dict:
    """Per-class precision/recall/F1, macro and micro F1, accuracy, predicted distribution.

    Undefined ratios (no predictions or no golds for a class) count as 0.
    """
    if len(predictions) != len(golds):
        raise ValueError("predictions and golds differ in length")
    if not golds:
        raise ValueError("empty evaluation set")
    preds = [int(p) for p in predictions]
    golds = [int(g) for g in golds]
    per_class = {}
    for c in SentimentLabel:
        tp = sum(p == c and g == c for p, g in zip(preds, golds))
        n_pred = sum(p == c for p in preds)
        n_gold = sum(g == c for g in golds)
        prec = tp / n_pred if n_pred else 0.0
        rec = tp / n_gold if n_gold else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per_class[c.name.lower()] = {"precision": prec, "recall": rec, "f1": f1, "support": n_gold}
    accuracy = sum(p == g for p, g in zip(preds, golds)) / len(golds)
    macro = {k: sum(v[k] for v in per_class.values()) / N_CLASSES for k in ("precision", "recall", "f1")}
    return {
        "per_class": per_class,
        "macro_precision": macro["precision"],
        "macro_recall": macro["recall"],
        "macro_f1": macro["f1"],
        # single-label multi-class: micro P = micro R = micro F1 = accuracy
        "micro_f1": accuracy,
        "accuracy": accuracy,
        "n": len(golds),
        "predicted_distribution": {c.name.lower(): sum(p == c for p in preds) for c in SentimentLabel},
        "gold_distribution": {c.name.lower(): sum(g == c for g in golds) for c in SentimentLabel},
    }

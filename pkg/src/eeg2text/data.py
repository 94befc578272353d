"""EEG-text records, the JSONL interchange format, cleaning and splitting rules,
and a synthetic corpus generator.

Each word-level EEG feature is a vector of 8 frequency bands x 105 channels
concatenated in band order (theta1, theta2, alpha1, alpha2, beta1, beta2,
gamma1, gamma2). The vector is treated as opaque beyond its length.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

FEATURE_DIM = 840
BANDS = ("theta1", "theta2", "alpha1", "alpha2", "beta1", "beta2", "gamma1", "gamma2")
CHANNELS_PER_BAND = 105
ZUCO_TASKS = ("SR-v1.0", "NR-v1.0", "NR-v2.0", "TSR-v1.0")


@dataclass(eq=False)
class EEGSentenceRecord:
    """One subject's reading of one sentence.

    ``eeg`` has shape ``(n_words, feature_dim)``. The number of EEG words can
    differ from the whitespace token count of ``text`` because words without
    a fixation carry no feature.
    """

    sentence_id: str
    subject_id: str
    task_id: str
    text: str
    eeg: np.ndarray
    sentiment: int | None = None

    def __post_init__(self):
        self.eeg = np.asarray(self.eeg, dtype=np.float64)
        if self.eeg.ndim != 2 or self.eeg.shape[0] < 1:
            raise DataError(
                f"record {self.sentence_id!r}: eeg must be a non-empty (n_words, dim) array, "
                f"got shape {self.eeg.shape}"
            )
        if not self.text:
            raise DataError(f"record {self.sentence_id!r}: empty text")
        if self.sentiment is not None and self.sentiment not in (0, 1, 2):
            raise DataError(f"record {self.sentence_id!r}: sentiment must be 0, 1, 2 or null")

    @property
    def feature_dim(self) -> int:
        return self.eeg.shape[1]

    def __len__(self) -> int:
        return self.eeg.shape[0]


@dataclass
class DatasetSplit:
    train: list[EEGSentenceRecord]
    dev: list[EEGSentenceRecord]
    test: list[EEGSentenceRecord]
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 312

    def texts(self, part: str) -> set[str]:
        return {r.text for r in getattr(self, part)}

    def sizes(self) -> dict[str, int]:
        return {p: len(getattr(self, p)) for p in ("train", "dev", "test")}


@dataclass
class SyntheticEncoderConfig:
    """Desk-scale stand-in for the brain-as-encoder hypothesis: every token
    owns a fixed random code vector and a word's EEG feature is that code
    plus Gaussian noise."""

    vocab: list[str]
    noise_sigma: float = 0.0
    seed: int = 312
    feature_dim: int = FEATURE_DIM

    def __post_init__(self):
        if len(self.vocab) < 2:
            raise ValueError("synthetic vocab needs at least 2 tokens")
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("synthetic vocab tokens must be distinct")
        if any(not t or t.split() != [t] for t in self.vocab):
            raise ValueError("synthetic tokens must be non-empty and contain no whitespace")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")


_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Casefold and collapse whitespace."""
    return _WS.sub(" ", text.casefold()).strip()


def text_fingerprint(text: str) -> str:
    return hashlib.sha1(normalize_text(text).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# interchange format


def record_to_json(record: EEGSentenceRecord) -> dict:
    return {
        "sentence_id": record.sentence_id,
        "subject": record.subject_id,
        "task": record.task_id,
        "text": record.text,
        "sentiment": record.sentiment,
        "eeg": record.eeg.tolist(),
    }


def record_from_json(obj: dict, feature_dim: int | None = FEATURE_DIM) -> EEGSentenceRecord:
    missing = {"sentence_id", "subject", "task", "text", "eeg"} - set(obj)
    if missing:
        raise DataError(f"missing keys {sorted(missing)}")
    sid = obj["sentence_id"]
    eeg = obj["eeg"]
    if not isinstance(eeg, list) or not eeg:
        raise DataError(f"record {sid!r}: 'eeg' must be a non-empty list of vectors")
    if feature_dim is not None:
        for i, word in enumerate(eeg):
            if not isinstance(word, list) or len(word) != feature_dim:
                n = len(word) if isinstance(word, list) else "non-list"
                raise DataError(
                    f"record {sid!r}: word {i} has {n} features, expected {feature_dim}"
                )
    else:
        widths = {len(w) if isinstance(w, list) else -1 for w in eeg}
        if len(widths) != 1 or -1 in widths:
            raise DataError(f"record {sid!r}: ragged eeg feature vectors")
    sentiment = obj.get("sentiment")
    return EEGSentenceRecord(
        sentence_id=str(sid),
        subject_id=str(obj["subject"]),
        task_id=str(obj["task"]),
        text=obj["text"],
        eeg=np.array(eeg, dtype=np.float64),
        sentiment=None if sentiment is None else int(sentiment),
    )


def load_corpus(path: str | os.PathLike, feature_dim: int | None = FEATURE_DIM) -> list[EEGSentenceRecord]:
    """Read a JSONL corpus. Pass ``feature_dim=None`` to accept any consistent width."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            try:
                records.append(record_from_json(obj, feature_dim))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return records


def write_corpus(records: Iterable[EEGSentenceRecord], path: str | os.PathLike) -> None:
    """Write records as JSONL through a temp file renamed into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for record in records:
                # float repr is the shortest string that round-trips the double exactly
                fh.write(json.dumps(record_to_json(record), ensure_ascii=False))
                fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def corpus_hash(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# cleaning, merging, splitting


def clean_nan(records: Sequence[EEGSentenceRecord]) -> list[EEGSentenceRecord]:
    """Drop every sentence with a non-finite value anywhere in its EEG.

    Whole sentences are removed, never single words. Infinities count as NaN.
    """
    return [r for r in records if np.isfinite(r.eeg).all()]


def merge_tasks(corpora: Sequence[tuple[str, Sequence[EEGSentenceRecord]]]) -> list[EEGSentenceRecord]:
    merged = []
    seen = set()
    for task_id, records in corpora:
        for r in records:
            key = (r.sentence_id, r.subject_id, task_id)
            if key in seen:
                raise DataError(
                    f"duplicate record sentence_id={key[0]!r} subject={key[1]!r} task={key[2]!r}"
                )
            seen.add(key)
            merged.append(r if r.task_id == task_id else replace(r, task_id=task_id))
    return merged


def _split_counts(n: int, ratios: Sequence[float]) -> list[int]:
    # Largest-remainder rounding: each count is within 1 of its quota.
    quotas = [r * n for r in ratios]
    counts = [math.floor(q + 1e-9) for q in quotas]
    leftover = n - sum(counts)
    # ties favour test, then dev, then train
    order = sorted(range(3), key=lambda i: (-(quotas[i] - counts[i]), -i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def _check_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    if len(ratios) != 3:
        raise ValueError("ratios must be a (train, dev, test) triple")
    if any(r <= 0 for r in ratios):
        raise ValueError("ratios must be positive")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")
    return tuple(float(r) for r in ratios)


def assign_texts(texts: Iterable[str], ratios: Sequence[float], seed: int) -> dict[str, str]:
    """Map each distinct text to 'train', 'dev' or 'test'."""
    ratios = _check_ratios(ratios)
    distinct = sorted(set(texts))
    if len(distinct) < 3:
        raise DataError(f"need at least 3 distinct sentences to split, got {len(distinct)}")
    order = np.random.default_rng(seed).permutation(len(distinct))
    n_train, n_dev, _ = _split_counts(len(distinct), ratios)
    assignment = {}
    for rank, idx in enumerate(order):
        part = "train" if rank < n_train else "dev" if rank < n_train + n_dev else "test"
        assignment[distinct[idx]] = part
    return assignment


def split_by_unique_sentence(
    records: Sequence[EEGSentenceRecord],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 312,
) -> DatasetSplit:
    """Partition by distinct sentence text so test sentences are never seen in training."""
    assignment = assign_texts((r.text for r in records), ratios, seed)
    parts = {"train": [], "dev": [], "test": []}
    for r in records:
        parts[assignment[r.text]].append(r)
    return DatasetSplit(**parts, ratios=tuple(ratios), seed=seed)


def split_per_task(
    records: Sequence[EEGSentenceRecord],
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 312,
) -> DatasetSplit:
    """Split each task's data separately, then merge.

    A text that already received a split through an earlier task (tasks in
    sorted order) keeps it, so test sentences stay unseen across tasks.
    """
    ratios = _check_ratios(ratios)
    by_task: dict[str, list[EEGSentenceRecord]] = {}
    for r in records:
        by_task.setdefault(r.task_id, []).append(r)
    assignment: dict[str, str] = {}
    for task in sorted(by_task):
        fresh = {r.text for r in by_task[task]} - assignment.keys()
        if len(fresh) >= 3:
            assignment.update(assign_texts(fresh, ratios, seed))
        elif fresh:
            # too few new sentences to populate three splits; keep them out of test
            assignment.update({t: "train" for t in fresh})
    parts = {"train": [], "dev": [], "test": []}
    for r in records:
        parts[assignment[r.text]].append(r)
    return DatasetSplit(**parts, ratios=ratios, seed=seed)


def average_sentence_feature(record: EEGSentenceRecord) -> np.ndarray:
    if record.eeg.shape[0] == 0:
        raise DataError(f"record {record.sentence_id!r} has no EEG words")
    return record.eeg.mean(axis=0)


def corpus_stats(records: Sequence[EEGSentenceRecord]) -> dict[str, dict[str, int]]:
    """Per-task counts of unique sentences, records and subjects."""
    stats: dict[str, dict] = {}
    for r in records:
        s = stats.setdefault(r.task_id, {"texts": set(), "records": 0, "subjects": set()})
        s["texts"].add(r.text)
        s["records"] += 1
        s["subjects"].add(r.subject_id)
    return {
        task: {"sentences": len(s["texts"]), "records": s["records"], "subjects": len(s["subjects"])}
        for task, s in sorted(stats.items())
    }


# ---------------------------------------------------------------------------
# synthetic corpus


def synthetic_codes(cfg: SyntheticEncoderConfig) -> np.ndarray:
    """Per-token code vectors, shape ``(len(vocab), feature_dim)``."""
    rng = np.random.default_rng(cfg.seed)
    return rng.standard_normal((len(cfg.vocab), cfg.feature_dim))


def generate_synthetic_corpus(
    cfg: SyntheticEncoderConfig,
    n_sentences: int,
    len_range: tuple[int, int] = (4, 10),
    *,
    subject_id: str = "synthetic",
    task_id: str = "synthetic",
    token_weights: Sequence[float] | None = None,
    id_prefix: str = "syn",
) -> list[EEGSentenceRecord]:
    """Draw ``n_sentences`` random token sequences and their EEG features.

    ``token_weights`` biases the token draw, which lets two synthetic "tasks"
    share codes but differ in word distribution.
    """
    lo, hi = len_range
    if n_sentences < 1:
        raise ValueError("n_sentences must be >= 1")
    if not 1 <= lo <= hi:
        raise ValueError("len_range must satisfy 1 <= min <= max")
    codes = synthetic_codes(cfg)
    # separate stream so the codes do not depend on n_sentences or weights
    rng = np.random.default_rng([cfg.seed, 1])
    p = None
    if token_weights is not None:
        p = np.asarray(token_weights, dtype=np.float64)
        if p.shape != (len(cfg.vocab),) or (p < 0).any() or p.sum() <= 0:
            raise ValueError("token_weights must be nonnegative, one per vocab token")
        p = p / p.sum()
    records = []
    for i in range(n_sentences):
        length = int(rng.integers(lo, hi + 1))
        tokens = rng.choice(len(cfg.vocab), size=length, p=p)
        eeg = codes[tokens]
        if cfg.noise_sigma > 0:
            eeg = eeg + cfg.noise_sigma * rng.standard_normal(eeg.shape)
        records.append(
            EEGSentenceRecord(
                sentence_id=f"{id_prefix}-{i:06d}",
                subject_id=subject_id,
                task_id=task_id,
                text=" ".join(cfg.vocab[t] for t in tokens),
                eeg=eeg,
            )
        )
    return records


def default_synthetic_vocab(size: int) -> list[str]:
    return [f"w{i:03d}" for i in range(size)]

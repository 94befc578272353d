"""Evaluation metrics: corpus BLEU-1..4, ROUGE-1, and entity-type sequence
similarities (LCS ratio and multiset cosine) over named-entity types.
"""

from __future__ import annotations

import json
import math
import re
import string
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Hashable, Mapping, Protocol, Sequence, runtime_checkable

TOKENIZER_NAME = "lower+punct-split+whitespace"

_PUNCT = re.compile(r"([%s])" % re.escape(string.punctuation))


def tokenize(text: str) -> list[str]:
    """Lowercase, detach punctuation, split on whitespace."""
    return _PUNCT.sub(r" \1 ", text.lower()).split()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _check_corpus(candidates, references):
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise ValueError("empty corpus")


def modified_precision_counts(candidates, references, n: int) -> tuple[int, int]:
    """Corpus totals of clipped and of all candidate n-grams."""
    clipped = total = 0
    for cand, ref in zip(candidates, references):
        c, r = _ngrams(cand, n), _ngrams(ref, n)
        clipped += sum(min(k, r[g]) for g, k in c.items())
        total += sum(c.values())
    return clipped, total


def brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    return math.exp(min(0.0, 1.0 - ref_len / cand_len))


def bleu_n(candidates, references, max_n: int = 4) -> dict[int, float]:
    """Corpus BLEU-n for n = 1..max_n, single reference, no smoothing.

    BLEU-n is the brevity penalty times the geometric mean of the clipped
    precisions of orders 1..n; any zero precision makes it 0.
    """
    _check_corpus(candidates, references)
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be in 1..4")
    bp = brevity_penalty(sum(map(len, candidates)), sum(map(len, references)))
    log_p = []
    scores = {}
    for n in range(1, max_n + 1):
        clipped, total = modified_precision_counts(candidates, references, n)
        log_p.append(math.log(clipped / total) if clipped > 0 else -math.inf)
        scores[n] = 0.0 if -math.inf in log_p else bp * math.exp(sum(log_p) / n)
    return scores


def sentence_bleu(candidate, reference, max_n: int = 4) -> dict[int, float]:
    """Sentence BLEU with add-one smoothing on precisions of order >= 2."""
    bp = brevity_penalty(len(candidate), len(reference))
    log_p = []
    scores = {}
    for n in range(1, max_n + 1):
        clipped, total = modified_precision_counts([candidate], [reference], n)
        if n > 1:
            clipped, total = clipped + 1, total + 1
        log_p.append(math.log(clipped / total) if clipped > 0 else -math.inf)
        scores[n] = 0.0 if -math.inf in log_p else bp * math.exp(sum(log_p) / n)
    return scores


def rouge1(candidates, references) -> dict[str, float]:
    """Unigram precision, recall and F1 with clipped overlap, averaged over pairs."""
    _check_corpus(candidates, references)
    p_sum = r_sum = f_sum = 0.0
    for cand, ref in zip(candidates, references):
        c, r = Counter(cand), Counter(ref)
        overlap = sum(min(k, r[w]) for w, k in c.items())
        p = overlap / len(cand) if cand else 0.0
        rc = overlap / len(ref) if ref else 0.0
        f = 2 * p * rc / (p + rc) if p + rc > 0 else 0.0
        p_sum, r_sum, f_sum = p_sum + p, r_sum + rc, f_sum + f
    n = len(candidates)
    return {"precision": p_sum / n, "recall": r_sum / n, "f": f_sum / n}


def lcs_length(x: Sequence[Hashable], y: Sequence[Hashable]) -> int:
    """Longest common subsequence length, O(|x||y|) time, O(|y|) memory."""
    if len(x) < len(y):
        x, y = y, x
    prev = [0] * (len(y) + 1)
    for a in x:
        cur = [0]
        left = 0
        for b, diag, up in zip(y, prev, prev[1:]):
            if a == b:
                left = diag + 1
            elif up > left:
                left = up
            cur.append(left)
        prev = cur
    return prev[-1]


def sim_lcs(x: Sequence[Hashable], y: Sequence[Hashable]) -> float:
    """LCS length over the longer length; two empty sequences agree perfectly (1.0)."""
    if not x and not y:
        return 1.0
    return lcs_length(x, y) / max(len(x), len(y))


def sim_multiset(x: Sequence[Hashable], y: Sequence[Hashable]) -> float:
    """Cosine between per-type count vectors; 1.0 when both are empty."""
    if not x and not y:
        return 1.0
    if not x or not y:
        return 0.0
    cx, cy = Counter(x), Counter(y)
    dot = sum(k * cy[t] for t, k in cx.items())
    norm = math.sqrt(sum(k * k for k in cx.values())) * math.sqrt(sum(k * k for k in cy.values()))
    return min(1.0, dot / norm)


# ---------------------------------------------------------------------------
# named-entity providers


@runtime_checkable
class NERProvider(Protocol):
    name: str

    def extract(self, text: str) -> list[str]: ...


DEFAULT_GAZETTEER = {
    "George W. Bush": "PERSON",
    "George Bush": "PERSON",
    "Bush": "PERSON",
    "Hitler": "PERSON",
    "Adolf Otto Reinhold Windaus": "PERSON",
    "Windaus": "PERSON",
    "Abraham Lincoln": "PERSON",
    "Albert Einstein": "PERSON",
    "Puerto Rico": "GPE",
    "United States": "GPE",
    "America": "GPE",
    "Germany": "GPE",
    "France": "GPE",
    "England": "GPE",
    "Canada": "GPE",
    "San Juan": "LOCATION",
    "New Francisco": "LOCATION",
    "San Francisco": "LOCATION",
    "New York": "GPE",
    "Chicago": "GPE",
    "Europe": "LOCATION",
    "Pacific Ocean": "LOCATION",
    "Harvard University": "ORG",
    "Congress": "ORG",
    "Nobel Prize": "WORK_OF_ART",
    "American": "NORP",
    "German": "NORP",
    "French": "NORP",
}


class GazetteerNER:
    """Exact-match lexicon lookup, leftmost-longest, case-sensitive."""

    name = "gazetteer"

    def __init__(self, lexicon: Mapping[str, str] | None = None):
        self.lexicon = dict(DEFAULT_GAZETTEER if lexicon is None else lexicon)
        surfaces = sorted(self.lexicon, key=len, reverse=True)
        if surfaces:
            alt = "|".join(re.escape(s) for s in surfaces)
            self._pattern = re.compile(rf"(?<!\w)(?:{alt})(?!\w)")
        else:
            self._pattern = None

    @property
    def types(self) -> set[str]:
        return set(self.lexicon.values())

    def extract(self, text: str) -> list[str]:
        if self._pattern is None:
            return []
        return [self.lexicon[m.group(0)] for m in self._pattern.finditer(text)]


class SpacyNER:
    """Off-the-shelf spaCy recogniser; requires ``spacy`` and a model package."""

    def __init__(self, model: str = "en_core_web_sm"):
        import spacy

        self.nlp = spacy.load(model)
        self.name = f"spacy:{model}"

    def extract(self, text: str) -> list[str]:
        return [ent.label_ for ent in self.nlp(text).ents]


def entity_match_report(pairs: Sequence[tuple[str, str]], ner: NERProvider) -> dict[str, float]:
    """Mean entity-type similarities over (truth, decoded) text pairs."""
    if not pairs:
        raise ValueError("no pairs to score")
    lcs_total = multiset_total = 0.0
    for truth, decoded in pairs:
        x, y = ner.extract(truth), ner.extract(decoded)
        lcs_total += sim_lcs(x, y)
        multiset_total += sim_multiset(x, y)
    return {"sim_lcs": lcs_total / len(pairs), "sim_multiset": multiset_total / len(pairs)}


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricReport:
    bleu: dict[int, float]
    rouge1: dict[str, float]
    sim_lcs: float
    sim_multiset: float
    n_pairs: int
    decode_strategy: str
    tokenizer: str = TOKENIZER_NAME
    ner_provider: str = "gazetteer"
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bleu"] = {str(k): v for k, v in self.bleu.items()}
        d["empty_entity_convention"] = "both-empty pairs score 1.0"
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        d = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        d["bleu"] = {int(k): v for k, v in d["bleu"].items()}
        return cls(**d)


def score_pairs(
    pairs: Sequence[tuple[str, str]],
    ner: NERProvider | None = None,
    decode_strategy: str = "greedy",
    provenance: dict | None = None,
) -> MetricReport:
    """Full report for (truth, decoded) pairs."""
    ner = ner or GazetteerNER()
    refs = [tokenize(t) for t, _ in pairs]
    hyps = [tokenize(d) for _, d in pairs]
    ent = entity_match_report(pairs, ner)
    return MetricReport(
        bleu=bleu_n(hyps, refs, 4),
        rouge1=rouge1(hyps, refs),
        sim_lcs=ent["sim_lcs"],
        sim_multiset=ent["sim_multiset"],
        n_pairs=len(pairs),
        decode_strategy=decode_strategy,
        ner_provider=getattr(ner, "name", type(ner).__name__),
        provenance=dict(provenance or {}),
    )

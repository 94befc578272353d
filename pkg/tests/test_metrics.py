import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eeg2text.metrics import (
    GazetteerNER,
    MetricReport,
    bleu_n,
    entity_match_report,
    lcs_length,
    rouge1,
    score_pairs,
    sentence_bleu,
    sim_lcs,
    sim_multiset,
    tokenize,
)


# --- independent oracles ----------------------------------------------------


def brute_force_lcs(x, y):
    """Longest subsequence of x (by enumeration of all 2^|x|) that is also a subsequence of y."""

    def is_subseq(s, t):
        it = iter(t)
        return all(c in it for c in s)

    best = 0
    for mask in range(1 << len(x)):
        sub = [x[i] for i in range(len(x)) if mask >> i & 1]
        if len(sub) > best and is_subseq(sub, y):
            best = len(sub)
    return best


def naive_bleu(cands, refs, max_n):
    """Counts n-grams with list scans instead of Counters."""
    out = {}
    logs = []
    c_len = sum(len(c) for c in cands)
    r_len = sum(len(r) for r in refs)
    bp = 0.0 if c_len == 0 else (1.0 if c_len > r_len else math.exp(1 - r_len / c_len))
    for n in range(1, max_n + 1):
        match = total = 0
        for c, r in zip(cands, refs):
            c_grams = [tuple(c[i : i + n]) for i in range(len(c) - n + 1)]
            r_grams = [tuple(r[i : i + n]) for i in range(len(r) - n + 1)]
            for g in set(c_grams):
                match += min(c_grams.count(g), r_grams.count(g))
            total += len(c_grams)
        logs.append(math.log(match / total) if match else None)
        out[n] = 0.0 if None in logs else bp * math.exp(sum(logs) / n)
    return out


def naive_rouge1(cands, refs):
    ps, rs, fs = [], [], []
    for c, r in zip(cands, refs):
        overlap = sum(min(c.count(w), r.count(w)) for w in set(c))
        p = overlap / len(c) if c else 0.0
        rc = overlap / len(r) if r else 0.0
        ps.append(p)
        rs.append(rc)
        fs.append(0.0 if p + rc == 0 else 2 * p * rc / (p + rc))
    n = len(cands)
    return sum(ps) / n, sum(rs) / n, sum(fs) / n


def random_pairs(seed, n=200):
    rng = random.Random(seed)
    words = "the a cat dog sat on mat red blue ran".split()
    pairs = []
    for _ in range(n):
        ref = [rng.choice(words) for _ in range(rng.randint(1, 12))]
        cand = [rng.choice(words) for _ in range(rng.randint(1, 12))]
        if rng.random() < 0.3:
            cand = ref[: rng.randint(1, len(ref))] + cand[:2]
        pairs.append((cand, ref))
    return pairs


# --- LCS --------------------------------------------------------------------


class TestLCS:
    def test_identity(self):
        assert lcs_length("ABCBA", "ABCBA") == 5

    def test_single(self):
        assert lcs_length(["A", "B", "C"], ["B"]) == 1

    def test_empty(self):
        assert lcs_length([], ["A"]) == 0

    def test_random_against_enumeration(self):
        rng = random.Random(0)
        for _ in range(300):
            x = [rng.choice("ABCD") for _ in range(rng.randint(0, 8))]
            y = [rng.choice("ABCD") for _ in range(rng.randint(0, 8))]
            assert lcs_length(x, y) == brute_force_lcs(x, y)


class TestSimilarities:
    def test_lcs_identity(self):
        assert sim_lcs(["PERSON", "GPE"], ["PERSON", "GPE"]) == 1.0

    def test_lcs_half(self):
        assert sim_lcs(["PERSON", "GPE"], ["GPE"]) == 0.5

    def test_lcs_one_empty(self):
        assert sim_lcs([], ["GPE"]) == 0.0

    def test_both_empty(self):
        assert sim_lcs([], []) == 1.0
        assert sim_multiset([], []) == 1.0

    def test_multiset_identical(self):
        assert sim_multiset(["GPE", "PERSON", "GPE"], ["PERSON", "GPE", "GPE"]) == pytest.approx(1.0, abs=1e-15)

    def test_multiset_hand_value(self):
        # dot = 2*1 + 1*2 = 4, norms sqrt(5) * sqrt(5)
        assert sim_multiset(["GPE", "GPE", "PERSON"], ["GPE", "PERSON", "PERSON"]) == pytest.approx(0.8, abs=1e-15)

    def test_multiset_disjoint(self):
        assert sim_multiset(["GPE"], ["PERSON", "ORG"]) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.sampled_from("ABC")), st.lists(st.sampled_from("ABC")), st.integers(1, 5))
    def test_properties(self, x, y, k):
        assert sim_lcs(x, y) == sim_lcs(y, x)
        assert sim_multiset(x, y) == pytest.approx(sim_multiset(y, x), abs=1e-15)
        assert 0.0 <= sim_lcs(x, y) <= 1.0
        assert 0.0 <= sim_multiset(x, y) <= 1.0
        assert abs(sim_multiset(x * k, y * k) - sim_multiset(x, y)) <= 1e-12


# --- BLEU / ROUGE -------------------------------------------------------------


class TestBleu:
    def test_identity(self):
        refs = [tokenize("the cat sat on the mat"), tokenize("a dog ran home")]
        assert bleu_n(refs, refs, 4) == {1: 1.0, 2: 1.0, 3: 1.0, 4: 1.0}

    def test_clipping(self):
        from eeg2text.metrics import modified_precision_counts

        clipped, total = modified_precision_counts([["the", "the", "the"]], [["the", "cat", "sat"]], 1)
        assert (clipped, total) == (1, 3)
        assert bleu_n([["the", "the", "the"]], [["the", "cat", "sat"]], 1)[1] == pytest.approx(1 / 3)

    def test_brevity_penalty(self):
        score = bleu_n([["the", "cat"]], [["the", "cat", "sat"]], 1)[1]
        assert score == pytest.approx(math.exp(1 - 3 / 2), abs=1e-15)
        assert score == pytest.approx(0.6065, abs=1e-4)

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            bleu_n([], [], 4)

    def test_sentence_bleu_smoothed(self):
        s = sentence_bleu(["the", "cat"], ["the", "dog"], 2)
        # p1 = 1/2, p2 = (0+1)/(1+1)
        assert s[2] == pytest.approx(math.sqrt(0.5 * 0.5))

    @pytest.mark.parametrize("seed", range(3))
    def test_against_naive(self, seed):
        pairs = random_pairs(seed)
        cands, refs = [c for c, _ in pairs], [r for _, r in pairs]
        got = bleu_n(cands, refs, 4)
        want = naive_bleu(cands, refs, 4)
        for n in range(1, 5):
            assert abs(got[n] - want[n]) <= 1e-9

    @pytest.mark.parametrize("seed", range(3))
    def test_appending_wrong_token_does_not_help(self, seed):
        pairs = random_pairs(seed, 50)
        cands, refs = [c for c, _ in pairs], [r for _, r in pairs]
        worse = [c + ["<wrong>"] for c in cands]
        for n in range(1, 5):
            assert bleu_n(worse, refs, 4)[n] <= bleu_n(cands, refs, 4)[n] + 1e-15


class TestRouge:
    def test_identity(self):
        assert rouge1([["a", "b"]], [["a", "b"]]) == {"precision": 1.0, "recall": 1.0, "f": 1.0}

    def test_hand_value(self):
        r = rouge1([["the", "cat"]], [["the", "cat", "sat"]])
        assert r["recall"] == pytest.approx(2 / 3)
        assert r["precision"] == 1.0
        assert r["f"] == pytest.approx(0.8)

    def test_disjoint(self):
        assert rouge1([["x"]], [["y"]]) == {"precision": 0.0, "recall": 0.0, "f": 0.0}

    @pytest.mark.parametrize("seed", range(3))
    def test_against_naive(self, seed):
        pairs = random_pairs(seed)
        got = rouge1([c for c, _ in pairs], [r for _, r in pairs])
        want = naive_rouge1([c for c, _ in pairs], [r for _, r in pairs])
        assert max(abs(got[k] - w) for k, w in zip(("precision", "recall", "f"), want)) <= 1e-9


def test_tokenize():
    assert tokenize("George W. Bush, 2001!") == ["george", "w", ".", "bush", ",", "2001", "!"]


# --- entities -----------------------------------------------------------------


class TestEntities:
    def test_gazetteer_longest_match(self):
        ner = GazetteerNER()
        text = "George W. Bush visited Puerto Rico and San Juan."
        assert ner.extract(text) == ["PERSON", "GPE", "LOCATION"]
        assert ner.extract("Bushes grow") == []

    def test_identity_decoder(self):
        texts = ["George W. Bush met Hitler in Germany.", "No entities here.", "Puerto Rico"]
        report = entity_match_report([(t, t) for t in texts], GazetteerNER())
        assert report == {"sim_lcs": 1.0, "sim_multiset": 1.0}

    def test_stripped_output(self):
        texts = ["George W. Bush met Hitler in Germany.", "Puerto Rico is warm"]
        report = entity_match_report([(t, "nothing") for t in texts], GazetteerNER())
        assert report["sim_lcs"] == 0.0
        assert report["sim_multiset"] == 0.0

    def test_random_recomputation(self):
        ner = GazetteerNER()
        surfaces = list(ner.lexicon)
        rng = random.Random(4)
        filler = "the of visited met and in near".split()
        pairs = []
        for _ in range(20):
            make = lambda: " ".join(rng.choice(surfaces + filler * 2) for _ in range(rng.randint(0, 8)))
            pairs.append((make(), make()))
        report = entity_match_report(pairs, ner)
        lcs_vals, ms_vals = [], []
        for a, b in pairs:
            x, y = ner.extract(a), ner.extract(b)
            lcs_vals.append(1.0 if not x and not y else brute_force_lcs(x, y) / max(len(x), len(y)))
            types = set(x) | set(y)
            if not x and not y:
                ms_vals.append(1.0)
            elif not x or not y:
                ms_vals.append(0.0)
            else:
                dot = sum(x.count(t) * y.count(t) for t in types)
                ms_vals.append(dot / math.sqrt(sum(x.count(t) ** 2 for t in types) * sum(y.count(t) ** 2 for t in types)))
        assert report["sim_lcs"] == pytest.approx(sum(lcs_vals) / 20, abs=1e-12)
        assert report["sim_multiset"] == pytest.approx(sum(ms_vals) / 20, abs=1e-12)


def test_score_pairs_report_round_trip():
    pairs = [("the cat sat", "the cat sat"), ("George W. Bush spoke", "Bush spoke")]
    report = score_pairs(pairs, decode_strategy="beam:5", provenance={"checkpoint": "x"})
    assert report.n_pairs == 2
    assert all(0.0 <= v <= 1.0 for v in report.bleu.values())
    back = MetricReport.from_dict(report.to_dict())
    assert back.bleu == report.bleu and back.decode_strategy == "beam:5"

import itertools
import json

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from eeg2text.data import EEGSentenceRecord
from eeg2text.errors import DataError, ProvenanceError
from eeg2text.sentiment import (
    BagOfWordsClassifier,
    EEGClassifierConfig,
    KeywordClassifier,
    SentimentLabel,
    TextEchoDecoder,
    bin_sst_score,
    check_provenance,
    classification_report,
    exclude_overlap,
    load_sentiment_corpus,
    train_eeg_baseline,
    zero_shot_classify,
    zero_shot_evaluate,
)
from eeg2text.trainer import TrainConfig

POS = ["great", "wonderful", "moving", "brilliant"]
NEG = ["awful", "dull", "boring", "terrible"]
NEU = ["film", "plot", "actor", "scene", "story", "the", "a", "was"]


def make_text_corpus(n, seed):
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        label = int(rng.integers(3))
        words = list(rng.choice(NEU, size=4))
        if label == 2:
            words += list(rng.choice(POS, size=2))
        elif label == 0:
            words += list(rng.choice(NEG, size=2))
        rng.shuffle(words)
        pairs.append((" ".join(words) + f" number{seed}x{i}", SentimentLabel(label)))
    return pairs


class TestBinning:
    @pytest.mark.parametrize(
        "score,label",
        [(0.0, 0), (0.1, 0), (0.2, 0), (0.5, 1), (0.6, 1), (0.9, 2), (1.0, 2)],
    )
    def test_included(self, score, label):
        assert bin_sst_score(score) == label

    @pytest.mark.parametrize("score", [0.3, 0.2000001, 0.4, 0.7, 0.8])
    def test_excluded(self, score):
        assert bin_sst_score(score) is None

    @pytest.mark.parametrize("score", [-0.01, 1.01])
    def test_out_of_range(self, score):
        with pytest.raises(ValueError):
            bin_sst_score(score)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_total_and_disjoint(self, s):
        in_neg, in_neu, in_pos = s <= 0.2, 0.4 < s <= 0.6, 0.8 < s <= 1.0
        assert in_neg + in_neu + in_pos <= 1
        label = bin_sst_score(s)
        assert (label is None) == (not (in_neg or in_neu or in_pos))


def test_load_sentiment_corpus(tmp_path):
    path = tmp_path / "sst.jsonl"
    lines = [{"text": "a", "score": 0.1}, {"text": "b", "score": 0.3}, {"text": "c", "label": 2},
             {"text": "d", "score": 0.55}]
    path.write_text("\n".join(json.dumps(x) for x in lines) + "\n")
    assert load_sentiment_corpus(path) == [("a", 0), ("c", 2), ("d", 1)]
    path.write_text('{"text": "x"}\n')
    with pytest.raises(DataError):
        load_sentiment_corpus(path)


class TestOverlap:
    def test_no_overlap(self):
        ext = [("A fine film", 2), ("dull", 0)]
        assert exclude_overlap(ext, {"something else"}) == ext

    def test_all_protected(self):
        ext = [("A fine film", 2), ("dull", 0)]
        assert exclude_overlap(ext, {"a  FINE film", "Dull"}) == []

    def test_mixed_intersection_empty(self):
        rng = np.random.default_rng(0)
        pool = [f"Sentence {i}" for i in range(100)]
        ext = [(t, 0) for t in pool]
        protected = {("  " + t.upper()) if rng.random() < 0.5 else t for t in rng.choice(pool, 40)}
        out = exclude_overlap(ext, protected)
        norm = lambda t: " ".join(t.casefold().split())
        assert not {norm(t) for t, _ in out} & {norm(t) for t in protected}
        assert len(out) == 100 - len({norm(t) for t in protected})


class TestTextClassifiers:
    def test_bow_probabilities(self):
        clf = BagOfWordsClassifier().fit(make_text_corpus(300, 0))
        for text, _ in make_text_corpus(30, 1):
            label, p = clf.predict(text)
            assert p.shape == (3,) and abs(p.sum() - 1) < 1e-6
            assert label == int(np.argmax(p))

    def test_bow_learns(self):
        clf = BagOfWordsClassifier().fit(make_text_corpus(400, 0))
        test = make_text_corpus(100, 1)
        acc = np.mean([clf.predict(t)[0] == c for t, c in test])
        assert acc > 0.9

    def test_bow_missing_class_maps_to_three(self):
        pairs = [(t, c) for t, c in make_text_corpus(200, 0) if c != 1]
        clf = BagOfWordsClassifier().fit(pairs)
        _, p = clf.predict("great film")
        assert p.shape == (3,) and p[1] == 0.0

    def test_keyword(self):
        clf = KeywordClassifier(POS, NEG)
        assert clf.predict("a great film")[0] == SentimentLabel.POSITIVE
        assert clf.predict("dull and boring")[0] == SentimentLabel.NEGATIVE
        assert clf.predict("a film")[0] == SentimentLabel.NEUTRAL
        assert abs(clf.predict("great dull")[1].sum() - 1) < 1e-12


# --- EEG baselines --------------------------------------------------------------


def cluster_records(n, dim, seed, sigma=0.1, shuffle_labels=False, seq=False):
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((3, dim)) * 2
    out = []
    for i in range(n):
        c = int(rng.integers(3))
        L = int(rng.integers(2, 6)) if seq else 1
        eeg = centers[c] + sigma * rng.standard_normal((L, dim))
        out.append(EEGSentenceRecord(f"c{i}", "A", "SR-v1.0", f"t{i}", eeg, c))
    if shuffle_labels:
        labels = [r.sentiment for r in out]
        rng.shuffle(labels)
        for r, l in zip(out, labels):
            r.sentiment = int(l)
    return out


class TestBaselines:
    def test_mlp_separable(self):
        recs = cluster_records(300, 16, 0)
        clf = train_eeg_baseline(EEGClassifierConfig("mlp", input_dim=16, hidden=32),
                                 recs, TrainConfig(learning_rate=0.05, epochs=20, batch_size=16, momentum=0.9))
        acc = np.mean([p == r.sentiment for p, r in zip(clf.predict(recs), recs)])
        assert acc >= 0.95

    def test_zero_learning_rate(self):
        recs = cluster_records(60, 16, 1)
        cfg = EEGClassifierConfig("mlp", input_dim=16, hidden=32)
        torch.manual_seed(312)
        from eeg2text.sentiment import EEGSentimentClassifier, MLPClassifier

        before = EEGSentimentClassifier(cfg, MLPClassifier(cfg)).predict_proba(recs)
        clf = train_eeg_baseline(cfg, recs, TrainConfig(learning_rate=0.0, epochs=2, batch_size=8))
        assert np.array_equal(before, clf.predict_proba(recs))

    def test_shuffled_labels_are_chance(self):
        accs = []
        for seed in range(5):
            recs = cluster_records(450, 16, seed, sigma=1.0, shuffle_labels=True)
            train, dev = recs[:300], recs[300:]
            clf = train_eeg_baseline(EEGClassifierConfig("mlp", input_dim=16, hidden=32), train,
                                     TrainConfig(learning_rate=0.01, epochs=10, batch_size=32, seed=seed,
                                                 momentum=0.9, selection_metric="dev_accuracy"), dev)
            accs.append(np.mean([p == r.sentiment for p, r in zip(clf.predict(dev), dev)]))
        assert abs(np.mean(accs) - 1 / 3) <= 0.15

    @pytest.mark.parametrize("kind", ["bilstm", "encoder"])
    def test_sequence_kinds(self, kind):
        recs = cluster_records(90, 16, 2, seq=True)
        cfg = EEGClassifierConfig(kind, input_dim=16, hidden=16, encoder_heads=2, encoder_ff_dim=32)
        clf = train_eeg_baseline(cfg, recs[:60], TrainConfig(learning_rate=0.05, epochs=15, batch_size=8,
                                                             momentum=0.9, optimizer="sgd"), recs[60:])
        p = clf.predict_proba(recs[60:])
        assert p.shape == (30, 3)
        np.testing.assert_allclose(p.sum(1), 1.0, atol=1e-6)
        assert len(clf.train_log.epochs) == 15

    def test_bilstm_has_four_bidirectional_layers(self):
        from eeg2text.sentiment import BiLSTMClassifier

        net = BiLSTMClassifier(EEGClassifierConfig("bilstm", input_dim=8, hidden=4))
        assert net.lstm.num_layers == 4 and net.lstm.bidirectional

    def test_mlp_structure(self):
        from eeg2text.sentiment import MLPClassifier

        net = MLPClassifier(EEGClassifierConfig("mlp", input_dim=8, hidden=8))
        kinds = [type(m).__name__ for m in net.net]
        assert kinds.count("Linear") == 3 and kinds.count("Dropout") == 1 and "ReLU" in kinds

    def test_missing_class_warns(self):
        recs = [r for r in cluster_records(60, 8, 3) if r.sentiment != 2]
        with pytest.warns(UserWarning, match="POSITIVE"):
            clf = train_eeg_baseline(EEGClassifierConfig("mlp", input_dim=8, hidden=8), recs,
                                     TrainConfig(learning_rate=0.01, epochs=1))
        assert clf.warnings

    def test_unlabeled_rejected(self):
        recs = cluster_records(10, 8, 3)
        recs[0].sentiment = None
        with pytest.raises(DataError):
            train_eeg_baseline(EEGClassifierConfig("mlp", input_dim=8, hidden=8), recs, TrainConfig())


# --- zero-shot pipeline -----------------------------------------------------------


def labeled_eeg(texts_labels):
    return [EEGSentenceRecord(f"z{i}", "A", "SR-v1.0", t, np.zeros((2, 4)), int(c))
            for i, (t, c) in enumerate(texts_labels)]


class TestZeroShot:
    def setup_method(self):
        self.external = make_text_corpus(300, 10)
        self.eval_pairs = make_text_corpus(40, 11)
        self.records = labeled_eeg(self.eval_pairs)

    def test_identity_stub_equals_direct_classification(self):
        clf = BagOfWordsClassifier().fit(self.external)
        decoder = TextEchoDecoder()
        for r in self.records:
            res = zero_shot_classify(decoder, clf, r)
            label, probs = clf.predict(r.text)
            assert res.label == label and res.decoded_text == r.text
            np.testing.assert_array_equal(res.probabilities, probs)

    def test_swapping_classifier_keeps_decoded_text(self):
        decoder = TextEchoDecoder()
        a = BagOfWordsClassifier().fit(self.external)
        b = KeywordClassifier(POS, NEG).fit(self.external)
        for r in self.records:
            assert zero_shot_classify(decoder, a, r).decoded_text == zero_shot_classify(decoder, b, r).decoded_text

    def test_classifier_trained_on_evaluated_texts_refused(self):
        clf = BagOfWordsClassifier().fit(self.external + self.eval_pairs[:5])
        with pytest.raises(ProvenanceError):
            zero_shot_evaluate(TextEchoDecoder(), clf, self.records)

    def test_classifier_overlapping_decoder_training_refused(self):
        clf = BagOfWordsClassifier().fit(self.external)
        decoder = TextEchoDecoder(provenance_texts=[self.external[3][0].upper()])
        with pytest.raises(ProvenanceError):
            check_provenance(decoder, clf)

    def test_untrained_classifier_refused(self):
        with pytest.raises(ProvenanceError):
            zero_shot_classify(TextEchoDecoder(), KeywordClassifier(POS, NEG), self.records[0])

    def test_exclusion_makes_pipeline_valid(self):
        ext = self.external + [(t.upper(), c) for t, c in self.eval_pairs[:5]]
        ext = exclude_overlap(ext, [r.text for r in self.records])
        clf = BagOfWordsClassifier().fit(ext)
        results, report = zero_shot_evaluate(TextEchoDecoder(), clf, self.records)
        assert len(results) == 40 and 0 <= report["macro_f1"] <= 1


# --- classification report ------------------------------------------------------


def confusion_oracle(preds, golds):
    cm = np.zeros((3, 3), dtype=int)
    for p, g in zip(preds, golds):
        cm[g, p] += 1
    out = {}
    for c in range(3):
        tp = cm[c, c]
        prec = tp / cm[:, c].sum() if cm[:, c].sum() else 0.0
        rec = tp / cm[c, :].sum() if cm[c, :].sum() else 0.0
        out[c] = (prec, rec, 2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return out, np.trace(cm) / cm.sum()


class TestReport:
    def test_perfect(self):
        golds = [0, 1, 2, 2, 1]
        r = classification_report(golds, golds)
        assert r["accuracy"] == r["macro_f1"] == 1.0
        assert all(v["f1"] == 1.0 for v in r["per_class"].values())
        assert r["predicted_distribution"] == r["gold_distribution"] == {"negative": 1, "neutral": 2, "positive": 2}

    def test_degenerate_predictor(self):
        golds = [0, 1, 2] * 10
        r = classification_report([1] * 30, golds)
        assert r["accuracy"] == pytest.approx(1 / 3)
        assert r["per_class"]["neutral"]["recall"] == 1.0
        assert r["per_class"]["negative"]["recall"] == 0.0 and r["per_class"]["positive"]["recall"] == 0.0
        assert r["predicted_distribution"] == {"negative": 0, "neutral": 30, "positive": 0}

    @pytest.mark.parametrize("seed", range(5))
    def test_confusion_oracle(self, seed):
        rng = np.random.default_rng(seed)
        preds, golds = rng.integers(0, 3, 30).tolist(), rng.integers(0, 3, 30).tolist()
        r = classification_report(preds, golds)
        per, acc = confusion_oracle(preds, golds)
        names = ["negative", "neutral", "positive"]
        for c in range(3):
            got = r["per_class"][names[c]]
            assert abs(got["precision"] - per[c][0]) <= 1e-12
            assert abs(got["recall"] - per[c][1]) <= 1e-12
            assert abs(got["f1"] - per[c][2]) <= 1e-12
        assert abs(r["macro_f1"] - np.mean([per[c][2] for c in range(3)])) <= 1e-12
        assert abs(r["accuracy"] - acc) <= 1e-12

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_sklearn(self, seed):
        from sklearn.metrics import f1_score

        rng = np.random.default_rng(seed)
        preds, golds = rng.integers(0, 3, 50).tolist(), rng.integers(0, 3, 50).tolist()
        want = f1_score(golds, preds, labels=[0, 1, 2], average="macro", zero_division=0)
        assert abs(classification_report(preds, golds)["macro_f1"] - want) <= 1e-12

    @pytest.mark.parametrize("perm", list(itertools.permutations(range(3))))
    def test_macro_f1_relabeling_invariant(self, perm):
        rng = np.random.default_rng(7)
        preds, golds = rng.integers(0, 3, 40).tolist(), rng.integers(0, 3, 40).tolist()
        base = classification_report(preds, golds)["macro_f1"]
        moved = classification_report([perm[p] for p in preds], [perm[g] for g in golds])["macro_f1"]
        assert abs(base - moved) <= 1e-12

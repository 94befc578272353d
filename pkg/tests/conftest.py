import numpy as np
import pytest
import torch

from eeg2text.data import EEGSentenceRecord


def records_equal(a: EEGSentenceRecord, b: EEGSentenceRecord) -> bool:
    return (
        a.sentence_id == b.sentence_id
        and a.subject_id == b.subject_id
        and a.task_id == b.task_id
        and a.text == b.text
        and a.sentiment == b.sentiment
        and a.eeg.dtype == b.eeg.dtype
        and a.eeg.shape == b.eeg.shape
        and a.eeg.tobytes() == b.eeg.tobytes()
    )


def make_record(sid="s0", subject="A", task="SR-v1.0", text="a b c", n_words=3, dim=8, seed=0, sentiment=None):
    rng = np.random.default_rng(seed)
    return EEGSentenceRecord(sid, subject, task, text, rng.standard_normal((n_words, dim)), sentiment)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
    yield

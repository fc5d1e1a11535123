"""Sieve quality (precision / recall / F-score) and model accuracy."""
import csv
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyDataset, LengthMismatch
from .loss import sieve_margin
from .model import forward


@dataclass(frozen=True)
class SieveReport:
    precision: float
    recall: float
    f_score: float
    num_selected: int
    num_clean: int
    num_selected_clean: int

    def as_row(self):
        return asdict(self)


def _ratio(a, b):
    return a / b if b > 0 else 0.0


def sieve_report(v, clean_labels, noisy_labels):
    """Selection quality of the flags ``v`` against ground-truth cleanliness.

    Zero denominators give 0 rather than NaN, so an empty selection scores
    precision = recall = F = 0.
    """
    v = np.asarray(v, dtype=bool)
    y, yt = np.asarray(clean_labels), np.asarray(noisy_labels)
    if not (v.shape == y.shape == yt.shape):
        raise LengthMismatch(f"lengths differ: v={v.shape}, clean={y.shape}, noisy={yt.shape}")
    clean = y == yt
    selected = int(v.sum())
    n_clean = int(clean.sum())
    hit = int((v & clean).sum())
    pre = _ratio(hit, selected)
    rec = _ratio(hit, n_clean)
    f = _ratio(2 * pre * rec, pre + rec)
    return SieveReport(pre, rec, f, selected, n_clean, hit)


def predict(model, features):
    # argmax returns the first maximal index: ties go to the smallest class
    return np.argmax(forward(model, features), axis=-1)


def test_accuracy(model, test_data):
    """Fraction of test samples whose argmax prediction equals the clean label."""
    if len(test_data) == 0:
        raise EmptyDataset("empty test set")
    return float(np.mean(predict(model, test_data.features) == np.asarray(test_data.clean_labels)))


# pytest would otherwise try to collect this as a test function
test_accuracy.__test__ = False


def loss_histogram(model, data, prior, beta):
    """Rows ``(index, centered_loss, is_clean)`` with centered_loss = loss + l_CR - alpha."""
    probs = forward(model, data.features)
    centered = sieve_margin(probs, np.asarray(data.noisy_labels), prior, beta)
    return [(n, float(c), bool(k)) for n, (c, k) in enumerate(zip(centered, data.is_clean))]


def write_loss_histogram(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "centered_loss", "is_clean"])
        for n, c, k in rows:
            w.writerow([n, repr(c), int(k)])


def write_rows(rows, path, columns=None):
    """Write dict rows as CSV; floats use ``repr`` so files are bit-exact."""
    columns = columns or list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else v

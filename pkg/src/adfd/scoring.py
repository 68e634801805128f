"""Score aggregation, fusion, and evaluation metrics.

The score of an utterance is its aggregated bonafide probability, so
higher means more likely genuine. Class indices are 0 = bonafide,
1 = spoof throughout.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyClassError,
    EmptyInputError,
    MissingKeyError,
    UtteranceMismatchError,
)

BONAFIDE, SPOOF = 0, 1
DECISION_THRESHOLD = 0.5


def aggregate_clip(segment_probs) -> np.ndarray:
    """Mean of the per-segment probability vectors of one clip."""
    probs = np.asarray(list(segment_probs), dtype=np.float64)
    if probs.size == 0:
        raise EmptyInputError("no segment probabilities to aggregate")
    if probs.ndim != 2 or probs.shape[1] != 2:
        raise EmptyInputError(f"expected (N, 2) probabilities, got shape {probs.shape}")
    return probs.mean(axis=0)


def fuse_mean(system_probs, utt_ids=None) -> np.ndarray:
    """Mean of per-system probability vectors for one utterance.

    utt_ids, when given, must all be equal; it guards against fusing
    scores of different utterances.
    """
    if utt_ids is not None:
        ids = list(utt_ids)
        if len(set(ids)) > 1:
            raise UtteranceMismatchError(f"fusing different utterances: {sorted(set(ids))}")
    probs = np.asarray(list(system_probs), dtype=np.float64)
    if probs.size == 0:
        raise EmptyInputError("no system probabilities to fuse")
    if probs.ndim != 2 or probs.shape[1] != 2:
        raise EmptyInputError(f"expected (S, 2) probabilities, got shape {probs.shape}")
    return probs.mean(axis=0)


def decide(probs) -> int:
    """Argmax class; an exact tie goes to bonafide (index 0)."""
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != (2,):
        raise EmptyInputError(f"expected a length-2 probability vector, got shape {p.shape}")
    return int(np.argmax(p))


def _operating_points(bona: np.ndarray, spoof: np.ndarray):
    """FAR/FRR at every distinct score, with accept iff score >= t.

    Returns (thresholds, far, frr) plus one sentinel point just above the
    highest score where everything is rejected. far is non-increasing and
    frr non-decreasing in t.
    """
    thresholds = np.unique(np.concatenate([bona, spoof]))
    spoof_sorted = np.sort(spoof)
    bona_sorted = np.sort(bona)
    far = 1.0 - np.searchsorted(spoof_sorted, thresholds, side="left") / spoof.size
    frr = np.searchsorted(bona_sorted, thresholds, side="left") / bona.size
    thresholds = np.append(thresholds, np.nextafter(thresholds[-1], np.inf))
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)
    return thresholds, far, frr


def _check_scores(bona, spoof):
    bona = np.asarray(bona, dtype=np.float64).ravel()
    spoof = np.asarray(spoof, dtype=np.float64).ravel()
    if bona.size == 0 or spoof.size == 0:
        raise EmptyClassError(
            f"need both classes: {bona.size} bonafide, {spoof.size} spoof scores")
    if not (np.isfinite(bona).all() and np.isfinite(spoof).all()):
        raise EmptyClassError("scores must be finite")
    return bona, spoof


def compute_eer(bonafide_scores, spoof_scores) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Sweeps every distinct score as a threshold (accept iff score >= t),
    then linearly interpolates FAR, FRR, and t between the two adjacent
    operating points where FAR - FRR changes sign.

    Returns:
        (eer, threshold), both floats.
    """
    bona, spoof = _check_scores(bonafide_scores, spoof_scores)
    thresholds, far, frr = _operating_points(bona, spoof)
    diff = far - frr  # non-increasing, starts at 1, ends at -1
    j = int(np.argmax(diff < 0.0))
    i = j - 1
    alpha = diff[i] / (diff[i] - diff[j])
    eer = far[i] + alpha * (far[j] - far[i])
    threshold = thresholds[i] + alpha * (thresholds[j] - thresholds[i])
    return float(eer), float(threshold)


def compute_auc(bonafide_scores, spoof_scores) -> float:
    """Trapezoidal area under the ROC with bonafide as the positive
    class. Equals the fraction of correctly ordered (bonafide, spoof)
    pairs with ties counted half."""
    bona, spoof = _check_scores(bonafide_scores, spoof_scores)
    thresholds = np.unique(np.concatenate([bona, spoof]))[::-1]
    tpr = 1.0 - np.searchsorted(np.sort(bona), thresholds, side="left") / bona.size
    fpr = 1.0 - np.searchsorted(np.sort(spoof), thresholds, side="left") / spoof.size
    tpr = np.concatenate([[0.0], tpr, [1.0]])
    fpr = np.concatenate([[0.0], fpr, [1.0]])
    return float(np.trapezoid(tpr, fpr))


@dataclass
class DetPoint:
    threshold: float
    far: float   # false alarm rate: spoof accepted as bonafide
    frr: float   # miss rate: bonafide rejected


@dataclass
class EvalReport:
    """Summary metrics over one scored trial list."""

    accuracy: float
    f1: float
    auc: float
    eer: float
    eer_threshold: float
    det_points: list[DetPoint]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "auc": self.auc,
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
        }


def compute_metrics(scores, keys: dict[str, int]) -> EvalReport:
    """Evaluate (utt_id, bonafide score) pairs against protocol keys.

    Decisions use `decide` on (score, 1 - score), i.e. a 0.5 threshold
    with ties going to bonafide. F1 treats spoof as the positive class.
    Every scored utt_id must appear in keys.
    """
    scores = list(scores)
    if not scores:
        raise EmptyInputError("no scores to evaluate")
    labels = np.empty(len(scores), dtype=np.int64)
    values = np.empty(len(scores), dtype=np.float64)
    for i, (utt_id, score) in enumerate(scores):
        if utt_id not in keys:
            raise MissingKeyError(f"utterance {utt_id!r} has no protocol key")
        labels[i] = keys[utt_id]
        values[i] = score

    bona = values[labels == BONAFIDE]
    spoof = values[labels == SPOOF]
    eer, threshold = compute_eer(bona, spoof)
    auc = compute_auc(bona, spoof)

    preds = np.fromiter(
        (decide((v, 1.0 - v)) for v in values), dtype=np.int64, count=len(values))
    accuracy = float((preds == labels).mean())
    tp = int(((preds == SPOOF) & (labels == SPOOF)).sum())
    fp = int(((preds == SPOOF) & (labels == BONAFIDE)).sum())
    fn = int(((preds == BONAFIDE) & (labels == SPOOF)).sum())
    f1 = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0

    thresholds, far, frr = _operating_points(bona, spoof)
    det = [DetPoint(float(t), float(a), float(r))
           for t, a, r in zip(thresholds[:-1], far[:-1], frr[:-1])]
    return EvalReport(accuracy=accuracy, f1=f1, auc=auc, eer=eer,
                      eer_threshold=threshold, det_points=det)


# --------------------------------------------------------------------------
# Score files and DET curves
# --------------------------------------------------------------------------

def write_scores(path: str | Path, scores) -> None:
    """One '<utt_id> <score>' line per utterance, 9 significant digits."""
    with open(path, "w", encoding="ascii") as fh:
        for utt_id, score in scores:
            fh.write(f"{utt_id} {score:.9g}\n")


def read_scores(path: str | Path) -> list[tuple[str, float]]:
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise EmptyInputError(f"{path}:{line_no}: expected '<utt_id> <score>'")
            out.append((parts[0], float(parts[1])))
    return out


def write_det_csv(path: str | Path, det_points: list[DetPoint]) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "far", "frr"])
        for p in det_points:
            writer.writerow([f"{p.threshold:.9g}", f"{p.far:.9g}", f"{p.frr:.9g}"])

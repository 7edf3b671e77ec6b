"""Top-1 accuracy and confidence/correctness histograms."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError


@dataclass
class ConfidenceHistogram:
    """Counts of (in)correct predictions binned by max predicted probability."""

    bin_edges: np.ndarray      # B+1 edges ascending from 1/C to 1
    correct_counts: np.ndarray
    incorrect_counts: np.ndarray


def _check_rows(probs: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.ndim != 1 or len(probs) != len(labels):
        raise ShapeError(
            f"probs {probs.shape} and labels {labels.shape} do not align"
        )
    return probs, labels


def accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax matches the label; ties go to the lowest index."""
    probs, labels = _check_rows(probs, labels)
    if len(labels) == 0:
        raise ShapeError("cannot score an empty batch")
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def confidence_histogram(
    probs: np.ndarray, labels: np.ndarray, bins: int = 10
) -> ConfidenceHistogram:
    """Equal-width bins over [1/C, 1]; boundary values fall to the lower bin
    except at the final edge."""
    probs, labels = _check_rows(probs, labels)
    if bins < 1:
        raise ShapeError(f"need at least one bin, got {bins}")
    c = probs.shape[1]
    edges = np.linspace(1.0 / c, 1.0, bins + 1)
    confidence = probs.max(axis=1)
    idx = np.clip(np.searchsorted(edges, confidence, side="left") - 1, 0, bins - 1)
    correct_mask = np.argmax(probs, axis=1) == labels
    correct = np.bincount(idx[correct_mask], minlength=bins)
    incorrect = np.bincount(idx[~correct_mask], minlength=bins)
    return ConfidenceHistogram(edges, correct, incorrect)


def mean_counts(hists: list[ConfidenceHistogram]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Average correct/incorrect counts across models sharing the same binning."""
    if not hists:
        raise ShapeError("no histograms to average")
    edges = hists[0].bin_edges
    for h in hists[1:]:
        if not np.array_equal(h.bin_edges, edges):
            raise ShapeError("histograms have different bin edges")
    correct = np.mean([h.correct_counts for h in hists], axis=0)
    incorrect = np.mean([h.incorrect_counts for h in hists], axis=0)
    return edges, correct, incorrect


def write_confidence_hist_csv(
    path: str | Path,
    entries: list[tuple[str, np.ndarray, np.ndarray, np.ndarray]],
) -> None:
    """Rows `bin_lo,bin_hi,correct,incorrect,model_tag`, one block per model tag.

    Each entry is (tag, edges, correct_counts, incorrect_counts); counts may
    be fractional for averaged histograms.
    """
    def fmt(v) -> str:
        f = float(v)
        return str(int(f)) if f == int(f) else repr(f)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "correct", "incorrect", "model_tag"])
        for tag, edges, correct, incorrect in entries:
            for b in range(len(correct)):
                writer.writerow(
                    [repr(float(edges[b])), repr(float(edges[b + 1])),
                     fmt(correct[b]), fmt(incorrect[b]), tag]
                )

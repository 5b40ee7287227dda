"""Fidelity metrics: pixel RMSE / error ratio and macro matching scores."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .render import RasterImage


def pixel_metrics(truth: RasterImage, constructed: RasterImage) -> tuple[float, float]:
    """(rmse, per) between two equal-size RGBA rasters.

    RMSE runs over every pixel's four channels (n = W*H*4) in 0..255 units;
    PER counts a pixel once when any channel differs.
    """
    if (truth.width, truth.height) != (constructed.width, constructed.height):
        raise ValueError(
            f"dimension mismatch: {truth.width}x{truth.height} vs {constructed.width}x{constructed.height}"
        )
    a = truth.pixels.astype(np.float64)
    b = constructed.pixels.astype(np.float64)
    rmse = float(np.sqrt(np.mean((a - b) ** 2)))
    per = float(np.mean(np.any(truth.pixels != constructed.pixels, axis=-1)))
    return rmse, per


UNMATCHED = "UNMATCHED"


def matching_metrics(
    predicted: dict[str, str], truth: dict[str, str]
) -> tuple[float, float, float]:
    """Macro precision/recall/F1 over target classes (groups plus UNMATCHED).

    Both maps must cover the same UI leaf set; values are class labels.
    Classes with neither predictions nor truths are excluded; a class with
    truths but no predictions scores precision 0. Macro = unweighted mean.
    """
    if set(predicted) != set(truth):
        missing = set(truth) ^ set(predicted)
        raise ValueError(f"coverage mismatch on UI ids: {sorted(missing)[:5]}")
    classes = sorted(set(truth.values()) | set(predicted.values()))
    precisions, recalls, f1s = [], [], []
    for cls in classes:
        tp = sum(1 for k in truth if predicted[k] == cls and truth[k] == cls)
        fp = sum(1 for k in truth if predicted[k] == cls and truth[k] != cls)
        fn = sum(1 for k in truth if predicted[k] != cls and truth[k] == cls)
        if tp + fp + fn == 0:
            continue
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    if not precisions:
        return 1.0, 1.0, 1.0  # both maps empty
    return float(np.mean(precisions)), float(np.mean(recalls)), float(np.mean(f1s))


@dataclass
class SampleMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    rmse: float
    per: float
    pixels: int
    match_seconds: float = 0.0


@dataclass
class EvalReport:
    """Aggregate over samples; pixel metrics are pixel-count weighted."""

    samples: list[SampleMetrics] = field(default_factory=list)

    @property
    def precision(self) -> float:
        return float(np.mean([s.precision for s in self.samples])) if self.samples else 0.0

    @property
    def recall(self) -> float:
        return float(np.mean([s.recall for s in self.samples])) if self.samples else 0.0

    @property
    def f1(self) -> float:
        return float(np.mean([s.f1 for s in self.samples])) if self.samples else 0.0

    def _weighted(self, key: str) -> float:
        if not self.samples:
            return 0.0
        weights = np.array([s.pixels for s in self.samples], dtype=np.float64)
        values = np.array([getattr(s, key) for s in self.samples], dtype=np.float64)
        return float((weights * values).sum() / weights.sum())

    @property
    def rmse(self) -> float:
        return self._weighted("rmse")

    @property
    def per(self) -> float:
        return self._weighted("per")

    @property
    def mean_match_seconds(self) -> float:
        return float(np.mean([s.match_seconds for s in self.samples])) if self.samples else 0.0

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "rmse": self.rmse,
            "per": self.per,
            "mean_match_seconds": self.mean_match_seconds,
            "samples": [vars(s) for s in self.samples],
        }

"""Cluster post-processing, the defected/normal decision and accuracy metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class Cluster:
    coords: np.ndarray  # (n, 2) row, col
    mean_intensity: float = float("nan")

    @property
    def size(self) -> int:
        return int(len(self.coords))


@dataclass
class DetectionDecision:
    verdict: str
    clusters: list[Cluster] = field(default_factory=list)

    @property
    def defected(self) -> bool:
        return self.verdict == "defected"

    @property
    def largest(self) -> int:
        return max((c.size for c in self.clusters), default=0)


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def f1(self) -> float:
        return f1_score(self.tp, self.fp, self.fn)


# pixel-level and sample-level confusion share one layout
PixelConfusion = Confusion
SampleConfusion = Confusion


def f1_score(tp, fp, fn) -> float:
    """``TP / (TP + (FP + FN) / 2)``; 1.0 when all three counts are zero."""
    denom = tp + 0.5 * (fp + fn)
    return 1.0 if denom == 0 else tp / denom


def connected_components(mask, image=None) -> list[Cluster]:
    """8-connected clusters of true pixels, ordered by (min row, min col)."""
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    rows, cols = np.nonzero(labels)
    labs = labels[rows, cols]
    order = np.argsort(labs, kind="stable")
    bounds = np.cumsum(np.bincount(labs, minlength=n + 1)[1:])[:-1]
    values = np.asarray(image, dtype=float)[rows, cols] if image is not None else None
    clusters = []
    for idx in np.split(order, bounds):
        coords = np.column_stack([rows[idx], cols[idx]])
        mean = float(values[idx].mean()) if values is not None else float("nan")
        clusters.append(Cluster(coords, mean))
    clusters.sort(key=lambda c: (int(c.coords[:, 0].min()), int(c.coords[:, 1].min())))
    return clusters


def filter_clusters(clusters, min_size: int = 30) -> list[Cluster]:
    if min_size < 0:
        raise ValueError("min_size must be non-negative")
    return [c for c in clusters if c.size >= min_size]


def decide(clusters) -> DetectionDecision:
    clusters = list(clusters)
    return DetectionDecision("defected" if clusters else "normal", clusters)


def detect(mask, image=None, min_size: int = 30) -> DetectionDecision:
    return decide(filter_clusters(connected_components(mask, image), min_size))


def clusters_mask(clusters, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for c in clusters:
        out[c.coords[:, 0], c.coords[:, 1]] = True
    return out


def pixel_f1(pred, gt, foreground=None):
    """Pixel confusion restricted to ``foreground`` (all pixels if omitted) and its F1."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground truth shapes differ")
    fg = np.ones(pred.shape, bool) if foreground is None else np.asarray(foreground, dtype=bool)
    p, g = pred[fg], gt[fg]
    conf = Confusion(
        tp=int(np.count_nonzero(p & g)),
        fp=int(np.count_nonzero(p & ~g)),
        fn=int(np.count_nonzero(~p & g)),
        tn=int(np.count_nonzero(~p & ~g)),
    )
    return conf, conf.f1()


def sample_metrics(decisions):
    """Sample-level confusion from ``(verdict, has_defect)`` pairs.

    ``verdict`` may be a :class:`DetectionDecision`, the string
    ``"defected"``/``"normal"`` or a bool. Returns ``(confusion, f1, tpr, tnr)``;
    a rate with an empty denominator is NaN.
    """
    decisions = list(decisions)
    if not decisions:
        raise ValueError("sample_metrics needs at least one decision")
    conf = Confusion()
    for verdict, truth in decisions:
        if isinstance(verdict, DetectionDecision):
            pos = verdict.defected
        elif isinstance(verdict, str):
            if verdict not in ("defected", "normal"):
                raise ValueError(f"unknown verdict {verdict!r}")
            pos = verdict == "defected"
        else:
            pos = bool(verdict)
        if pos and truth:
            conf.tp += 1
        elif pos:
            conf.fp += 1
        elif truth:
            conf.fn += 1
        else:
            conf.tn += 1
    tpr = conf.tp / (conf.tp + conf.fn) if conf.tp + conf.fn else float("nan")
    tnr = conf.tn / (conf.tn + conf.fp) if conf.tn + conf.fp else float("nan")
    return conf, conf.f1(), tpr, tnr

"""Offline metrics: AUC, log loss, and per behavior-length bucket reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ctrmodel import Sample, cross_entropy

# (bucket id, lowest click count, highest click count)
BUCKETS = ((0, 0, 0), (1, 1, 2), (2, 3, 5), (3, 6, 10), (4, 11, 20))


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC from average ranks; tied scores get half credit."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # average 1-based rank over each run of equal scores
    bounds = np.flatnonzero(np.diff(sorted_s)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(s)]])
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(avg, ends - starts)
    rank_sum = ranks[y == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def bucket_of(num_clicks: int) -> int:
    for bucket, lo, hi in BUCKETS:
        if lo <= num_clicks <= hi:
            return bucket
    return BUCKETS[-1][0]


def bucket_label(bucket: int) -> str:
    _, lo, hi = BUCKETS[bucket]
    return str(lo) if lo == hi else f"{lo}-{hi}"


@dataclass
class BucketStats:
    bucket: int
    count: int
    auc: dict[str, float | None]  # None when the bucket holds one class only


@dataclass
class EvalReport:
    overall_auc: dict[str, float]
    logloss: dict[str, float]
    per_bucket: list[BucketStats] = field(default_factory=list)

    @property
    def models(self) -> list[str]:
        return list(self.overall_auc)

    def to_text(self) -> str:
        """Aligned table: overall metrics, then AUC per behavior-length bucket."""
        models = self.models
        w = max([10] + [len(m) for m in models]) + 2
        lines = ["model".ljust(w) + "auc".rjust(10) + "logloss".rjust(10)]
        for m in models:
            lines.append(m.ljust(w) + f"{self.overall_auc[m]:10.6f}{self.logloss[m]:10.6f}")
        lines.append("")
        lines.append("bucket".ljust(8) + "clicks".ljust(8) + "count".rjust(7) + "".join(m.rjust(w) for m in models))
        for b in self.per_bucket:
            cells = "".join(("-" if b.auc[m] is None else f"{b.auc[m]:.6f}").rjust(w) for m in models)
            lines.append(str(b.bucket).ljust(8) + bucket_label(b.bucket).ljust(8) + str(b.count).rjust(7) + cells)
        if len(models) > 1:
            ref = models[0]
            lines.append("")
            lines.append(f"AUC gap vs {ref}")
            lines.append("bucket".ljust(8) + "clicks".ljust(8) + "".join(m.rjust(w) for m in models[1:]))
            for b in self.per_bucket:
                gaps = []
                for m in models[1:]:
                    a, r = b.auc[m], b.auc[ref]
                    gaps.append("-" if a is None or r is None else f"{a - r:+.6f}")
                lines.append(str(b.bucket).ljust(8) + bucket_label(b.bucket).ljust(8) + "".join(g.rjust(w) for g in gaps))
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        """One ``metric<TAB>value`` line per number."""
        lines = []
        for m in self.models:
            lines.append(f"{m}.auc\t{self.overall_auc[m]:.17g}")
            lines.append(f"{m}.logloss\t{self.logloss[m]:.17g}")
        for b in self.per_bucket:
            lines.append(f"bucket{b.bucket}.count\t{b.count}")
            for m in self.models:
                v = b.auc[m]
                lines.append(f"bucket{b.bucket}.{m}.auc\t{'nan' if v is None else format(v, '.17g')}")
        return "\n".join(lines) + "\n"


def bucket_report(samples: Sequence[Sample], scores: Mapping[str, Sequence[float]]) -> EvalReport:
    """Overall and per-bucket metrics for one or more aligned score lists."""
    labels = np.array([s.label for s in samples])
    lengths = np.array([len(s.pre_clicks) for s in samples], dtype=int)
    buckets = np.array([bucket_of(n) for n in lengths], dtype=int)
    arrays = {}
    for name, sc in scores.items():
        arr = np.asarray(sc, dtype=np.float64)
        if arr.shape != labels.shape:
            raise ValueError(f"scores for {name!r} are not aligned with the samples")
        arrays[name] = arr
    overall = {name: auc(arr, labels) for name, arr in arrays.items()}
    logloss = {name: cross_entropy(arr, labels) for name, arr in arrays.items()}
    per_bucket = []
    for b, _, _ in BUCKETS:
        mask = buckets == b
        count = int(mask.sum())
        if count == 0:
            continue
        y = labels[mask]
        single = y.min() == y.max()
        per_bucket.append(BucketStats(b, count, {name: None if single else auc(arr[mask], y) for name, arr in arrays.items()}))
    return EvalReport(overall, logloss, per_bucket)

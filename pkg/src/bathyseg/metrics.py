"""Segmentation metrics pooled over pixel counts, plus runtime-per-MB.

All scalar metrics derive from global true/false positive/negative pixel
counts, so evaluating tile-by-tile and summing counts gives exactly the same
numbers as evaluating one concatenated mask (higher-resolution layers carry
proportionally more weight). Degenerate denominators yield 0 with an explicit
flag instead of NaN so aggregation stays total.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyList, ShapeMismatch


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("counts must be >= 0")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class PerWreck:
    wreck_id: str
    iou_ship: float
    resolution: float | None = None
    mean_depth: float | None = None


@dataclass(frozen=True)
class RuntimeRecord:
    layer_id: str
    runtime_s: float
    size_mb: float

    def __post_init__(self):
        if not self.size_mb > 0:
            raise ValueError("size_mb must be positive")
        if self.runtime_s < 0:
            raise ValueError("runtime_s must be >= 0")


@dataclass
class MetricsReport:
    counts: ConfusionCounts
    iou_ship: float
    iou_terrain: float
    f1: float
    precision: float
    recall: float
    degenerate: list[str]
    per_wreck: list[PerWreck] = field(default_factory=list)
    wreck_count_pct: float | None = None
    groups: dict[str, list[tuple[str, "MetricsReport"]]] = field(default_factory=dict)


def confusion(
    pred: np.ndarray, gt: np.ndarray, valid: np.ndarray | None = None
) -> ConfusionCounts:
    """Pixel counts over valid cells; ship (nonzero) is the positive class."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    if valid is None:
        valid = np.ones(pred.shape, dtype=bool)
    elif np.asarray(valid).shape != pred.shape:
        raise ShapeMismatch(f"valid {np.asarray(valid).shape} vs pred {pred.shape}")
    p = (pred != 0) & valid
    g = (gt != 0) & valid
    return ConfusionCounts(
        tp=int((p & g).sum()),
        fp=int((p & ~g & valid).sum()),
        tn=int((~p & ~g & valid).sum()),
        fn=int((~p & g & valid).sum()),
    )


def _ratio(num: int, denom: int, name: str, degenerate: list[str]) -> float:
    if denom == 0:
        degenerate.append(name)
        return 0.0
    return num / denom


def report(
    counts: ConfusionCounts,
    per_wreck: list[PerWreck] | None = None,
    tau: float = 0.2,
) -> MetricsReport:
    """Scalar metrics from pooled counts, with optional per-wreck IoU list."""
    degenerate: list[str] = []
    iou_ship = _ratio(counts.tp, counts.tp + counts.fp + counts.fn, "iou_ship", degenerate)
    iou_terrain = _ratio(counts.tn, counts.tn + counts.fp + counts.fn, "iou_terrain", degenerate)
    precision = _ratio(counts.tp, counts.tp + counts.fp, "precision", degenerate)
    recall = _ratio(counts.tp, counts.tp + counts.fn, "recall", degenerate)
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        degenerate.append("f1")
        f1 = 0.0
    per_wreck = per_wreck or []
    pct = None
    if per_wreck:
        pct = wreck_count_pct([w.iou_ship for w in per_wreck], tau)
    return MetricsReport(
        counts=counts,
        iou_ship=iou_ship,
        iou_terrain=iou_terrain,
        f1=f1,
        precision=precision,
        recall=recall,
        degenerate=degenerate,
        per_wreck=per_wreck,
        wreck_count_pct=pct,
    )


def wreck_count_pct(ious: list[float], tau: float = 0.2) -> float:
    """Fraction of wrecks with IoU_ship of at least tau."""
    if not ious:
        raise EmptyList("no per-wreck IoUs")
    return sum(1 for v in ious if v >= tau) / len(ious)


def runtime_per_mb(records: list[RuntimeRecord]) -> float:
    """Mean of per-layer runtime/size ratios (seconds per MB)."""
    if not records:
        raise EmptyList("no runtime records")
    return sum(r.runtime_s / r.size_mb for r in records) / len(records)


# ---------------------------------------------------------------------------
# grouped breakdowns
# ---------------------------------------------------------------------------


def bucket_edges(values: list[float], n_buckets: int = 10) -> list[float]:
    """Default bucketing: deciles over the observed range."""
    if not values:
        raise EmptyList("no values to bucket")
    arr = np.asarray(values, dtype=np.float64)
    qs = np.quantile(arr, np.linspace(0.0, 1.0, n_buckets + 1))
    return sorted(set(float(q) for q in qs))


def grouped_report(
    entries: list[tuple[ConfusionCounts, float]],
    edges: list[float] | None = None,
) -> list[tuple[str, MetricsReport]]:
    """Pool per-entry counts into buckets of the grouping value.

    entries pair each tile's counts with its group key (resolution or depth);
    buckets pool counts, so each bucket's metrics obey the same global-pool
    law as the overall report.
    """
    if not entries:
        raise EmptyList("no entries to group")
    values = [v for _, v in entries]
    if edges is None:
        edges = bucket_edges(values)
    if len(edges) < 2:
        edges = [min(values), max(values) + 1.0]
    out = []
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        last = i == len(edges) - 2
        pooled = ConfusionCounts()
        n = 0
        for counts, v in entries:
            if (lo <= v < hi) or (last and v == hi):
                pooled = pooled + counts
                n += 1
        if n:
            out.append((f"[{lo:g}, {hi:g}{']' if last else ')'}", report(pooled)))
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def format_report(rep: MetricsReport) -> str:
    """Human-readable table."""
    c = rep.counts
    lines = [
        "metric        value",
        "-----------   -------",
        f"iou_ship      {rep.iou_ship:.4f}",
        f"iou_terrain   {rep.iou_terrain:.4f}",
        f"f1            {rep.f1:.4f}",
        f"precision     {rep.precision:.4f}",
        f"recall        {rep.recall:.4f}",
    ]
    if rep.wreck_count_pct is not None:
        lines.append(f"wreck_count%  {rep.wreck_count_pct:.4f}")
    lines.append(f"pixels        tp={c.tp} fp={c.fp} tn={c.tn} fn={c.fn}")
    if rep.degenerate:
        lines.append(f"degenerate    {','.join(rep.degenerate)}")
    for key, buckets in rep.groups.items():
        lines.append(f"-- grouped by {key} --")
        for label, sub in buckets:
            lines.append(f"{key} {label}: iou_ship={sub.iou_ship:.4f} (n/a={bool(sub.degenerate)})")
    return "\n".join(lines)


def report_records(rep: MetricsReport) -> str:
    """Machine-readable line-delimited records (one JSON object per line)."""
    c = rep.counts
    rows = [
        {
            "record": "summary",
            "tp": c.tp,
            "fp": c.fp,
            "tn": c.tn,
            "fn": c.fn,
            "iou_ship": rep.iou_ship,
            "iou_terrain": rep.iou_terrain,
            "f1": rep.f1,
            "precision": rep.precision,
            "recall": rep.recall,
            "wreck_count_pct": rep.wreck_count_pct,
            "degenerate": rep.degenerate,
        }
    ]
    for w in rep.per_wreck:
        rows.append(
            {
                "record": "wreck",
                "id": w.wreck_id,
                "iou_ship": w.iou_ship,
                "resolution": w.resolution,
                "mean_depth": w.mean_depth,
            }
        )
    for key, buckets in rep.groups.items():
        for label, sub in buckets:
            rows.append(
                {
                    "record": "group",
                    "by": key,
                    "bucket": label,
                    "iou_ship": sub.iou_ship,
                    "f1": sub.f1,
                    "tp": sub.counts.tp,
                    "fp": sub.counts.fp,
                    "tn": sub.counts.tn,
                    "fn": sub.counts.fn,
                }
            )
    return "\n".join(json.dumps(r, separators=(",", ":")) for r in rows)

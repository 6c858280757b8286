"""Confusion counting and F-measure aggregation for mask benchmarks.

Counts are summed over a whole sequence before the F-measure is taken
(sequence-level accumulation), which is not the same as averaging per-frame
F values.  Category scores are arithmetic means of their videos' F values,
and the overall score is the mean of category means.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_io import Label


@dataclass
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn,
                               self.fp + other.fp, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def accumulate(pred_mask: np.ndarray, labels: np.ndarray,
               counts: ConfusionCounts | None = None) -> ConfusionCounts:
    """Add one frame's pixels to the confusion counts.

    Pixels labeled EXCLUDED, OUT_OF_ROI or UNLABELED are skipped entirely.
    """
    pred = np.asarray(pred_mask).astype(bool)
    labels = np.asarray(labels)
    if pred.shape != labels.shape:
        raise ValueError(f"shape mismatch: mask {pred.shape} vs labels {labels.shape}")
    counts = counts if counts is not None else ConfusionCounts()
    foreground = labels == Label.FOREGROUND
    background = labels == Label.BACKGROUND
    counts.tp += int(np.count_nonzero(foreground & pred))
    counts.fn += int(np.count_nonzero(foreground & ~pred))
    counts.fp += int(np.count_nonzero(background & pred))
    counts.tn += int(np.count_nonzero(background & ~pred))
    return counts


def f_measure(counts: ConfusionCounts) -> float | None:
    """Harmonic mean of precision and recall: TP / (TP + (FN + FP) / 2).

    Returns None when the denominator is zero (no foreground in the ROI and
    no false positives); such videos are excluded from averages.
    """
    denominator = counts.tp + (counts.fn + counts.fp) / 2.0
    if denominator == 0:
        return None
    return counts.tp / denominator


@dataclass
class EvalReport:
    per_video: dict
    per_category: dict
    overall: float | None
    counts: dict = field(default_factory=dict)
    undefined_videos: list = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_video": self.per_video,
            "per_category": self.per_category,
            "overall": self.overall,
            "counts": {k: v.as_dict() for k, v in self.counts.items()},
            "undefined_videos": self.undefined_videos,
            "config": self.config_echo,
        }

    def to_text(self) -> str:
        lines = ["video F-measures:"]
        for video, score in sorted(self.per_video.items()):
            shown = "n/a" if score is None else f"{score:.4f}"
            lines.append(f"  {video}: {shown}")
        lines.append("category means:")
        for category, score in sorted(self.per_category.items()):
            lines.append(f"  {category}: {score:.4f}")
        overall = "n/a" if self.overall is None else f"{self.overall:.4f}"
        lines.append(f"overall (mean of category means): {overall}")
        if self.undefined_videos:
            lines.append("videos with undefined F (excluded from means): "
                         + ", ".join(sorted(self.undefined_videos)))
        return "\n".join(lines) + "\n"


def aggregate(per_video: dict, category_map: dict | None = None,
              counts: dict | None = None, config_echo: dict | None = None) -> EvalReport:
    """Combine per-video F values into category means and an overall mean.

    ``category_map`` maps video name -> category; without one, every video
    falls into a single "all" category.  Videos with undefined F are dropped
    from the means and listed in the report.
    """
    if not per_video:
        raise ValueError("no videos to aggregate")
    category_map = category_map or {video: "all" for video in per_video}
    groups: dict[str, list[float]] = {}
    undefined = []
    for video, score in per_video.items():
        category = category_map.get(video, "all")
        groups.setdefault(category, [])
        if score is None:
            undefined.append(video)
        else:
            groups[category].append(score)
    per_category = {}
    for category, scores in groups.items():
        if not scores:
            continue
        per_category[category] = float(np.mean(scores))
    overall = float(np.mean(list(per_category.values()))) if per_category else None
    return EvalReport(per_video=dict(per_video), per_category=per_category,
                      overall=overall, counts=counts or {},
                      undefined_videos=undefined, config_echo=config_echo or {})


def write_report(report: EvalReport, out_dir: Path) -> None:
    """Emit the machine-readable table and the human-readable summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    (out_dir / "report.txt").write_text(report.to_text())


def category_chart(report: EvalReport, path: Path) -> None:
    """Optional bar chart of the category means (requires matplotlib)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = sorted(report.per_category)
    values = [report.per_category[n] for n in names]
    fig, ax = plt.subplots(figsize=(max(4, 0.7 * len(names)), 3.2))
    ax.bar(names, values, color="#4878d0")
    ax.set_ylim(0, 1)
    ax.set_ylabel("F-measure")
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

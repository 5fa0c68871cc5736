"""Leaf-level (pixel) and grapevine-level (windowed) detection metrics.

Evaluation runs over four classes: shadow, ground, healthy and the
symptomatic class induced by the chosen fusion mode.  Metrics with a
zero denominator are reported as explicit ``None`` markers (rendered
"—"), never as silent zeros, and are excluded from cross-image averages
with a footnoted count.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .fusion import DiseaseLabel, FusionMode, symptom_mask

EVAL_CLASSES = ("shadow", "ground", "healthy", "symptomatic")
METRIC_NAMES = ("recall", "precision", "f1")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(pred: np.ndarray, truth: np.ndarray, cls: int) -> ConfusionCounts:
    """One-vs-rest pixel counts for class ``cls``."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ContractError(f"raster dimensions differ: {pred.shape} vs {truth.shape}")
    p = pred == cls
    t = truth == cls
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    tn = int(np.sum(~p & ~t))
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def recall(cm: ConfusionCounts) -> float | None:
    d = cm.tp + cm.fn
    return cm.tp / d if d else None


def precision(cm: ConfusionCounts) -> float | None:
    d = cm.tp + cm.fp
    return cm.tp / d if d else None


def f1(cm: ConfusionCounts) -> float | None:
    r = recall(cm)
    p = precision(cm)
    if r is None or p is None or r + p == 0:
        # the reduced 2TP/(FP+2TP+FN) form stays defined whenever any
        # positive exists on either side
        d = cm.fp + 2 * cm.tp + cm.fn
        return 2 * cm.tp / d if d else None
    return 2 * r * p / (r + p)


def dice(cm: ConfusionCounts) -> float | None:
    d = cm.fp + 2 * cm.tp + cm.fn
    return 2 * cm.tp / d if d else None


def accuracy(cm: ConfusionCounts) -> float | None:
    return (cm.tp + cm.tn) / cm.total if cm.total else None


def reduce_disease_map(disease: np.ndarray, mode: FusionMode) -> np.ndarray:
    """Collapse a 6-class disease map to the 4 evaluated classes.

    The symptomatic class follows the fusion mode; symptom pixels not
    selected by the mode count as healthy vegetation.
    """
    d = np.asarray(disease)
    out = d.copy()
    out[d > int(DiseaseLabel.HEALTHY)] = 2  # vegetation unless the mode selects it
    out[symptom_mask(d, mode)] = 3
    return out.astype(np.uint8)


@dataclass
class MetricsReport:
    level: str  # "leaf" | "grapevine"
    mode: str  # "AND" | "OR"
    n_pairs: int
    per_class: dict[str, dict[str, float | None]]
    accuracy: float | None
    undefined: dict[str, int] = field(default_factory=dict)
    window: int | None = None
    stride: int | None = None

    def to_dict(self) -> dict:
        d = {
            "level": self.level,
            "mode": self.mode,
            "n_pairs": self.n_pairs,
            "per_class": self.per_class,
            "accuracy": self.accuracy,
            "undefined_counts": self.undefined,
        }
        if self.window is not None:
            d["window"] = self.window
            d["stride"] = self.stride
        return d

    def to_text(self) -> str:
        out = io.StringIO()
        title = f"{self.level}-level metrics (fusion {self.mode}, {self.n_pairs} image pair"
        title += "s)" if self.n_pairs != 1 else ")"
        out.write(title + "\n")
        header = f"{'class':<14}" + "".join(f"{m:>11}" for m in METRIC_NAMES)
        out.write(header + "\n")
        for cls in EVAL_CLASSES:
            row = f"{cls:<14}"
            for m in METRIC_NAMES:
                v = self.per_class[cls][m]
                row += f"{v:>11.4f}" if v is not None else f"{'—':>11}"
            out.write(row + "\n")
        acc = f"{self.accuracy:.4f}" if self.accuracy is not None else "—"
        out.write(f"{'accuracy':<14}{acc:>11}\n")
        if self.undefined:
            notes = ", ".join(f"{k}: {v}" for k, v in sorted(self.undefined.items()))
            out.write(f"undefined metrics excluded from averages ({notes})\n")
        return out.getvalue()

    def to_csv(self) -> str:
        lines = ["level,mode,class,metric,value"]
        for cls in EVAL_CLASSES:
            for m in METRIC_NAMES:
                v = self.per_class[cls][m]
                lines.append(
                    f"{self.level},{self.mode},{cls},{m},{'' if v is None else f'{v:.6f}'}"
                )
        acc = "" if self.accuracy is None else f"{self.accuracy:.6f}"
        lines.append(f"{self.level},{self.mode},total,accuracy,{acc}")
        return "\n".join(lines) + "\n"


def _per_pair_metrics(pred: np.ndarray, truth: np.ndarray) -> tuple[dict, float]:
    per_class = {}
    correct = int(np.sum(pred == truth))
    for code, name in enumerate(EVAL_CLASSES):
        cm = confusion(pred, truth, code)
        per_class[name] = {"recall": recall(cm), "precision": precision(cm), "f1": f1(cm)}
    return per_class, correct / pred.size


def _average_reports(rows: list[tuple[dict, float]], level, mode, n, window=None, stride=None):
    per_class: dict[str, dict[str, float | None]] = {}
    undefined: dict[str, int] = {}
    for cls in EVAL_CLASSES:
        per_class[cls] = {}
        for m in METRIC_NAMES:
            vals = [r[0][cls][m] for r in rows if r[0][cls][m] is not None]
            missing = n - len(vals)
            if missing:
                undefined[f"{cls}.{m}"] = missing
            per_class[cls][m] = float(np.mean(vals)) if vals else None
    acc = float(np.mean([r[1] for r in rows]))
    return MetricsReport(
        level=level,
        mode=mode,
        n_pairs=n,
        per_class=per_class,
        accuracy=acc,
        undefined=undefined,
        window=window,
        stride=stride,
    )


def _check_map_lists(pred_maps, truth_maps):
    if not pred_maps or len(pred_maps) != len(truth_maps):
        raise ContractError("need equally many non-empty prediction and truth maps")
    for p, t in zip(pred_maps, truth_maps):
        if np.asarray(p).shape != np.asarray(t).shape:
            raise ContractError("prediction/truth map dimensions differ")


def leaf_level_report(
    pred_maps: list[np.ndarray], truth_maps: list[np.ndarray], mode: FusionMode
) -> MetricsReport:
    """Pixel-wise per-class metrics averaged over image pairs."""
    _check_map_lists(pred_maps, truth_maps)
    rows = []
    for pred, truth in zip(pred_maps, truth_maps):
        rows.append(
            _per_pair_metrics(reduce_disease_map(pred, mode), reduce_disease_map(truth, mode))
        )
    name = "AND" if mode == FusionMode.INTERSECTION else "OR"
    return _average_reports(rows, "leaf", name, len(rows))


def dominant_class(window: np.ndarray, n_classes: int = len(EVAL_CLASSES)) -> int:
    """Most frequent class; ties break to the lowest class code."""
    return int(np.bincount(window.ravel(), minlength=n_classes).argmax())


def _window_labels(labels: np.ndarray, window: int, stride: int) -> np.ndarray:
    h, w = labels.shape
    dom = []
    for y0 in range(0, h, stride):
        for x0 in range(0, w, stride):
            dom.append(dominant_class(labels[y0 : y0 + window, x0 : x0 + window]))
    return np.array(dom, dtype=np.uint8)


def grapevine_level_report(
    pred_maps: list[np.ndarray],
    truth_maps: list[np.ndarray],
    window: int = 64,
    stride: int = 64,
    mode: FusionMode = FusionMode.UNION,
) -> MetricsReport:
    """Windowed dominant-class comparison (plant-scale detection).

    In each window the dominant ground-truth class is compared with the
    dominant predicted class; a match counts as that class's true
    positive, a mismatch as a false positive of the predicted class and
    a false negative of the true one.
    """
    _check_map_lists(pred_maps, truth_maps)
    if window < 1 or stride < 1:
        raise ContractError("window and stride must be >= 1")
    rows = []
    for pred, truth in zip(pred_maps, truth_maps):
        pred4 = reduce_disease_map(pred, mode)
        truth4 = reduce_disease_map(truth, mode)
        if window > min(pred4.shape):
            raise ContractError(
                f"window {window} larger than map dimensions {pred4.shape[::-1]}"
            )
        dom_p = _window_labels(pred4, window, stride)
        dom_t = _window_labels(truth4, window, stride)
        rows.append(_per_pair_metrics(dom_p, dom_t))
    name = "AND" if mode == FusionMode.INTERSECTION else "OR"
    return _average_reports(rows, "grapevine", name, len(rows), window=window, stride=stride)


@dataclass(frozen=True)
class StatLine:
    mean: float
    std: float
    min: float
    max: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "min": self.min, "max": self.max}


@dataclass(frozen=True)
class RegistrationStats:
    rmse: StatLine
    runtime: StatLine
    iterations: StatLine
    count: int

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "rmse": self.rmse.to_dict(),
            "runtime_seconds": self.runtime.to_dict(),
            "iterations": self.iterations.to_dict(),
        }

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"registration statistics over {self.count} image pairs\n")
        out.write(f"{'measure':<12}{'mean':>10}{'std':>10}{'min':>10}{'max':>10}\n")
        for name, line in (
            ("rmse px", self.rmse),
            ("runtime s", self.runtime),
            ("iterations", self.iterations),
        ):
            out.write(
                f"{name:<12}{line.mean:>10.3f}{line.std:>10.3f}{line.min:>10.3f}{line.max:>10.3f}\n"
            )
        return out.getvalue()


def _stat_line(values: list[float]) -> StatLine:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return StatLine(mean=float(arr.mean()), std=std, min=float(arr.min()), max=float(arr.max()))


def registration_stats(results) -> RegistrationStats:
    """Mean/std/min/max of RMSE, runtime and iteration count.

    Accepts RegistrationResult objects or report dictionaries.
    """
    results = list(results)
    if not results:
        raise ContractError("registration_stats needs at least one result")

    def get(r, attr, key):
        return float(getattr(r, attr)) if hasattr(r, attr) else float(r[key])

    return RegistrationStats(
        rmse=_stat_line([get(r, "rmse", "rmse") for r in results]),
        runtime=_stat_line([get(r, "runtime", "runtime_seconds") for r in results]),
        iterations=_stat_line([get(r, "iterations", "iterations") for r in results]),
        count=len(results),
    )

"""Classification, generation, and aggregate metrics.

Generation metrics follow the log-base-10 convention: LMAE is the mean
|log10 y - log10 yhat| and exponent accuracy compares floor(log10).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import UsageError


def accuracy(y_true, y_pred) -> float:
    if len(y_true) == 0:
        raise UsageError("empty evaluation set")
    return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))


def _per_class_counts(y_true, y_pred, labels):
    tp, fp, fn = {}, {}, {}
    yt = np.asarray(y_true)
    yp = np.asarray(y_pred)
    for c in labels:
        tp[c] = int(((yt == c) & (yp == c)).sum())
        fp[c] = int(((yt != c) & (yp == c)).sum())
        fn[c] = int(((yt == c) & (yp != c)).sum())
    return tp, fp, fn


def f1_micro(y_true, y_pred) -> float:
    """Global-count F1; equals accuracy for single-label multi-class data."""
    labels = sorted(set(y_true) | set(y_pred))
    tp, fp, fn = _per_class_counts(y_true, y_pred, labels)
    tps, fps, fns = sum(tp.values()), sum(fp.values()), sum(fn.values())
    denom = 2 * tps + fps + fns
    return 2 * tps / denom if denom else 0.0


def f1_macro(y_true, y_pred, n_classes: int | None = None) -> float:
    """Unweighted mean of per-class F1; absent classes score 0."""
    labels = range(n_classes) if n_classes else sorted(set(y_true) | set(y_pred))
    tp, fp, fn = _per_class_counts(y_true, y_pred, labels)
    scores = []
    for c in labels:
        denom = 2 * tp[c] + fp[c] + fn[c]
        scores.append(2 * tp[c] / denom if denom else 0.0)
    return float(np.mean(scores))


def generation_metrics(y_true: list[float], y_pred: list) -> dict:
    """NGR / LMAE / E_Acc for generation outputs.

    y_pred entries are floats (a generated numeral) or None (the model
    produced something non-numeric). Non-numeric and non-positive
    predictions are excluded from LMAE / E_Acc and reported separately.
    """
    n = len(y_true)
    if n == 0:
        raise UsageError("empty evaluation set")
    numeric = [p is not None for p in y_pred]
    usable = [(y, p) for y, p in zip(y_true, y_pred) if p is not None and p > 0]
    ngr = sum(numeric) / n
    out = {
        "NGR": ngr,
        "n_samples": n,
        "n_non_numeric": n - sum(numeric),
        "n_non_positive": sum(numeric) - len(usable),
    }
    if usable:
        lmae = float(np.mean([abs(math.log10(y) - math.log10(p)) for y, p in usable]))
        eacc = float(
            np.mean([math.floor(math.log10(y)) == math.floor(math.log10(p)) for y, p in usable])
        )
        out["LMAE"] = lmae
        out["E_Acc"] = eacc
    else:
        out["LMAE"] = None
        out["E_Acc"] = None
    return out


def welch_t(a, b) -> tuple[float, float, float]:
    """Welch two-sample t statistic, Welch-Satterthwaite dof, two-sided p.

    Zero-variance convention: equal means -> (0, inf, 1); unequal means
    with no variance -> (inf, inf, 0).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise UsageError("welch_t needs at least two runs per side")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = len(a), len(b)
    se2 = va / na + vb / nb
    if se2 == 0.0:
        if a.mean() == b.mean():
            return 0.0, math.inf, 1.0
        return math.copysign(math.inf, a.mean() - b.mean()), math.inf, 0.0
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    dof = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = 2.0 * float(special.stdtr(dof, -abs(t)))
    return float(t), float(dof), p


@dataclass
class MetricReport:
    metric: str
    values: list[float]
    mean: float
    std: float
    welch: dict | None = None
    runtime_s: float | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "values": self.values,
            "mean": self.mean,
            "std": self.std,
            "welch": self.welch,
            "runtime_s": self.runtime_s,
            "notes": self.notes,
        }


def aggregate(values, baseline_values=None, metric: str = "accuracy") -> MetricReport:
    """Per-seed values -> mean/sample-std, plus Welch t-test vs a baseline."""
    values = [float(v) for v in values]
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    report = MetricReport(metric=metric, values=values, mean=mean, std=std)
    if baseline_values is not None:
        if len(values) < 2 or len(baseline_values) < 2:
            report.notes.append("t-test omitted: fewer than 2 runs per side")
        else:
            t, dof, p = welch_t(values, baseline_values)
            report.welch = {
                "t": t,
                "dof": dof,
                "p_two_sided": p,
                "baseline_mean": float(np.mean(baseline_values)),
                "baseline_std": float(np.std(baseline_values, ddof=1)),
            }
    return report

"""Scores for probabilistic binary classifiers."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

LOG_CLIP = 1e-12


@dataclass
class EvalReport:
    n: int
    positive_rate: float
    brier: float
    nbs: float
    logloss: float
    nll: float
    auroc: float
    mean_prediction: float

    def to_text(self, **extra) -> str:
        """Flat ``key value`` block; ``extra`` keys (schema, k, ...) come first."""
        items = list(extra.items()) + list(asdict(self).items())
        return "\n".join(f"{k} {_fmt(v)}" for k, v in items) + "\n"

    @classmethod
    def from_text(cls, text: str) -> tuple["EvalReport", dict]:
        vals = dict(line.split(" ", 1) for line in text.splitlines() if line.strip())
        fields = {k: (int if k == "n" else float)(vals.pop(k)) for k in cls.__dataclass_fields__}
        return cls(**fields), vals


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".10f")
    return str(v)


def _check(preds, labels):
    p = np.asarray(preds, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("empty input")
    return p, y


def brier(preds, labels) -> float:
    p, y = _check(preds, labels)
    return float(np.mean((p - y) ** 2))


def _check_baseline(rate: float) -> None:
    if not 0.0 < rate < 1.0:
        raise ValueError(f"baseline rate must lie strictly between 0 and 1, got {rate}")


def normalized_brier(preds, labels, baseline_rate: float) -> float:
    """Brier score relative to always predicting ``baseline_rate``."""
    _check_baseline(baseline_rate)
    _, y = _check(preds, labels)
    return brier(preds, labels) / brier(np.full(y.shape, baseline_rate), y)


def logloss(preds, labels) -> float:
    p, y = _check(preds, labels)
    p = np.clip(p, LOG_CLIP, 1 - LOG_CLIP)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def normalized_logloss(preds, labels, baseline_rate: float) -> float:
    _check_baseline(baseline_rate)
    _, y = _check(preds, labels)
    return logloss(preds, labels) / logloss(np.full(y.shape, baseline_rate), y)


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    # tie groups share the mean of their 1-based ranks
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    avg = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def auroc(preds, labels) -> float:
    """Mann-Whitney estimate of the area under the ROC curve."""
    p, y = _check(preds, labels)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")
    r = _midranks(p)
    return float((r[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def calibration_summary(preds, labels) -> tuple[float, float, float]:
    """(mean prediction, positive rate, mean prediction - positive rate)."""
    p, y = _check(preds, labels)
    mp, rate = float(p.mean()), float(y.mean())
    return mp, rate, mp - rate


def evaluate(preds, labels, baseline_rate: float) -> EvalReport:
    p, y = _check(preds, labels)
    both = 0 < y.sum() < len(y)
    return EvalReport(
        n=len(y),
        positive_rate=float(y.mean()),
        brier=brier(p, y),
        nbs=normalized_brier(p, y, baseline_rate),
        logloss=logloss(p, y),
        nll=normalized_logloss(p, y, baseline_rate),
        auroc=auroc(p, y) if both else float("nan"),
        mean_prediction=float(p.mean()),
    )

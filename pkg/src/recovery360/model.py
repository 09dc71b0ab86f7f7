"""Histogram gradient-boosted trees for binary probabilities, plus the chronological split.

Training is bit-reproducible: rows are put in a canonical order before
fitting, so the model depends only on the multiset of (row, label)
pairs, the config and the seed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .ingest import MatchMeta

logger = logging.getLogger(__name__)

FORMAT_NAME = "recovery360-gbt"
FORMAT_VERSION = 1
_PROB_FLOOR = 1e-15


class SchemaMismatch(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    subsample_fraction: float = 1.0
    histogram_bins: int = 64
    seed: int = 0
    l2_reg: float = 1.0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0 < self.subsample_fraction <= 1:
            raise ValueError("subsample_fraction must be in (0, 1]")
        if not 2 <= self.histogram_bins <= 256:
            raise ValueError("histogram_bins must be in [2, 256]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass
class GbtModel:
    trees: list[Tree]
    base_score: float
    schema_hash: str = ""
    n_features: int = 0
    config: TrainConfig = TrainConfig()
    version: int = FORMAT_VERSION
    train_log: list[tuple[int, float]] = field(default_factory=list)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def logloss(p, y) -> float:
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


# ---------------------------------------------------------------- binning


def bin_edges(X: np.ndarray, max_bins: int) -> list[np.ndarray]:
    """Per-feature upper bin edges; a value ``x`` falls in the first bin whose edge is >= x."""
    edges = []
    for col in X.T:
        uniq = np.unique(col)
        if len(uniq) <= max_bins:
            e = (uniq[:-1] + uniq[1:]) / 2.0
        else:
            qs = np.quantile(col, np.linspace(0, 1, max_bins + 1)[1:-1], method="lower")
            e = np.unique(qs)
        edges.append(e.astype(np.float64))
    return edges


def apply_bins(X: np.ndarray, edges: Sequence[np.ndarray]) -> np.ndarray:
    out = np.empty(X.shape, dtype=np.uint8)
    for f, e in enumerate(edges):
        out[:, f] = np.searchsorted(e, X[:, f], side="left")
    return out


# ---------------------------------------------------------------- tree growth


@numba.njit(cache=True, nogil=True)
def _histogram(binned, rows, lo, hi, g, h, n_bins):
    n_feat = binned.shape[1]
    hist = np.zeros((n_feat, n_bins, 3))
    for r in range(lo, hi):
        i = rows[r]
        gi = g[i]
        hi_ = h[i]
        for f in range(n_feat):
            b = binned[i, f]
            hist[f, b, 0] += gi
            hist[f, b, 1] += hi_
            hist[f, b, 2] += 1.0
    return hist


@numba.njit(cache=True, nogil=True)
def _best_split(hist, n_bins_f, G, H, C, min_leaf, lam):
    best_gain = 1e-12
    best_f = -1
    best_b = -1
    parent = G * G / (H + lam)
    for f in range(hist.shape[0]):
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for b in range(n_bins_f[f] - 1):
            gl += hist[f, b, 0]
            hl += hist[f, b, 1]
            cl += hist[f, b, 2]
            cr = C - cl
            if cl < min_leaf:
                continue
            if cr < min_leaf:
                break
            gr = G - gl
            hr = H - hl
            gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_b = b
    return best_f, best_b, best_gain


@numba.njit(cache=True, nogil=True)
def _grow_tree(binned, rows, g, h, n_bins_f, n_bins, max_depth, min_leaf, lam):
    """Depth-first growth over ``rows`` (partitioned in place); returns node arrays.

    Only the smaller child of a split gets a fresh histogram; its sibling's
    is the parent's minus the smaller one.
    """
    max_nodes = 2 ** (max_depth + 1) - 1
    n_feat = binned.shape[1]
    feat = -np.ones(max_nodes, dtype=np.int64)
    split_bin = -np.ones(max_nodes, dtype=np.int64)
    left = -np.ones(max_nodes, dtype=np.int64)
    right = -np.ones(max_nodes, dtype=np.int64)
    value = np.zeros(max_nodes)
    n_rows = rows.shape[0]
    buf = np.empty(n_rows, dtype=rows.dtype)

    # pending nodes never exceed max_depth + 1 on a depth-first stack
    cap = max_depth + 2
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_hist = np.zeros((cap, n_feat, n_bins, 3))
    st_has = np.zeros(cap, dtype=np.bool_)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n_rows
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_depth[sp]
        G = 0.0
        H = 0.0
        for r in range(lo, hi):
            G += g[rows[r]]
            H += h[rows[r]]
        C = hi - lo
        value[node] = -G / (H + lam)
        if depth >= max_depth or C < 2 * min_leaf:
            continue
        if st_has[sp]:
            hist = st_hist[sp].copy()
        else:
            hist = _histogram(binned, rows, lo, hi, g, h, n_bins)
        f, b, gain = _best_split(hist, n_bins_f, G, H, C, min_leaf, lam)
        if f < 0:
            continue
        # stable partition of rows[lo:hi]
        nl = 0
        for r in range(lo, hi):
            if binned[rows[r], f] <= b:
                buf[lo + nl] = rows[r]
                nl += 1
        nr = 0
        for r in range(lo, hi):
            if binned[rows[r], f] > b:
                buf[lo + nl + nr] = rows[r]
                nr += 1
        for r in range(lo, hi):
            rows[r] = buf[r]
        feat[node] = f
        split_bin[node] = b
        left[node] = n_nodes
        right[node] = n_nodes + 1
        child_depth = depth + 1
        need_hist = child_depth < max_depth
        # right is pushed first so the left subtree is processed first
        st_node[sp] = n_nodes + 1
        st_lo[sp] = lo + nl
        st_hi[sp] = hi
        st_depth[sp] = child_depth
        st_has[sp] = False
        st_node[sp + 1] = n_nodes
        st_lo[sp + 1] = lo
        st_hi[sp + 1] = lo + nl
        st_depth[sp + 1] = child_depth
        st_has[sp + 1] = False
        if need_hist:
            if nl <= nr:
                small = _histogram(binned, rows, lo, lo + nl, g, h, n_bins)
                st_hist[sp + 1] = small
                st_hist[sp] = hist - small
            else:
                small = _histogram(binned, rows, lo + nl, hi, g, h, n_bins)
                st_hist[sp] = small
                st_hist[sp + 1] = hist - small
            st_has[sp] = True
            st_has[sp + 1] = True
        sp += 2
        n_nodes += 2
    return feat[:n_nodes], split_bin[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@numba.njit(cache=True, nogil=True)
def _predict_binned(binned, feat, split_bin, left, right, value):
    n = binned.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while left[node] >= 0:
            if binned[i, feat[node]] <= split_bin[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@numba.njit(cache=True, nogil=True)
def _predict_raw(X, feat, thr, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while left[node] >= 0:
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def _check_finite(X: np.ndarray) -> None:
    bad = ~np.isfinite(X)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValueError(f"non-finite feature value at row {r}, column {c}")


def fit(X, y, config: TrainConfig = TrainConfig(), schema_hash: str = "") -> GbtModel:
    """Stagewise boosting on logistic loss with histogram split search."""
    if hasattr(X, "schema_hash") and hasattr(X, "X"):
        schema_hash = X.schema_hash
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("fit needs a non-empty 2-D X with one label per row")
    _check_finite(X)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")

    # canonical row order: the model must not depend on input order
    order = np.lexsort(np.vstack([X.T[::-1], y[None, :]]))
    X = np.ascontiguousarray(X[order])
    y = y[order]

    rate = float(y.mean())
    if rate in (0.0, 1.0):
        logger.warning("single-class training labels; model reduces to its base score")
        r = min(max(rate, 1e-6), 1 - 1e-6)
        return GbtModel([], math.log(r / (1 - r)), schema_hash, X.shape[1], config, train_log=[(0, logloss(np.full(len(y), r), y))])

    edges = bin_edges(X, config.histogram_bins)
    binned = apply_bins(X, edges)
    n_bins_f = np.array([len(e) + 1 for e in edges], dtype=np.int64)
    n_bins = int(n_bins_f.max())
    base = math.log(rate / (1 - rate))
    F = np.full(len(y), base)
    rng = np.random.default_rng(config.seed)
    n = len(y)
    n_sub = max(1, int(round(config.subsample_fraction * n)))
    trees = []
    log = [(0, logloss(sigmoid(F), y))]
    for t in range(config.n_trees):
        p = sigmoid(F)
        g = p - y
        h = np.maximum(p * (1 - p), 1e-16)
        if n_sub < n:
            rows = np.sort(rng.choice(n, size=n_sub, replace=False)).astype(np.int64)
        else:
            rows = np.arange(n, dtype=np.int64)
        feat, sbin, left, right, value = _grow_tree(
            binned, rows, g, h, n_bins_f, n_bins, config.max_depth, config.min_samples_leaf, config.l2_reg
        )
        thr = np.array(
            [edges[f][b] if f >= 0 else 0.0 for f, b in zip(feat, sbin)], dtype=np.float64
        )
        trees.append(Tree(feat.copy(), thr, left.copy(), right.copy(), value.copy()))
        F = F + config.learning_rate * _predict_binned(binned, feat, sbin, left, right, value)
        log.append((t + 1, logloss(sigmoid(F), y)))
    return GbtModel(trees, base, schema_hash, X.shape[1], config, train_log=log)


def predict_raw(model: GbtModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    F = np.full(len(X), model.base_score)
    lr = model.config.learning_rate
    for t in model.trees:
        F = F + lr * _predict_raw(X, t.feature, t.threshold, t.left, t.right, t.value)
    return F


def predict_proba(model: GbtModel, X, schema_hash: Optional[str] = None) -> np.ndarray:
    """Probabilities strictly inside (0, 1).

    ``X`` may be a feature table (its schema hash is checked) or a plain
    array, optionally with ``schema_hash`` for the same check.
    """
    if hasattr(X, "schema_hash") and hasattr(X, "X"):
        schema_hash = X.schema_hash
        X = X.X
    if schema_hash is not None and model.schema_hash and schema_hash != model.schema_hash:
        raise SchemaMismatch(f"model schema {model.schema_hash} does not match table schema {schema_hash}")
    X = np.asarray(X, dtype=np.float64)
    if model.n_features and X.ndim == 2 and X.shape[1] != model.n_features:
        raise SchemaMismatch(f"model expects {model.n_features} features, got {X.shape[1]}")
    return np.clip(sigmoid(predict_raw(model, X)), _PROB_FLOOR, 1 - _PROB_FLOOR)


# ---------------------------------------------------------------- persistence


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dumps_model(model: GbtModel) -> str:
    lines = [
        f"{FORMAT_NAME} {model.version}",
        "config " + json.dumps(asdict(model.config), sort_keys=True),
        f"schema {model.schema_hash or '-'}",
        f"features {model.n_features}",
        f"base_score {_fmt(model.base_score)}",
        f"trees {len(model.trees)}",
    ]
    for i, t in enumerate(model.trees):
        lines.append(f"tree {i} {t.n_nodes}")
        for j in range(t.n_nodes):
            lines.append(
                f"{int(t.feature[j])} {_fmt(t.threshold[j])} {int(t.left[j])} {int(t.right[j])} {_fmt(t.value[j])}"
            )
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_model(model: GbtModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def loads_model(text: str) -> GbtModel:
    lines = text.split("\n")
    pos = 0

    def take(prefix: str) -> list[str]:
        nonlocal pos
        if pos >= len(lines) or not lines[pos]:
            raise ModelFormatError(f"line {pos + 1}: unexpected end of file (expected '{prefix}')")
        parts = lines[pos].split(" ", 1) if prefix == "config" else lines[pos].split()
        if parts[0] != prefix:
            raise ModelFormatError(f"line {pos + 1}: expected '{prefix}', got {lines[pos][:40]!r}")
        pos += 1
        return parts[1:]

    try:
        head = take(FORMAT_NAME)
        version = int(head[0])
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"line 1: unsupported model format version {version}")
        config = TrainConfig(**json.loads(take("config")[0]))
        schema = take("schema")[0]
        n_features = int(take("features")[0])
        base = float(take("base_score")[0])
        n_trees = int(take("trees")[0])
        trees = []
        for i in range(n_trees):
            idx, n_nodes = (int(v) for v in take("tree"))
            if idx != i:
                raise ModelFormatError(f"line {pos}: tree index {idx}, expected {i}")
            rows = []
            for _ in range(n_nodes):
                if pos >= len(lines) or not lines[pos]:
                    raise ModelFormatError(f"line {pos + 1}: unexpected end of file inside tree {i}")
                parts = lines[pos].split()
                if len(parts) != 5:
                    raise ModelFormatError(f"line {pos + 1}: malformed node record")
                rows.append(parts)
                pos += 1
            arr = list(zip(*rows)) if rows else [(), (), (), (), ()]
            trees.append(
                Tree(
                    np.array(arr[0], dtype=np.int64),
                    np.array(arr[1], dtype=np.float64),
                    np.array(arr[2], dtype=np.int64),
                    np.array(arr[3], dtype=np.int64),
                    np.array(arr[4], dtype=np.float64),
                )
            )
        take("end")
    except ModelFormatError:
        raise
    except (ValueError, IndexError, TypeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"line {pos + 1}: {e}") from e
    return GbtModel(trees, base, "" if schema == "-" else schema, n_features, config, version)


def load_model(path) -> GbtModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


def write_train_log(model: GbtModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rnd, loss in model.train_log:
            fh.write(f"{rnd} {loss:.12f}\n")


# ---------------------------------------------------------------- split


def split_by_games(metas: Sequence[MatchMeta], fraction: float = 0.8) -> tuple[list[int], list[int]]:
    """First ``ceil(fraction * N)`` matches by kickoff date train, the rest validate."""
    if len(metas) < 2:
        raise ValueError("need at least two matches to split")
    undated = [m.match_id for m in metas if m.kickoff_date is None]
    if undated:
        raise ValueError(f"matches without kickoff date: {undated}")
    ordered = sorted(metas, key=lambda m: (m.kickoff_date, m.match_id))
    n_train = min(len(ordered), math.ceil(round(fraction * len(ordered), 9)))
    train = [m.match_id for m in ordered[:n_train]]
    val = [m.match_id for m in ordered[n_train:]]
    if not val:
        logger.warning("validation split is empty (%d matches)", len(ordered))
    return train, val

"""Network feature scoring: [diversity, self-similarity] -> standardize -> PCA
-> linear SVM projection -> min-max normalization -> thresholded label."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .structure import StructureProfiles

log = logging.getLogger(__name__)

SUSPICIOUS = "Suspicious"
NORMAL = "Normal"
STD_FLOOR = 1e-12


class FitError(ValueError):
    pass


@dataclass
class SvmSettings:
    C: float = 1.0
    epochs: int = 500
    lr: float = 0.01
    use_bias: bool = True
    balanced: bool = True


@dataclass
class NfsModel:
    feature_means: np.ndarray
    feature_stds: np.ndarray
    pca_basis: np.ndarray
    pca_kept: int
    svm_weights: np.ndarray
    bias: float
    score_min: float
    score_max: float
    threshold: float
    validation_j: float = float("nan")
    config: dict = field(default_factory=dict)
    loss_history: list = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NfsModel":
        d = json.loads(text)
        for k in ("feature_means", "feature_stds", "pca_basis", "svm_weights"):
            d[k] = np.asarray(d[k], dtype=float)
        return cls(**d)


@dataclass
class NfsScores:
    raw: np.ndarray
    normalized: np.ndarray
    suspicious: np.ndarray

    @property
    def labels(self) -> list[str]:
        return [SUSPICIOUS if s else NORMAL for s in self.suspicious]

    def write_csv(self, fh, node_ids) -> None:
        fh.write("node_id,raw,norm,label\n")
        for nid, r, n, lab in zip(node_ids, self.raw, self.normalized, self.labels):
            fh.write(f"{nid},{r:.12g},{n:.12g},{lab}\n")


def assemble_features(profiles: StructureProfiles, dv: str = "diversity") -> np.ndarray:
    """|V| x 2 matrix of [D_v, S_v] rows in node order."""
    if dv not in ("diversity", "degree_centrality"):
        raise ValueError(f"unknown dv source {dv!r}")
    first = getattr(profiles, dv)
    second = profiles.self_similarity
    if first is None or second is None or len(first) != len(second):
        raise FitError("incomplete structure profiles")
    return np.column_stack([np.asarray(first, float), np.asarray(second, float)])


# ------------------------------------------------------------------ Youden
def youden_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """Candidate thresholds (ascending, with +-inf sentinels) and J at each.

    A node counts as positive when ``score >= threshold``.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    pos, neg = int(y.sum()), int((~y).sum())
    if pos == 0 or neg == 0:
        raise FitError("Youden threshold needs both classes")
    distinct = np.unique(s)
    cand = np.r_[-np.inf, (distinct[:-1] + distinct[1:]) / 2, np.inf]
    s_pos, s_neg = np.sort(s[y]), np.sort(s[~y])
    tp = pos - np.searchsorted(s_pos, cand, side="left")
    fp = neg - np.searchsorted(s_neg, cand, side="left")
    # integer-scaled J avoids float ties between equivalent thresholds
    j_scaled = tp * neg - fp * pos
    return cand, j_scaled / (pos * neg)


def youden_threshold(scores, labels) -> float:
    """Threshold maximizing TPR - FPR; ties go to the larger threshold."""
    cand, j = youden_curve(scores, labels)
    best = np.flatnonzero(j == j.max())[-1]
    return float(cand[best])


def youden_j(scores, labels, threshold: float) -> float:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    pred = s >= threshold
    return float(pred[y].mean() - pred[~y].mean())


# -------------------------------------------------------------- transforms
def standardize(model: NfsModel, features: np.ndarray) -> np.ndarray:
    return (np.asarray(features, float) - model.feature_means) / model.feature_stds


def pca_transform(model: NfsModel, standardized: np.ndarray) -> np.ndarray:
    return standardized @ model.pca_basis[:, : model.pca_kept]


def pca_inverse(model: NfsModel, projected: np.ndarray) -> np.ndarray:
    return projected @ model.pca_basis[:, : model.pca_kept].T


def project(model: NfsModel, z: np.ndarray) -> np.ndarray:
    return z @ model.svm_weights + model.bias


def minmax(model: NfsModel, raw: np.ndarray) -> np.ndarray:
    span = model.score_max - model.score_min
    return np.clip((raw - model.score_min) / span, 0.0, 1.0)


def _pca_basis(x: np.ndarray) -> np.ndarray:
    cov = x.T @ x / len(x)
    vals, vecs = np.linalg.eigh(cov)
    vecs = vecs[:, np.argsort(vals)[::-1]]
    # deterministic sign: largest-magnitude loading positive
    flip = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])] < 0
    vecs[:, flip] *= -1
    return vecs


def hinge_objective(w, b, z, y_pm, weights, C) -> float:
    margins = 1 - y_pm * (z @ w + b)
    return float(0.5 * w @ w + C * (weights * np.maximum(margins, 0)).sum() / weights.sum())


def train_linear_svm(
    z: np.ndarray, labels: np.ndarray, settings: SvmSettings | None = None
) -> tuple[np.ndarray, float, list[float]]:
    """Full-batch subgradient descent on L2-regularized (class-weighted) hinge loss."""
    st = settings or SvmSettings()
    y_pm = np.where(np.asarray(labels) == 1, 1.0, -1.0)
    if st.balanced:
        n_pos = (y_pm > 0).sum()
        n_neg = len(y_pm) - n_pos
        weights = np.where(y_pm > 0, len(y_pm) / (2 * n_pos), len(y_pm) / (2 * n_neg))
    else:
        weights = np.ones(len(y_pm))
    w = np.zeros(z.shape[1])
    b = 0.0
    history = [hinge_objective(w, b, z, y_pm, weights, st.C)]
    total = weights.sum()
    for _ in range(st.epochs):
        active = (y_pm * (z @ w + b)) < 1
        coef = weights * y_pm * active
        grad_w = w - st.C * (coef @ z) / total
        grad_b = -st.C * coef.sum() / total
        w = w - st.lr * grad_w
        if st.use_bias:
            b = b - st.lr * grad_b
        history.append(hinge_objective(w, b, z, y_pm, weights, st.C))
    return w, float(b), history


def stratified_split(labels: np.ndarray, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices (keep, held_out) with ``fraction`` of each class held out."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    keep, held = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        k = int(round(fraction * len(idx)))
        k = min(max(k, 1), len(idx) - 1) if len(idx) > 1 else 0
        held.append(idx[:k])
        keep.append(idx[k:])
    return np.sort(np.concatenate(keep)), np.sort(np.concatenate(held))


def fit(
    features: np.ndarray,
    labels,
    settings: SvmSettings | None = None,
    pca_kept: int = 2,
    val_fraction: float = 0.2,
    seed: int = 72,
) -> NfsModel:
    """Fit standardizer, PCA, SVM and calibration; choose t* on a held-out split."""
    settings = settings or SvmSettings()
    f = np.asarray(features, dtype=float)
    y = np.asarray(labels).astype(np.int64)
    if len(np.unique(y)) < 2:
        raise FitError("NFS fit needs both classes in the labels")
    if len(y) < 10:
        raise FitError("NFS fit needs at least 10 labelled nodes")
    if not 1 <= pca_kept <= f.shape[1]:
        raise ValueError("pca_kept out of range")

    tr, va = stratified_split(y, val_fraction, seed)
    means = f[tr].mean(axis=0)
    stds = f[tr].std(axis=0)
    if np.any(stds < STD_FLOOR):
        warnings.warn("zero-variance NFS feature; std clamped", RuntimeWarning, stacklevel=2)
        stds = np.maximum(stds, STD_FLOOR)
    x = (f[tr] - means) / stds
    basis = _pca_basis(x)
    z = x @ basis[:, :pca_kept]
    w, b, history = train_linear_svm(z, y[tr], settings)
    raw = z @ w + b
    lo, hi = float(raw.min()), float(raw.max())
    if hi <= lo:
        raise FitError("degenerate SVM scores; cannot calibrate min-max range")

    model = NfsModel(
        feature_means=means,
        feature_stds=stds,
        pca_basis=basis,
        pca_kept=pca_kept,
        svm_weights=w,
        bias=b,
        score_min=lo,
        score_max=hi,
        threshold=0.5,
        config={**asdict(settings), "val_fraction": val_fraction, "seed": seed},
        loss_history=history,
    )
    val_norm = score(model, f[va]).normalized
    t = youden_threshold(val_norm, y[va])
    model.threshold = float(np.clip(t, 0.0, 1.0))
    model.validation_j = youden_j(val_norm, y[va], model.threshold)
    log.info("NFS fit: w=%s b=%.4f t*=%.4f J=%.3f", np.round(w, 4), b, model.threshold, model.validation_j)
    return model


def score(model: NfsModel, features: np.ndarray) -> NfsScores:
    raw = project(model, pca_transform(model, standardize(model, features)))
    norm = minmax(model, raw)
    return NfsScores(raw=raw, normalized=norm, suspicious=norm >= model.threshold)

"""Hybrid assembly, one-vs-rest linear SVM (dual coordinate descent), and the
scene-recognition / domain-adaptation evaluation harness."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .datamodel import BLOCK_ORDER, HybridRepresentation

DEFAULT_C = 1.0
DEFAULT_EPOCHS = 1000
DEFAULT_GAP_TOL = 1e-3
SEMI_SUPERVISED_TARGET_LABELED = 3
SOURCE_CAP_AMAZON = 20
SOURCE_CAP_OTHER = 8


@dataclass
class SvmModel:
    weights: np.ndarray  # (n_classes, dim)
    biases: np.ndarray  # (n_classes,)
    C: float
    classes: list[int]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class DaSetting:
    mode: str = "unsupervised"  # "unsupervised" | "semi_supervised"
    source_cap: str = "std"  # "std" (20/8 per class) | "all"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        if self.mode not in ("unsupervised", "semi_supervised"):
            raise ValueError(f"unknown DA mode {self.mode!r}")
        if self.source_cap not in ("std", "all"):
            raise ValueError(f"unknown source cap {self.source_cap!r}")


def l2_normalize_fcr(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float32)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite FCR vector")
    norm = np.linalg.norm(v)
    return v if norm == 0 else (v / norm).astype(np.float32)


def assemble(blocks, selection=None) -> HybridRepresentation:
    """Concatenate named blocks in the canonical order MLR, CFV, FCR1, FCR2,
    then any external blocks in name order."""
    available = dict(blocks)
    names = list(available) if selection is None else list(selection)
    missing = [n for n in names if n not in available]
    if missing:
        raise KeyError(f"missing blocks {missing}; have {sorted(available)}")
    canonical = [n for n in BLOCK_ORDER if n in names]
    extra = sorted(n for n in names if n not in BLOCK_ORDER)
    return HybridRepresentation(
        [(n, np.asarray(available[n], dtype=np.float32)) for n in canonical + extra]
    )


def _dual_cd_binary(x: np.ndarray, y: np.ndarray, C: float, epochs: int,
                    tol: float, rng: np.random.Generator) -> np.ndarray:
    """L2-regularized L1-loss SVM dual coordinate descent; x has a bias column."""
    n, dim = x.shape
    alpha = np.zeros(n)
    w = np.zeros(dim)
    qii = np.einsum("ij,ij->i", x, x)
    for _ in range(epochs):
        for i in rng.permutation(n):
            if qii[i] <= 0:
                continue
            g = y[i] * (w @ x[i]) - 1.0
            pg = min(g, 0.0) if alpha[i] <= 0 else (max(g, 0.0) if alpha[i] >= C else g)
            if abs(pg) < 1e-12:
                continue
            new = min(max(alpha[i] - g / qii[i], 0.0), C)
            w += (new - alpha[i]) * y[i] * x[i]
            alpha[i] = new
        margins = 1.0 - y * (x @ w)
        primal = 0.5 * w @ w + C * np.sum(np.maximum(margins, 0.0))
        dual = alpha.sum() - 0.5 * w @ w
        if primal - dual <= tol * max(1.0, abs(primal)):
            break
    return w


def svm_train(
    features,
    labels,
    C: float = DEFAULT_C,
    epochs: int = DEFAULT_EPOCHS,
    seed: int = 0,
    tol: float = DEFAULT_GAP_TOL,
) -> SvmModel:
    """One-vs-rest linear SVM; features may be HybridRepresentations or vectors."""
    rows = [
        f.concat() if isinstance(f, HybridRepresentation) else np.asarray(f)
        for f in features
    ]
    x = np.asarray(np.stack(rows), dtype=np.float64)
    y = np.asarray(labels, dtype=int)
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    weights = np.empty((len(classes), x.shape[1]), dtype=np.float64)
    biases = np.empty(len(classes))
    for idx, c in enumerate(classes):
        rng = np.random.default_rng([seed, c])
        yc = np.where(y == c, 1.0, -1.0)
        w = _dual_cd_binary(xb, yc, C, epochs, tol, rng)
        weights[idx] = w[:-1]
        biases[idx] = w[-1]
    return SvmModel(weights, biases, C, classes)


def svm_decision(model: SvmModel, x) -> np.ndarray:
    x = np.asarray(
        x.concat() if isinstance(x, HybridRepresentation) else x, dtype=np.float64
    )
    if x.shape[-1] != model.dim:
        raise ValueError(f"dim {x.shape[-1]} vs model dim {model.dim}")
    return x @ model.weights.T + model.biases


def svm_predict(model: SvmModel, x) -> int:
    scores = svm_decision(model, x)
    return model.classes[int(np.argmax(scores))]  # argmax ties -> lowest class


def evaluate_scene(y_true, y_pred, n_classes: int):
    """Macro (average per-class) accuracy plus the per-class breakdown."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    per_class = {}
    for c in range(n_classes):
        mask = y_true == c
        if not np.any(mask):
            warnings.warn(f"class {c} absent from test set; excluded from macro average")
            continue
        per_class[c] = float(np.mean(y_pred[mask] == c))
    if not per_class:
        raise ValueError("no classes represented in test set")
    return float(np.mean(list(per_class.values()))), per_class


def _stratified_draw(ids, labels, per_class: int, rng: np.random.Generator):
    chosen = []
    by_class: dict[int, list] = {}
    for rid, lab in zip(ids, labels):
        by_class.setdefault(lab, []).append(rid)
    for lab in sorted(by_class):
        pool = by_class[lab]
        if len(pool) < per_class:
            warnings.warn(f"class {lab}: only {len(pool)} samples for cap {per_class}")
            chosen.extend(pool)
        else:
            idx = rng.choice(len(pool), size=per_class, replace=False)
            chosen.extend(pool[i] for i in sorted(idx))
    return chosen


@dataclass
class DaResult:
    mean: float
    std: float
    per_seed: list[float] = field(default_factory=list)


def run_da(
    manifest,
    features: dict[str, np.ndarray],
    source: str,
    target: str,
    setting: DaSetting,
    C: float = DEFAULT_C,
    svm_seed: int = 0,
) -> DaResult:
    """Five-partition DA protocol: stratified source draw (capped per class),
    optional 3 labeled target samples per class moved into training, overall
    target accuracy reported as mean +/- sample std over the partitions."""
    if source == target:
        raise ValueError("source and target domains must differ")
    groups = manifest.by_domain()
    for dom in (source, target):
        if dom not in groups:
            raise ValueError(f"domain {dom!r} not present in manifest")
    src_ids = [r.id for r in groups[source]]
    src_labels = [r.label for r in groups[source]]
    tgt_ids = [r.id for r in groups[target]]
    tgt_labels = {r.id: r.label for r in groups[target]}
    cap = SOURCE_CAP_AMAZON if source.lower() == "amazon" else SOURCE_CAP_OTHER

    accs = []
    for seed in setting.seeds:
        rng = np.random.default_rng(seed)
        if setting.source_cap == "all":
            train_ids = list(src_ids)
        else:
            train_ids = _stratified_draw(src_ids, src_labels, cap, rng)
        test_ids = list(tgt_ids)
        if setting.mode == "semi_supervised":
            labeled = _stratified_draw(
                tgt_ids, [tgt_labels[i] for i in tgt_ids],
                SEMI_SUPERVISED_TARGET_LABELED, rng,
            )
            train_ids.extend(labeled)
            test_ids = [i for i in test_ids if i not in set(labeled)]
        label_of = {r.id: r.label for r in manifest.records}
        model = svm_train(
            [features[i] for i in train_ids],
            [label_of[i] for i in train_ids],
            C=C,
            seed=svm_seed,
        )
        correct = sum(
            svm_predict(model, features[i]) == label_of[i] for i in test_ids
        )
        accs.append(correct / len(test_ids))
    accs_arr = np.asarray(accs)
    std = float(accs_arr.std(ddof=1)) if len(accs_arr) > 1 else 0.0
    return DaResult(float(accs_arr.mean()), std, accs)

"""Downstream attribute prediction from user feature vectors.

Occupational class is a 9-way task handled one-vs-all with L2 logistic
regression (Newton iterations with backtracking, so the training loss is
non-increasing). Income is ridge regression, optionally RBF-kernel ridge
as the non-linear stand-in. Hyperparameters are chosen by nested k-fold
cross-validation; features are z-scored with statistics of whatever
training split a model is fit on, never with test rows.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._io import atomic_text_writer


class AlignmentError(ValueError):
    """Feature tables or label files whose external ids do not line up."""

    def __init__(self, message: str, offending_ids: Sequence[str]):
        ids = sorted(offending_ids)
        shown = ", ".join(ids[:10]) + (", ..." if len(ids) > 10 else "")
        super().__init__(f"{message}: {shown}")
        self.offending_ids = ids


class DegenerateDataError(ValueError):
    """Training data that cannot support the requested model."""


# ---------------------------------------------------------------------------
# labels and datasets
# ---------------------------------------------------------------------------

LABEL_HEADER = ("id", "occ_class", "income")


def load_labels(path: str | Path) -> dict[str, tuple[int | None, float | None]]:
    """Read the label CSV (header id,occ_class,income; empty cells = missing)."""
    out: dict[str, tuple[int | None, float | None]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(LABEL_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: label CSV missing columns {sorted(missing)}")
        for row in reader:
            uid = row["id"].strip()
            if not uid:
                raise ValueError(f"{path}: empty id in label row")
            occ_raw = (row["occ_class"] or "").strip()
            inc_raw = (row["income"] or "").strip()
            occ = int(occ_raw) if occ_raw else None
            income = float(inc_raw) if inc_raw else None
            if occ is not None and not 1 <= occ <= 9:
                raise ValueError(f"{path}: occ_class {occ} for {uid} outside 1..9")
            if income is not None and income <= 0:
                raise ValueError(f"{path}: income {income} for {uid} not positive")
            out[uid] = (occ, income)
    return out


def save_labels(
    rows: Sequence[tuple[str, int | None, float | None]], path: str | Path
) -> None:
    with atomic_text_writer(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABEL_HEADER)
        for uid, occ, income in rows:
            writer.writerow([uid, "" if occ is None else occ, "" if income is None else income])


@dataclass
class LabeledDataset:
    """Feature rows aligned with (possibly missing) class and income labels.

    occ_class uses 0 for missing, income uses NaN.
    """

    ids: list[str]
    X: np.ndarray
    occ_class: np.ndarray
    income: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def task_labels(self, task: str) -> np.ndarray:
        if task == "classification":
            return self.occ_class
        if task == "regression":
            return self.income
        raise ValueError(f"unknown task {task!r}")

    def filter_task(self, task: str) -> "LabeledDataset":
        """Keep only rows that carry the task's label."""
        if task == "classification":
            mask = self.occ_class > 0
        else:
            mask = ~np.isnan(self.task_labels(task))
        idx = np.flatnonzero(mask)
        return LabeledDataset(
            ids=[self.ids[i] for i in idx],
            X=self.X[idx],
            occ_class=self.occ_class[idx],
            income=self.income[idx],
        )


def make_dataset(
    feature_ids: Sequence[str],
    features: np.ndarray,
    labels: dict[str, tuple[int | None, float | None]],
    allow_missing: bool = False,
) -> LabeledDataset:
    """Join features onto the label table (label-file row order).

    Labeled ids without a feature row are an alignment error, unless
    allow_missing drops them (users whose graph vertex vanished, e.g.
    isolated after pruning). Feature rows without labels are silently
    unused.
    """
    pos = {uid: i for i, uid in enumerate(feature_ids)}
    missing = [uid for uid in labels if uid not in pos]
    if missing and not allow_missing:
        raise AlignmentError("labeled ids missing from the feature table", missing)
    ids = [uid for uid in labels if uid in pos]
    X = np.asarray(features, dtype=np.float64)[[pos[uid] for uid in ids]]
    occ = np.array([labels[uid][0] or 0 for uid in ids], dtype=np.int64)
    income = np.array(
        [np.nan if labels[uid][1] is None else labels[uid][1] for uid in ids],
        dtype=np.float64,
    )
    return LabeledDataset(ids=ids, X=X, occ_class=occ, income=income)


def concat_features(
    ids_a: Sequence[str], X_a: np.ndarray, ids_b: Sequence[str], X_b: np.ndarray
) -> np.ndarray:
    """Row-wise [X_a | X_b] with X_b's rows re-aligned to ids_a's order."""
    X_a = np.asarray(X_a, dtype=np.float64)
    X_b = np.asarray(X_b, dtype=np.float64)
    if len(ids_a) != X_a.shape[0] or len(ids_b) != X_b.shape[0]:
        raise ValueError("id lists must match matrix row counts")
    if len(set(ids_a)) != len(ids_a) or len(set(ids_b)) != len(ids_b):
        raise ValueError("duplicate ids in feature table")
    mismatched = set(ids_a) ^ set(ids_b)
    if mismatched:
        raise AlignmentError("feature tables cover different ids", list(mismatched))
    pos_b = {uid: i for i, uid in enumerate(ids_b)}
    aligned_b = X_b[[pos_b[uid] for uid in ids_a]]
    return np.hstack([X_a, aligned_b])


# ---------------------------------------------------------------------------
# learners
# ---------------------------------------------------------------------------


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        std = X.std(axis=0)
        std = np.where(std == 0, 1.0, std)
        return cls(mean=X.mean(axis=0), std=std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def binary_logistic_loss(
    X: np.ndarray, t: np.ndarray, w: np.ndarray, b: float, l2: float
) -> float:
    """Regularized negative log-likelihood; intercept unpenalized."""
    z = X @ w + b
    return float(np.sum(np.logaddexp(0.0, z) - t * z) + 0.5 * l2 * w @ w)


def binary_logistic_grad(
    X: np.ndarray, t: np.ndarray, w: np.ndarray, b: float, l2: float
) -> tuple[np.ndarray, float]:
    p = _sigmoid(X @ w + b)
    return X.T @ (p - t) + l2 * w, float(np.sum(p - t))


def _fit_binary_logistic(
    X: np.ndarray, t: np.ndarray, l2: float, max_iter: int, tol: float
) -> tuple[np.ndarray, float, list[float]]:
    """Newton iterations with step halving; loss never increases."""
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    loss = binary_logistic_loss(X, t, w, b, l2)
    history = [loss]
    for _ in range(max_iter):
        g_w, g_b = binary_logistic_grad(X, t, w, b, l2)
        if max(np.abs(g_w).max(initial=0.0), abs(g_b)) < tol * max(n, 1):
            break
        p = _sigmoid(X @ w + b)
        weight = p * (1.0 - p) + 1e-12
        H = np.empty((d + 1, d + 1))
        H[:d, :d] = X.T @ (weight[:, None] * X) + l2 * np.eye(d)
        H[:d, d] = H[d, :d] = X.T @ weight
        H[d, d] = weight.sum()
        step = np.linalg.solve(H, np.concatenate([g_w, [g_b]]))
        scale = 1.0
        for _half in range(30):
            w_new = w - scale * step[:d]
            b_new = b - scale * step[d]
            loss_new = binary_logistic_loss(X, t, w_new, b_new, l2)
            if loss_new <= loss:
                break
            scale *= 0.5
        if loss_new > loss:
            break  # no descent direction left; numerically converged
        w, b, loss = w_new, b_new, loss_new
        history.append(loss)
    return w, b, history


@dataclass
class LogisticOva:
    """One binary L2 logistic model per class; predict by argmax of scores.

    Ties break toward the lowest class index.
    """

    classes: np.ndarray
    coef: np.ndarray  # (n_classes, d)
    intercept: np.ndarray
    loss_history: list[list[float]] = field(repr=False, default_factory=list)

    def scores(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coef.T + self.intercept

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.scores(X), axis=1)]


def fit_logreg_ova(
    X: np.ndarray,
    y: np.ndarray,
    l2: float,
    classes: np.ndarray | None = None,
    max_iter: int = 50,
    tol: float = 1e-9,
) -> LogisticOva:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise DegenerateDataError("one-vs-all training needs >= 2 classes present")
    if classes is None:
        classes = np.unique(y)
    classes = np.sort(np.asarray(classes))
    coef = np.zeros((len(classes), X.shape[1]))
    intercept = np.zeros(len(classes))
    history: list[list[float]] = []
    for i, c in enumerate(classes):
        t = (y == c).astype(np.float64)
        coef[i], intercept[i], h = _fit_binary_logistic(X, t, l2, max_iter, tol)
        history.append(h)
    return LogisticOva(classes=classes, coef=coef, intercept=intercept, loss_history=history)


@dataclass
class RidgeModel:
    coef: np.ndarray
    intercept: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coef + self.intercept


def fit_ridge(X: np.ndarray, y: np.ndarray, l2: float) -> RidgeModel:
    """Closed-form (X'X + l2 I) w = X'y on centered data; intercept unpenalized."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    A = Xc.T @ Xc + l2 * np.eye(X.shape[1])
    coef = np.linalg.solve(A, Xc.T @ (y - y_mean))
    return RidgeModel(coef=coef, intercept=float(y_mean - x_mean @ coef))


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """K_ij = exp(-gamma * ||a_i - b_j||^2)."""
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class KernelRidgeModel:
    X_train: np.ndarray
    dual_coef: np.ndarray
    gamma: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return rbf_kernel(np.asarray(X, dtype=np.float64), self.X_train, self.gamma) @ self.dual_coef


def fit_kernel_ridge(
    X: np.ndarray, y: np.ndarray, l2: float, gamma: float
) -> KernelRidgeModel:
    """Solve (K + l2 I) alpha = y with the RBF kernel."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    X = np.asarray(X, dtype=np.float64)
    K = rbf_kernel(X, X, gamma)
    alpha = np.linalg.solve(K + l2 * np.eye(len(X)), np.asarray(y, dtype=np.float64))
    return KernelRidgeModel(X_train=X, dual_coef=alpha, gamma=gamma)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def evaluate_classification(pred: Sequence[int], truth: Sequence[int]) -> float:
    """Accuracy as a percentage."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("prediction/truth length mismatch")
    if len(truth) == 0:
        raise ValueError("need at least one sample")
    return float(100.0 * np.mean(pred == truth))


def mean_absolute_error(pred: Sequence[float], truth: Sequence[float]) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError("prediction/truth length mismatch")
    return float(np.mean(np.abs(pred - truth)))


def evaluate_regression(
    pred: Sequence[float], truth: Sequence[float]
) -> tuple[float, float]:
    """(MAE in GBP, Pearson correlation).

    Constant truth makes the correlation undefined: a ValueError is raised
    with the still-valid MAE attached as `.mae`. Constant predictions give
    rho = 0 (no measurable linear association).
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    mae = mean_absolute_error(pred, truth)
    if len(truth) < 2:
        raise ValueError("need >= 2 samples for correlation")
    dt = truth - truth.mean()
    dp = pred - pred.mean()
    t_norm = np.sqrt(dt @ dt)
    p_norm = np.sqrt(dp @ dp)
    if t_norm == 0:
        err = ValueError("Pearson correlation undefined for constant truth")
        err.mae = mae
        raise err
    if p_norm == 0:
        return mae, 0.0
    return mae, float((dp @ dt) / (p_norm * t_norm))


def misclassification_matrix(
    pred: Sequence[int], truth: Sequence[int], n_classes: int = 9
) -> np.ndarray:
    """Counts[i-1, j-1] = samples of true class i predicted as class j."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError("prediction/truth length mismatch")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(truth, pred):
        m[t - 1, p - 1] += 1
    return m


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------


@dataclass
class FoldPlan:
    """Outer test partitions and, per outer fold, inner partitions of its train set."""

    outer: list[np.ndarray]
    inner: list[list[np.ndarray]]
    seed: int


def _partition(
    idx: np.ndarray, k: int, rng: np.random.Generator, labels: np.ndarray | None
) -> list[np.ndarray]:
    folds: list[list[int]] = [[] for _ in range(k)]
    if labels is None:
        for f, chunk in enumerate(np.array_split(rng.permutation(idx), k)):
            folds[f].extend(chunk.tolist())
    else:
        for c in np.unique(labels):
            members = rng.permutation(idx[labels == c])
            for f, chunk in enumerate(np.array_split(members, k)):
                folds[f].extend(chunk.tolist())
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


def make_fold_plan(
    n: int,
    k_outer: int = 10,
    k_inner: int = 10,
    seed: int = 0,
    stratify_labels: Sequence[int] | None = None,
) -> FoldPlan:
    """Disjoint, exhaustive outer folds; each outer train set split again.

    Classification passes its labels to stratify (per-class counts balanced
    within +-1 across folds); regression leaves them None.
    """
    if n < k_outer:
        raise ValueError(f"need at least {k_outer} samples, got {n}")
    y = None if stratify_labels is None else np.asarray(stratify_labels)
    rng = np.random.default_rng(seed)
    all_idx = np.arange(n, dtype=np.int64)
    outer = _partition(all_idx, k_outer, rng, y)
    inner: list[list[np.ndarray]] = []
    for test_idx in outer:
        train_idx = np.setdiff1d(all_idx, test_idx, assume_unique=True)
        sub_labels = None if y is None else y[train_idx]
        inner.append(_partition(train_idx, k_inner, rng, sub_labels))
    for f, fold in enumerate(outer):
        if len(fold) == 0:
            raise ValueError(f"outer fold {f} is empty")
    return FoldPlan(outer=outer, inner=inner, seed=seed)


@dataclass
class EvalReport:
    task: str
    per_fold: list[dict]
    aggregate: dict
    ids: list[str]
    predictions: np.ndarray
    truth: np.ndarray


Learner = Callable[..., object]


def _learner_for(task: str, name: str | Learner | None, classes: np.ndarray | None) -> Learner:
    if callable(name):
        return name
    if task == "classification":
        return lambda X, y, **params: fit_logreg_ova(X, y, classes=classes, **params)
    if name in (None, "ridge"):
        return lambda X, y, **params: fit_ridge(X, y, **params)
    if name == "krr":
        return lambda X, y, **params: fit_kernel_ridge(X, y, **params)
    raise ValueError(f"unknown learner {name!r}")


@dataclass
class _FittedPipeline:
    scaler: Standardizer
    model: object

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.model.predict(self.scaler.transform(X))


def _fit(learner: Learner, X: np.ndarray, y: np.ndarray, params: dict) -> _FittedPipeline:
    scaler = Standardizer.fit(X)
    return _FittedPipeline(scaler, learner(scaler.transform(X), y, **params))


def nested_cv(
    data: LabeledDataset,
    task: str,
    grid: Sequence[dict],
    plan: FoldPlan,
    learner: str | Learner | None = None,
) -> EvalReport:
    """Outer folds score, inner folds choose hyperparameters.

    Per outer fold the grid point with the best inner-fold mean metric
    (highest accuracy / lowest MAE; ties keep the earliest grid entry) is
    refit on the full outer train set and scored on the outer test set.
    Aggregate accuracy is the mean over outer folds; regression MAE and
    Pearson rho are computed on the pooled outer-test predictions.
    """
    if task not in ("classification", "regression"):
        raise ValueError(f"unknown task {task!r}")
    if len(grid) == 0:
        raise ValueError("hyperparameter grid is empty")
    y = data.task_labels(task)
    if task == "classification" and np.any(y <= 0):
        raise ValueError("rows without class labels; call filter_task first")
    if task == "regression" and np.any(np.isnan(y)):
        raise ValueError("rows without income labels; call filter_task first")
    if len(data) < 20:
        raise ValueError("need at least 20 labeled samples")
    n = len(data)
    covered = np.sort(np.concatenate(plan.outer))
    if not np.array_equal(covered, np.arange(n)):
        raise ValueError("fold plan does not partition the dataset")

    classes = np.arange(1, 10) if task == "classification" else None
    fit_model = _learner_for(task, learner, classes)
    X = data.X
    predictions = np.empty(n, dtype=y.dtype)
    per_fold: list[dict] = []

    for f, test_idx in enumerate(plan.outer):
        train_idx = np.setdiff1d(np.arange(n), test_idx, assume_unique=True)
        best_params: dict | None = None
        best_score = None
        for params in grid:
            fold_scores = []
            for val_idx in plan.inner[f]:
                if len(val_idx) == 0:
                    continue
                sub_train = np.setdiff1d(train_idx, val_idx, assume_unique=True)
                fitted = _fit(fit_model, X[sub_train], y[sub_train], params)
                pred = fitted.predict(X[val_idx])
                if task == "classification":
                    fold_scores.append(evaluate_classification(pred, y[val_idx]))
                else:
                    fold_scores.append(mean_absolute_error(pred, y[val_idx]))
            score = float(np.mean(fold_scores))
            better = (
                best_score is None
                or (task == "classification" and score > best_score)
                or (task == "regression" and score < best_score)
            )
            if better:
                best_score, best_params = score, params

        fitted = _fit(fit_model, X[train_idx], y[train_idx], best_params)
        pred = fitted.predict(X[test_idx])
        predictions[test_idx] = pred
        record: dict = {"fold": f, "n_test": int(len(test_idx)), "chosen": dict(best_params)}
        if task == "classification":
            record["accuracy"] = evaluate_classification(pred, y[test_idx])
        else:
            mae, rho = evaluate_regression(pred, y[test_idx])
            record["mae"] = mae
            record["rho"] = rho
        per_fold.append(record)

    if task == "classification":
        aggregate = {
            "accuracy": float(np.mean([r["accuracy"] for r in per_fold])),
            "accuracy_pooled": evaluate_classification(predictions, y),
            "misclassification_matrix": misclassification_matrix(
                predictions, y, n_classes=max(9, int(y.max()), int(predictions.max()))
            ).tolist(),
        }
    else:
        mae, rho = evaluate_regression(predictions, y)
        aggregate = {
            "mae": mae,
            "rho": rho,
            "mae_fold_mean": float(np.mean([r["mae"] for r in per_fold])),
        }
    return EvalReport(
        task=task,
        per_fold=per_fold,
        aggregate=aggregate,
        ids=list(data.ids),
        predictions=predictions,
        truth=y.copy(),
    )


# ---------------------------------------------------------------------------
# report output
# ---------------------------------------------------------------------------


def write_report_jsonl(report: EvalReport, path: str | Path) -> None:
    """One JSON record per fold plus one aggregate record."""
    with atomic_text_writer(path) as fh:
        for record in report.per_fold:
            fh.write(json.dumps({"record": "fold", "task": report.task, **record}))
            fh.write("\n")
        fh.write(json.dumps({"record": "aggregate", "task": report.task, **report.aggregate}))
        fh.write("\n")


def format_report_table(report: EvalReport) -> str:
    lines = [f"task: {report.task}", ""]
    if report.task == "classification":
        lines.append(f"{'fold':>4}  {'n':>4}  {'accuracy %':>10}  chosen")
        for r in report.per_fold:
            lines.append(f"{r['fold']:>4}  {r['n_test']:>4}  {r['accuracy']:>10.2f}  {r['chosen']}")
        lines.append("")
        lines.append(f"mean accuracy over folds: {report.aggregate['accuracy']:.2f}%")
        lines.append(f"pooled accuracy:          {report.aggregate['accuracy_pooled']:.2f}%")
        lines.append("")
        lines.append("misclassification matrix (rows = true class, cols = predicted):")
        matrix = report.aggregate["misclassification_matrix"]
        width = max(len(str(v)) for row in matrix for v in row)
        header = "     " + " ".join(f"{c + 1:>{width}}" for c in range(len(matrix)))
        lines.append(header)
        for i, row in enumerate(matrix):
            lines.append(f"  {i + 1:>2} " + " ".join(f"{v:>{width}}" for v in row))
    else:
        lines.append(f"{'fold':>4}  {'n':>4}  {'MAE (GBP)':>12}  {'rho':>6}  chosen")
        for r in report.per_fold:
            lines.append(
                f"{r['fold']:>4}  {r['n_test']:>4}  {r['mae']:>12.2f}  {r['rho']:>6.3f}  {r['chosen']}"
            )
        lines.append("")
        lines.append(f"pooled MAE:          {report.aggregate['mae']:.2f} GBP")
        lines.append(f"pooled Pearson rho:  {report.aggregate['rho']:.4f}")
        lines.append(f"per-fold mean MAE:   {report.aggregate['mae_fold_mean']:.2f} GBP")
    lines.append("")
    return "\n".join(lines)


def write_report_table(report: EvalReport, path: str | Path) -> None:
    with atomic_text_writer(path) as fh:
        fh.write(format_report_table(report))

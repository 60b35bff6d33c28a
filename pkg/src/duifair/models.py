"""Weighted-capable classifiers and standard classification scores.

Five families: logistic regression (full-batch gradient descent with
backtracking line search on the weighted negative log-likelihood), k-nearest
neighbors, decision tree (weighted Gini), random forest (weighted bootstrap),
and a linear SVM (deterministic subgradient descent on the weighted hinge
loss). Probability-0.5 / margin-0 ties predict 1; KNN breaks vote ties
toward the smallest label.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, DataError, DimensionError, NumericFailureError
from .preprocess import StandardizationParams

FAMILIES = ("logistic", "knn", "tree", "forest", "linear_svm")

MODEL_FORMAT_VERSION = 1


@dataclass
class ClassifierSpec:
    """Family tag plus per-family hyperparameters (unused ones ignored)."""

    family: str = "logistic"
    # logistic
    l2_lambda: float = 1e-4
    tol: float = 1e-6
    max_iter: int = 5000
    # knn
    k: int = 5
    # tree / forest
    max_depth: int = 8
    min_samples_leaf: int = 5
    n_trees: int = 100
    # linear_svm (deterministic full-batch training; seed kept for parity)
    c: float = 1.0
    epochs: int = 200
    # forest / linear_svm
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown classifier family '{self.family}'")
        checks = [
            (self.l2_lambda >= 0, "l2_lambda must be >= 0"),
            (self.tol > 0, "tol must be > 0"),
            (self.max_iter >= 1, "max_iter must be >= 1"),
            (self.k >= 1, "k must be >= 1"),
            (self.max_depth >= 1, "max_depth must be >= 1"),
            (self.min_samples_leaf >= 1, "min_samples_leaf must be >= 1"),
            (self.n_trees >= 1, "n_trees must be >= 1"),
            (self.c > 0, "c must be > 0"),
            (self.epochs >= 1, "epochs must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


@dataclass
class ClassificationScores:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainedModel:
    """Immutable fitted classifier; safe to share across threads."""

    family: str
    spec: ClassifierSpec
    n_features: int
    coef: np.ndarray | None = None
    intercept: float = 0.0
    converged: bool | None = None
    n_iter: int | None = None
    final_loss: float | None = None
    train_X: np.ndarray | None = None
    train_y: np.ndarray | None = None
    nodes: list[dict] | None = None
    trees: list[list[dict]] | None = None
    standardization: StandardizationParams | None = None
    feature_names: list[str] | None = None


def _validate_training_inputs(X, y, weights):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    weights = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],) or weights.shape != (X.shape[0],):
        raise DimensionError("X must be n x d with matching y and weights")
    if X.shape[0] == 0:
        raise DataError("cannot train on an empty dataset")
    if not np.all(np.isfinite(X)):
        raise DataError("training features must be finite")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must be 0/1")
    if not np.all(weights > 0):
        raise DataError("instance weights must be positive")
    return X, y, weights


def _sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss_grad(beta, intercept, X, y, weights, l2_lambda):
    """Weighted negative log-likelihood with an unpenalized intercept.

    Returns (loss, grad_beta, grad_intercept). Stable for |z| up to 1e3.
    """
    z = X @ beta + intercept
    loss = float(np.dot(weights, np.logaddexp(0.0, z) - y * z))
    loss += 0.5 * l2_lambda * float(np.dot(beta, beta))
    resid = weights * (_sigmoid(z) - y)
    grad_beta = X.T @ resid + l2_lambda * beta
    return loss, grad_beta, float(resid.sum())


def fit_logistic(X, y, weights=None, spec: ClassifierSpec | None = None) -> TrainedModel:
    """Full-batch gradient descent with backtracking (Armijo) line search.

    Terminates when the gradient infinity-norm drops below spec.tol or at
    spec.max_iter; convergence status is recorded on the model.
    """
    spec = spec or ClassifierSpec(family="logistic")
    X, y, weights = _validate_training_inputs(X, y, weights)
    d = X.shape[1]
    beta = np.zeros(d)
    intercept = 0.0
    loss, g_beta, g_int = logistic_loss_grad(beta, intercept, X, y, weights, spec.l2_lambda)
    if not math.isfinite(loss):
        raise NumericFailureError(f"non-finite initial loss {loss}")
    step = 1.0
    converged = False
    it = 0
    for it in range(1, spec.max_iter + 1):
        g_inf = max(float(np.max(np.abs(g_beta))) if d else 0.0, abs(g_int))
        if g_inf < spec.tol:
            converged = True
            break
        g_sq = float(np.dot(g_beta, g_beta)) + g_int * g_int
        t = min(step * 2.0, 1e6)
        accepted = False
        while t > 1e-30:
            cand_beta = beta - t * g_beta
            cand_int = intercept - t * g_int
            cand = logistic_loss_grad(cand_beta, cand_int, X, y, weights, spec.l2_lambda)
            if math.isfinite(cand[0]) and cand[0] <= loss - 1e-4 * t * g_sq:
                beta, intercept = cand_beta, cand_int
                loss, g_beta, g_int = cand
                step = t
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break  # numerically stalled; converged stays as computed
        if not (math.isfinite(loss) and np.all(np.isfinite(g_beta))):
            raise NumericFailureError(
                f"non-finite loss/gradient at iteration {it} (loss={loss})"
            )
    else:
        it = spec.max_iter
    return TrainedModel(
        family="logistic",
        spec=spec,
        n_features=d,
        coef=beta,
        intercept=intercept,
        converged=converged,
        n_iter=it,
        final_loss=loss,
    )


def fit_knn(X, y, weights=None, spec: ClassifierSpec | None = None) -> TrainedModel:
    """Store the training set; instance weights are ignored by this family."""
    spec = spec or ClassifierSpec(family="knn")
    X, y, _ = _validate_training_inputs(X, y, weights)
    if spec.k > X.shape[0]:
        raise ConfigError(f"k={spec.k} exceeds the {X.shape[0]} training instances")
    return TrainedModel(
        family="knn", spec=spec, n_features=X.shape[1], train_X=X.copy(), train_y=y.copy()
    )


def _leaf(y, w) -> dict:
    mass1 = float(np.dot(w, y))
    mass0 = float(w.sum() - mass1)
    return {"feature": None, "value": None, "left": None, "right": None,
            "mass0": mass0, "mass1": mass1}


def _best_split(X, y, w, feature_ids, min_leaf):
    """Cheapest weighted-Gini split over midpoint candidates, or None."""
    n = len(y)
    best = None
    for f in feature_ids:
        vals = X[:, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sy = y[order]
        sw = w[order]
        cum1 = np.cumsum(sw * sy)
        cum0 = np.cumsum(sw * (1 - sy))
        pos = np.arange(1, n)
        valid = (sv[1:] > sv[:-1]) & (pos >= min_leaf) & (n - pos >= min_leaf)
        if not valid.any():
            continue
        l1 = cum1[:-1][valid]
        l0 = cum0[:-1][valid]
        r1 = cum1[-1] - l1
        r0 = cum0[-1] - l0
        wl = l1 + l0
        wr = r1 + r0
        # weighted impurity: sum over children of W_child * gini_child
        cost = (wl - (l1 * l1 + l0 * l0) / wl) + (wr - (r1 * r1 + r0 * r0) / wr)
        k = int(np.argmin(cost))
        if best is None or cost[k] < best[0]:
            idx = pos[valid][k]
            threshold = 0.5 * (sv[idx - 1] + sv[idx])
            best = (float(cost[k]), int(f), threshold)
    return best


def _grow_tree(X, y, w, spec, rng=None, max_features=None) -> list[dict]:
    nodes: list[dict] = []

    def grow(idx, depth):
        ny = y[idx]
        node_id = len(nodes)
        if (
            depth >= spec.max_depth
            or len(idx) < 2 * spec.min_samples_leaf
            or ny.min() == ny.max()
        ):
            nodes.append(_leaf(ny, w[idx]))
            return node_id
        d = X.shape[1]
        if max_features is not None and max_features < d:
            feature_ids = np.sort(rng.choice(d, size=max_features, replace=False))
        else:
            feature_ids = np.arange(d)
        split = _best_split(X[idx], ny, w[idx], feature_ids, spec.min_samples_leaf)
        if split is None:
            nodes.append(_leaf(ny, w[idx]))
            return node_id
        _, f, threshold = split
        nodes.append({"feature": f, "value": threshold, "left": None, "right": None,
                      "mass0": 0.0, "mass1": 0.0})
        go_left = X[idx, f] < threshold
        nodes[node_id]["left"] = grow(idx[go_left], depth + 1)
        nodes[node_id]["right"] = grow(idx[~go_left], depth + 1)
        return node_id

    grow(np.arange(len(y)), 0)
    return nodes


def fit_tree(X, y, weights=None, spec: ClassifierSpec | None = None) -> TrainedModel:
    """Greedy binary splits minimizing weighted Gini impurity."""
    spec = spec or ClassifierSpec(family="tree")
    X, y, weights = _validate_training_inputs(X, y, weights)
    nodes = _grow_tree(X, y, weights, spec)
    return TrainedModel(family="tree", spec=spec, n_features=X.shape[1], nodes=nodes)


def fit_forest(X, y, weights=None, spec: ClassifierSpec | None = None) -> TrainedModel:
    """Trees on weighted bootstrap resamples, ceil(sqrt(d)) features per split.

    Tree i draws from default_rng(spec.seed + i); predictions are therefore
    identical for a given seed regardless of scheduling.
    """
    spec = spec or ClassifierSpec(family="forest")
    X, y, weights = _validate_training_inputs(X, y, weights)
    n, d = X.shape
    max_features = int(math.ceil(math.sqrt(d))) if d else 0
    p = weights / weights.sum()
    trees = []
    for i in range(spec.n_trees):
        rng = np.random.default_rng(spec.seed + i)
        sample = rng.choice(n, size=n, replace=True, p=p)
        trees.append(
            _grow_tree(X[sample], y[sample], np.ones(n), spec, rng=rng, max_features=max_features)
        )
    return TrainedModel(family="forest", spec=spec, n_features=d, trees=trees)


def fit_linear_svm(X, y, weights=None, spec: ClassifierSpec | None = None) -> TrainedModel:
    """Deterministic full-batch subgradient descent on the weighted hinge loss.

    Objective: (1/n) sum_i w_i max(0, 1 - yt_i z_i) + ||beta||^2 / (2 c n)
    with yt in {-1,+1}; step at epoch t is 1/(reg * t) where reg = 1/(c n).
    The intercept is unregularized.
    """
    spec = spec or ClassifierSpec(family="linear_svm")
    X, y, weights = _validate_training_inputs(X, y, weights)
    n, d = X.shape
    yt = 2.0 * y - 1.0
    reg = 1.0 / (spec.c * n)
    beta = np.zeros(d)
    intercept = 0.0
    for t in range(1, spec.epochs + 1):
        eta = 1.0 / (reg * t)
        margins = yt * (X @ beta + intercept)
        viol = margins < 1.0
        wy = weights[viol] * yt[viol]
        g_beta = reg * beta - (X[viol].T @ wy) / n
        g_int = -float(wy.sum()) / n
        beta = beta - eta * g_beta
        intercept -= eta * g_int
        if not np.all(np.isfinite(beta)):
            raise NumericFailureError(f"non-finite SVM iterate at epoch {t}")
    return TrainedModel(
        family="linear_svm", spec=spec, n_features=d, coef=beta, intercept=intercept,
        n_iter=spec.epochs,
    )


_FITTERS = {
    "logistic": fit_logistic,
    "knn": fit_knn,
    "tree": fit_tree,
    "forest": fit_forest,
    "linear_svm": fit_linear_svm,
}


def fit_model(X, y, weights=None, spec: ClassifierSpec | None = None) -> TrainedModel:
    spec = spec or ClassifierSpec()
    return _FITTERS[spec.family](X, y, weights, spec)


def _route(nodes: list[dict], row) -> dict:
    node = nodes[0]
    while node["feature"] is not None:
        node = nodes[node["left"] if row[node["feature"]] < node["value"] else node["right"]]
    return node


def _check_features(model: TrainedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionError(
            f"model expects {model.n_features} features, got {X.shape[1] if X.ndim == 2 else X.ndim}"
        )
    return X


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    """P(label = 1); logistic family only."""
    if model.family != "logistic":
        raise ConfigError(f"predict_proba is only defined for logistic, not {model.family}")
    X = _check_features(model, X)
    return _sigmoid(X @ model.coef + model.intercept)


def predict(model: TrainedModel, X) -> np.ndarray:
    X = _check_features(model, X)
    if model.family == "logistic":
        return (X @ model.coef + model.intercept >= 0.0).astype(int)
    if model.family == "linear_svm":
        return (X @ model.coef + model.intercept >= 0.0).astype(int)
    if model.family == "knn":
        diffs = X[:, None, :] - model.train_X[None, :, :]
        dists = np.sqrt((diffs * diffs).sum(axis=2))
        out = np.empty(X.shape[0], dtype=int)
        for i in range(X.shape[0]):
            nearest = np.argsort(dists[i], kind="stable")[: model.spec.k]
            ones = int(model.train_y[nearest].sum())
            zeros = model.spec.k - ones
            out[i] = 1 if ones > zeros else 0  # tie -> smallest label
        return out
    if model.family == "tree":
        return np.array(
            [1 if (leaf := _route(model.nodes, row))["mass1"] >= leaf["mass0"] else 0 for row in X],
            dtype=int,
        )
    if model.family == "forest":
        votes = np.zeros(X.shape[0], dtype=int)
        for nodes in model.trees:
            votes += np.array(
                [1 if (leaf := _route(nodes, row))["mass1"] >= leaf["mass0"] else 0 for row in X],
                dtype=int,
            )
        return (2 * votes >= len(model.trees)).astype(int)  # tie -> 1
    raise ConfigError(f"unknown family '{model.family}'")


def classification_scores(y, y_hat) -> ClassificationScores:
    """Accuracy/precision/recall/f1 with positive class 1 ("High" risk).

    Zero-denominator precision/recall/f1 are reported as 0 and flagged.
    """
    y = np.asarray(y, dtype=int)
    y_hat = np.asarray(y_hat, dtype=int)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise DimensionError("y and y_hat must be equal-length 1-D vectors")
    if not (np.isin(y, (0, 1)).all() and np.isin(y_hat, (0, 1)).all()):
        raise DataError("scores need binary labels")
    tp = int(np.sum((y == 1) & (y_hat == 1)))
    fp = int(np.sum((y == 0) & (y_hat == 1)))
    tn = int(np.sum((y == 0) & (y_hat == 0)))
    fn = int(np.sum((y == 1) & (y_hat == 0)))
    n = tp + fp + tn + fn
    degenerate = []
    accuracy = (tp + tn) / n
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        degenerate.append("precision")
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        degenerate.append("recall")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    return ClassificationScores(
        accuracy=accuracy, precision=precision, recall=recall, f1=f1,
        tp=tp, fp=fp, tn=tn, fn=fn, degenerate=tuple(degenerate),
    )


# ---------------------------------------------------------------------------
# model serialization (versioned structured text)
# ---------------------------------------------------------------------------

def model_to_dict(model: TrainedModel) -> dict:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "family": model.family,
        "spec": asdict(model.spec),
        "n_features": model.n_features,
    }
    if model.coef is not None:
        doc["coef"] = model.coef.tolist()
        doc["intercept"] = model.intercept
    if model.converged is not None:
        doc["converged"] = model.converged
        doc["n_iter"] = model.n_iter
        doc["final_loss"] = model.final_loss
    if model.train_X is not None:
        doc["train_X"] = model.train_X.tolist()
        doc["train_y"] = model.train_y.tolist()
    if model.nodes is not None:
        doc["nodes"] = model.nodes
    if model.trees is not None:
        doc["trees"] = model.trees
    if model.standardization is not None:
        doc["standardization"] = {
            "mean": model.standardization.mean.tolist(),
            "scale": model.standardization.scale.tolist(),
        }
    if model.feature_names is not None:
        doc["feature_names"] = model.feature_names
    return doc


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ConfigError(f"unsupported model format version {doc.get('format_version')}")
    std = None
    if "standardization" in doc:
        std = StandardizationParams(
            mean=np.array(doc["standardization"]["mean"]),
            scale=np.array(doc["standardization"]["scale"]),
        )
    return TrainedModel(
        family=doc["family"],
        spec=ClassifierSpec(**doc["spec"]),
        n_features=doc["n_features"],
        coef=np.array(doc["coef"]) if "coef" in doc else None,
        intercept=doc.get("intercept", 0.0),
        converged=doc.get("converged"),
        n_iter=doc.get("n_iter"),
        final_loss=doc.get("final_loss"),
        train_X=np.array(doc["train_X"]) if "train_X" in doc else None,
        train_y=np.array(doc["train_y"], dtype=int) if "train_y" in doc else None,
        nodes=doc.get("nodes"),
        trees=doc.get("trees"),
        standardization=std,
        feature_names=doc.get("feature_names"),
    )


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))

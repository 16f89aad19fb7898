"""Model families and their (small) hyperparameter grids.

Six families: a linear baseline, an RBF kernel SVM, bagging and boosting
ensembles, and a soft voting ensemble of random forest + logistic
regression + k-nearest neighbors. Features are standardized (scaler fit
on train inside the pipeline) for the scale-sensitive families only;
trees consume raw features.

The XGBoost slot prefers the `xgboost` package and falls back to
sklearn's histogram gradient boosting when it is not installed; the
report records which implementation backed the column.
"""

from __future__ import annotations

from itertools import product

from sklearn.ensemble import (
    GradientBoostingClassifier,
    HistGradientBoostingClassifier,
    RandomForestClassifier,
    VotingClassifier,
)
from sklearn.linear_model import LogisticRegression
from sklearn.neighbors import KNeighborsClassifier
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.svm import SVC

try:
    from xgboost import XGBClassifier  # type: ignore

    _HAVE_XGBOOST = True
except ImportError:
    _HAVE_XGBOOST = False

FAMILIES = ("LogReg", "SVM", "RF", "GB", "XGBoost", "Voting")


def xgboost_backing() -> str:
    return "xgboost.XGBClassifier" if _HAVE_XGBOOST else "sklearn.HistGradientBoostingClassifier"


def _scaled(est) -> Pipeline:
    return Pipeline([("scaler", StandardScaler()), ("model", est)])


def family_grid(family: str) -> list[dict]:
    """Deterministically ordered parameter grid (kept <= 27 points)."""
    if family == "LogReg":
        return [{"C": c} for c in (0.1, 1.0, 10.0)]
    if family == "SVM":
        return [{"C": c, "gamma": g} for c, g in product((1.0, 10.0, 100.0), ("scale", 0.01, 0.001))]
    if family == "RF":
        return [
            {"n_estimators": n, "max_depth": d}
            for n, d in product((100, 300), (None, 10, 20))
        ]
    if family == "GB":
        return [
            {"n_estimators": n, "learning_rate": lr, "max_depth": d}
            for n, lr, d in product((100, 200), (0.05, 0.1), (2, 3))
        ]
    if family == "XGBoost":
        return [
            {"n_estimators": n, "learning_rate": lr, "max_depth": d}
            for n, lr, d in product((100, 200), (0.05, 0.1), (3, 6))
        ]
    if family == "Voting":
        return [
            {"knn_neighbors": k, "logreg_C": c}
            for k, c in product((3, 5), (0.1, 1.0))
        ]
    raise ValueError(f"unknown family {family!r}")


def make_model(family: str, params: dict, seed: int):
    if family == "LogReg":
        return _scaled(LogisticRegression(C=params["C"], max_iter=5000, random_state=seed))
    if family == "SVM":
        return _scaled(SVC(kernel="rbf", C=params["C"], gamma=params["gamma"], random_state=seed))
    if family == "RF":
        return RandomForestClassifier(
            n_estimators=params["n_estimators"],
            max_depth=params["max_depth"],
            random_state=seed,
        )
    if family == "GB":
        return GradientBoostingClassifier(
            n_estimators=params["n_estimators"],
            learning_rate=params["learning_rate"],
            max_depth=params["max_depth"],
            random_state=seed,
        )
    if family == "XGBoost":
        if _HAVE_XGBOOST:
            return XGBClassifier(
                n_estimators=params["n_estimators"],
                learning_rate=params["learning_rate"],
                max_depth=params["max_depth"],
                random_state=seed,
                eval_metric="mlogloss",
            )
        return HistGradientBoostingClassifier(
            max_iter=params["n_estimators"],
            learning_rate=params["learning_rate"],
            max_depth=params["max_depth"],
            random_state=seed,
        )
    if family == "Voting":
        # soft voting over exactly RF + LogReg + kNN, probability-averaged
        return VotingClassifier(
            estimators=[
                ("rf", RandomForestClassifier(n_estimators=200, random_state=seed)),
                ("logreg", _scaled(LogisticRegression(C=params["logreg_C"], max_iter=5000, random_state=seed))),
                ("knn", _scaled(KNeighborsClassifier(n_neighbors=params["knn_neighbors"]))),
            ],
            voting="soft",
        )
    raise ValueError(f"unknown family {family!r}")

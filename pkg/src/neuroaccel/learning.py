"""Linear readout training, inference and benchmark metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import SingularSystemError

Z_95 = 1.959964

# Regularization grid in V^2; contains the values tuned for NARMA (1e-3) and parity (5e-3).
DEFAULT_GAMMA_GRID = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 5e-3, 1e-2, 1e-1)


@dataclass
class ReadoutModel:
    """Weights mapping a state row (N node values plus bias) to D outputs."""

    weights: np.ndarray  # D x (N+1)
    gamma: float
    config_hash: str = ""

    def __post_init__(self) -> None:
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("readout weights must be finite")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    @property
    def n_outputs(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def to_json(self) -> str:
        return json.dumps(
            {"weights": self.weights.tolist(), "gamma": self.gamma, "config_hash": self.config_hash}
        )

    @classmethod
    def from_json(cls, text: str) -> "ReadoutModel":
        d = json.loads(text)
        return cls(np.asarray(d["weights"]), float(d["gamma"]), d.get("config_hash", ""))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def _as_2d_targets(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def train_ridge(X, Y, gamma: float) -> ReadoutModel:
    """Ridge-regression readout.

    Finds ``W`` minimizing ``||X W^T - Y||^2 + gamma ||W||^2``. Rows of ``X``
    are state vectors (bias column included by the caller), rows of ``Y`` the
    matching targets. The bias weight is regularized like the others.
    """
    X = np.asarray(X, dtype=float)
    Y = _as_2d_targets(Y)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a non-empty 2-D array")
    if Y.shape[0] != X.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")

    if gamma == 0.0:
        # Minimum-norm least squares; well defined as long as X has full rank.
        W_t, _, rank, _ = np.linalg.lstsq(X, Y, rcond=None)
        if rank < min(X.shape):
            raise SingularSystemError(
                f"state matrix has rank {rank} < {min(X.shape)}; use gamma > 0"
            )
    else:
        A = X.T @ X
        A[np.diag_indices_from(A)] += gamma
        W_t = linalg.cho_solve(linalg.cho_factor(A, lower=True), X.T @ Y)
    return ReadoutModel(weights=W_t.T, gamma=float(gamma))


def predict(model: ReadoutModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.n_features:
        raise ValueError(f"X has {X.shape[-1]} columns, model expects {model.n_features}")
    return X @ model.weights.T


@dataclass
class DimensionScore:
    nrmse: float = float("nan")
    rmse: float = float("nan")
    success_rate: float = float("nan")
    ci_halfwidth: float = float("nan")
    n: int = 0


@dataclass
class BenchmarkScore:
    per_dimension: list[DimensionScore] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    def rows(self, task: str) -> list[dict]:
        out = []
        for label, s in zip(self.labels, self.per_dimension):
            out.append(
                {
                    "task": task,
                    "n": label,
                    "nrmse": s.nrmse,
                    "rmse": s.rmse,
                    "success": s.success_rate,
                    "ci": s.ci_halfwidth,
                }
            )
        return out


def nrmse(y, y_target) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension NRMSE and RMSE.

    Returns:
        ``(nrmse, rmse)``, each of length D. The normalization is the
        population variance of the target.
    """
    y = _as_2d_targets(y)
    t = _as_2d_targets(y_target)
    if y.shape != t.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {t.shape}")
    var = t.var(axis=0)
    if np.any(var <= 0):
        raise ValueError("target has zero variance")
    mse = np.mean((t - y) ** 2, axis=0)
    return np.sqrt(mse / var), np.sqrt(mse)


def agresti_coull_halfwidth(successes: int, n: int, z: float = Z_95) -> float:
    n_t = n + z * z
    p_t = (successes + 0.5 * z * z) / n_t
    return z * math.sqrt(p_t * (1.0 - p_t) / n_t)


def threshold_score(y, y_target, threshold: float = 0.0) -> tuple[float, float]:
    """Sign-agreement rate against bipolar targets and its 95% Agresti-Coull half-width."""
    y = np.asarray(y, dtype=float).ravel()
    t = np.asarray(y_target, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("empty input")
    if y.shape != t.shape:
        raise ValueError("shape mismatch")
    if not np.all(np.isin(t, (-1.0, 1.0))):
        raise ValueError("targets must be -1 or +1")
    decided = np.where(y >= threshold, 1.0, -1.0)
    k = int(np.count_nonzero(decided == t))
    return k / y.size, agresti_coull_halfwidth(k, y.size)


def score(y, y_target, kind: str, labels: Sequence[str] | None = None) -> BenchmarkScore:
    """Score each output column. ``kind`` is ``"regression"`` or ``"classification"``.

    NaN targets (invalid leading parity entries) are excluded per column.
    """
    y = _as_2d_targets(y)
    t = _as_2d_targets(y_target)
    dims = []
    for j in range(t.shape[1]):
        ok = np.isfinite(t[:, j])
        s = DimensionScore(n=int(ok.sum()))
        if t[ok, j].var() > 0:
            s.nrmse, s.rmse = (float(v[0]) for v in nrmse(y[ok, j], t[ok, j]))
        if kind == "classification":
            s.success_rate, s.ci_halfwidth = threshold_score(y[ok, j], t[ok, j])
        dims.append(s)
    labels = list(labels) if labels is not None else [str(j) for j in range(t.shape[1])]
    return BenchmarkScore(per_dimension=dims, labels=labels)


def _fit_masked(X, Y, gamma):
    """Train column by column when targets carry NaN (excluded) entries."""
    Y = _as_2d_targets(Y)
    if np.all(np.isfinite(Y)):
        return train_ridge(X, Y, gamma)
    W = np.empty((Y.shape[1], X.shape[1]))
    for j in range(Y.shape[1]):
        ok = np.isfinite(Y[:, j])
        W[j] = train_ridge(X[ok], Y[ok, j], gamma).weights[0]
    return ReadoutModel(weights=W, gamma=float(gamma))


def fit_readout(X, Y, gamma: float) -> ReadoutModel:
    """Like :func:`train_ridge` but tolerant of NaN-marked target entries."""
    return _fit_masked(np.asarray(X, dtype=float), Y, gamma)


def _objective(y, t, metric: str) -> float:
    """Lower is better."""
    s = score(y, t, "classification" if metric == "success" else "regression")
    if metric == "success":
        return -float(np.mean([d.success_rate for d in s.per_dimension]))
    return float(np.mean([d.nrmse for d in s.per_dimension]))


def select_gamma(X_train, Y_train, X_eval, Y_eval, grid=DEFAULT_GAMMA_GRID, metric: str = "nrmse"):
    """Pick the regularization with the best evaluation score.

    ``metric`` is ``"nrmse"`` (mean over outputs, minimized) or ``"success"``
    (mean success rate, maximized). Ties go to the larger gamma.

    Returns:
        ``(gamma, model, table)`` where ``table`` maps each gamma to its
        objective value (lower is better).
    """
    grid = sorted(set(float(g) for g in grid))
    if not grid:
        raise ValueError("empty gamma grid")
    table = {}
    best = None
    for g in grid:
        try:
            model = fit_readout(X_train, Y_train, g)
        except SingularSystemError:
            table[g] = float("inf")
            continue
        obj = _objective(predict(model, X_eval), Y_eval, metric)
        table[g] = obj
        # ascending grid + "<=" lets larger gamma win ties
        if best is None or obj <= best[0]:
            best = (obj, g, model)
    if best is None:
        raise SingularSystemError("no gamma in the grid produced a solvable system")
    return best[1], best[2], table

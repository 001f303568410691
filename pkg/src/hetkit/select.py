"""All-relevant feature selection with shadow features (Boruta).

Every iteration appends an independently shuffled copy of each feature,
scores all columns with an importance provider and counts a hit for each
real feature that beats the best shadow. A two-sided binomial test against
p = 0.5 then confirms or rejects features; decisions are final once made.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binom

from .errors import DomainError, ShapeError
from .nn import LayerSpec, TrainConfig, build_mlp, r2_score, train

ImportanceProvider = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


def permutation_importance(model, x: np.ndarray, y: np.ndarray, seed: int = 0, n_repeats: int = 5) -> np.ndarray:
    """Mean drop in R^2 when each column is permuted; ``model`` needs a ``predict`` method."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise ShapeError("permutation importance needs a non-empty 2-D feature matrix")
    rng = np.random.default_rng(seed)
    base = r2_score(y, model.predict(x))
    scores = np.zeros(x.shape[1])
    for j in range(x.shape[1]):
        drops = []
        for _ in range(n_repeats):
            shuffled = x.copy()
            shuffled[:, j] = rng.permutation(shuffled[:, j])
            drops.append(base - r2_score(y, model.predict(shuffled)))
        scores[j] = np.mean(drops)
    return scores


@dataclass(frozen=True)
class MLPImportance:
    """Default provider: fit a small MLP, score permutation importance on held-out rows.

    Scoring on held-out rows keeps a memorised noise column from looking useful.
    With fewer than 8 rows there is nothing to hold out and the training rows are reused.
    """

    hidden: tuple[LayerSpec, ...] = (LayerSpec(8, "tanh"),)
    epochs: int = 300
    learning_rate: float = 0.01
    n_repeats: int = 5
    holdout: float = 0.25

    def __call__(self, x: np.ndarray, y: np.ndarray, seed: int) -> np.ndarray:
        order = np.random.default_rng(seed).permutation(len(x))
        n_val = int(round(self.holdout * len(x))) if len(x) >= 8 else 0
        val, fit = (order[:n_val], order[n_val:]) if n_val else (order, order)
        net = build_mlp(x.shape[1], self.hidden, 1, seed=seed)
        net, _ = train(net, x[fit], y[fit], TrainConfig(self.epochs, self.learning_rate, "adam", seed=seed))
        return permutation_importance(net, x[val], y[val], seed=seed, n_repeats=self.n_repeats)


@dataclass
class BorutaResult:
    confirmed: list[str]
    tentative: list[str]
    rejected: list[str]
    hits: dict[str, int]
    iterations: int

    def report(self) -> str:
        lines = [f"Boruta after {self.iterations} iterations"]
        for label, names in (("confirmed", self.confirmed), ("tentative", self.tentative), ("rejected", self.rejected)):
            lines.append(f"{label}: {', '.join(names) if names else '-'}")
        lines.append("hits:")
        lines += [f"  {name}: {count}" for name, count in self.hits.items()]
        return "\n".join(lines) + "\n"


def boruta(
    x: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str] | None = None,
    max_iter: int = 50,
    seed: int = 0,
    alpha: float = 0.05,
    provider: ImportanceProvider | None = None,
) -> BorutaResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if max_iter < 1:
        raise DomainError(f"max_iter must be >= 1, got {max_iter}")
    if x.ndim != 2 or x.shape[1] < 2:
        raise ShapeError("Boruta needs at least 2 candidate features")
    p = x.shape[1]
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(p)]
    if len(names) != p:
        raise ShapeError(f"{p} columns but {len(names)} feature names")
    provider = provider or MLPImportance()
    rng = np.random.default_rng(seed)

    hits = np.zeros(p, dtype=int)
    decision = np.zeros(p, dtype=int)  # 1 confirmed, -1 rejected, 0 undecided
    iterations = 0
    for k in range(1, max_iter + 1):
        shadows = np.column_stack([rng.permutation(x[:, j]) for j in range(p)])
        imp = np.asarray(provider(np.hstack([x, shadows]), y, seed * 100003 + k), dtype=float)
        hits += imp[:p] > imp[p:].max()
        iterations = k

        open_ = decision == 0
        p_accept = binom.sf(hits - 1, k, 0.5)
        p_reject = binom.cdf(hits, k, 0.5)
        decision[open_ & (p_accept <= alpha / 2)] = 1
        decision[open_ & (p_reject <= alpha / 2)] = -1
        if np.all(decision != 0):
            break

    pick = lambda code: [n for n, d in zip(names, decision) if d == code]
    return BorutaResult(pick(1), pick(0), pick(-1), dict(zip(names, hits.tolist())), iterations)

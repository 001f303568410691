"""Tree-structured Parzen Estimator search over MLP architectures.

Past trials are split at the ``gamma`` quantile of their scores into a good
and a bad group. Each search dimension gets an independent Parzen density
for both groups (truncated Gaussians for numeric dimensions, smoothed counts
for categorical ones); candidates are drawn from the good density and the
one with the largest good/bad density ratio is suggested. Scores are
maximized.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import truncnorm

from .errors import HetkitError, NoViableArchitectureError, NumericalError, ValidationError
from .nn import LayerSpec, MLP, TrainConfig, build_mlp, forward, r2_score, train

Params = dict[str, Any]
Condition = Callable[[Params], bool]

ACTIVATION_CHOICES = ("selu", "tanh", "relu")
OPTIMIZER_CHOICES = ("sgd", "momentum", "adam")
MAX_LAYERS = 6


@dataclass(frozen=True)
class Float:
    name: str
    low: float
    high: float
    log: bool = False
    condition: Condition | None = field(default=None, compare=False)

    def bounds(self) -> tuple[float, float]:
        """Bounds in the internal (possibly log) coordinate."""
        return (math.log(self.low), math.log(self.high)) if self.log else (self.low, self.high)

    def to_internal(self, value: float) -> float:
        return math.log(value) if self.log else float(value)

    def from_internal(self, u: float) -> float:
        value = math.exp(u) if self.log else u
        return min(max(value, self.low), self.high)


@dataclass(frozen=True)
class Int:
    """Integer dimension, sampled continuously over [low - 0.5, high + 0.5] and rounded."""

    name: str
    low: int
    high: int
    log: bool = False
    condition: Condition | None = field(default=None, compare=False)

    def bounds(self) -> tuple[float, float]:
        lo, hi = self.low - 0.5, self.high + 0.5
        return (math.log(lo), math.log(hi)) if self.log else (lo, hi)

    def to_internal(self, value: int) -> float:
        return math.log(value) if self.log else float(value)

    def from_internal(self, u: float) -> int:
        value = int(round(math.exp(u) if self.log else u))
        return min(max(value, self.low), self.high)


@dataclass(frozen=True)
class Categorical:
    name: str
    choices: tuple
    condition: Condition | None = field(default=None, compare=False)


Dimension = Float | Int | Categorical


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dimension, ...]

    def active(self, dim: Dimension, params: Params) -> bool:
        return dim.condition is None or dim.condition(params)

    def sample_uniform(self, rng: np.random.Generator) -> Params:
        params: Params = {}
        for dim in self.dims:
            if not self.active(dim, params):
                continue
            if isinstance(dim, Categorical):
                params[dim.name] = dim.choices[int(rng.integers(len(dim.choices)))]
            else:
                lo, hi = dim.bounds()
                params[dim.name] = dim.from_internal(float(rng.uniform(lo, hi)))
        return params

    def contains(self, params: Params) -> bool:
        seen: Params = {}
        for dim in self.dims:
            if not self.active(dim, seen):
                if dim.name in params:
                    return False
                continue
            if dim.name not in params:
                return False
            value = params[dim.name]
            if isinstance(dim, Categorical):
                if value not in dim.choices:
                    return False
            elif isinstance(dim, Int):
                if int(value) != value or not dim.low <= value <= dim.high:
                    return False
            elif not dim.low <= value <= dim.high:
                return False
            seen[dim.name] = value
        return set(params) == set(seen)


def mlp_search_space(
    min_layers: int = 2,
    max_layers: int = MAX_LAYERS,
    min_width: int = 4,
    max_width: int = 128,
    lr_range: tuple[float, float] = (1e-4, 1e-1),
) -> SearchSpace:
    dims: list[Dimension] = [Int("n_layers", min_layers, max_layers)]
    for i in range(max_layers):
        dims.append(Int(f"width_{i}", min_width, max_width, log=True, condition=lambda p, i=i: p["n_layers"] > i))
    dims += [
        Categorical("activation", ACTIVATION_CHOICES),
        Categorical("optimizer", OPTIMIZER_CHOICES),
        Float("lr", lr_range[0], lr_range[1], log=True),
    ]
    return SearchSpace(tuple(dims))


@dataclass
class Trial:
    trial_id: int
    params: Params
    score: float
    status: str  # "complete" | "failed"
    wall_ms: float = 0.0
    message: str = ""

    @property
    def rank_score(self) -> float:
        return self.score if self.status == "complete" else -math.inf


class TrialFailed(NumericalError):
    pass


# -- Parzen estimators -------------------------------------------------------


def _bandwidths(mus: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Per-point widths: distance to the farther neighbour (bounds count as neighbours), clipped."""
    order = np.argsort(mus)
    srt = mus[order]
    padded = np.concatenate([[lo], srt, [hi]])
    sig = np.maximum(padded[1:-1] - padded[:-2], padded[2:] - padded[1:-1])
    span = hi - lo
    sig = np.clip(sig, span / min(100.0, len(mus) + 2.0), span)
    out = np.empty_like(sig)
    out[order] = sig
    return out


@dataclass
class _NumericParzen:
    mus: np.ndarray
    sigmas: np.ndarray
    lo: float
    hi: float

    @classmethod
    def fit(cls, obs: Sequence[float], lo: float, hi: float) -> "_NumericParzen":
        obs = np.asarray(obs, dtype=float)
        prior_mu, prior_sigma = 0.5 * (lo + hi), hi - lo
        sigmas = _bandwidths(obs, lo, hi) if len(obs) else np.zeros(0)
        return cls(np.append(obs, prior_mu), np.append(sigmas, prior_sigma), lo, hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        comp = rng.integers(0, len(self.mus), size=n)
        mu, sig = self.mus[comp], self.sigmas[comp]
        a, b = (self.lo - mu) / sig, (self.hi - mu) / sig
        return truncnorm.rvs(a, b, loc=mu, scale=sig, random_state=rng)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)[:, None]
        mass = ndtr((self.hi - self.mus) / self.sigmas) - ndtr((self.lo - self.mus) / self.sigmas)
        z = (x - self.mus) / self.sigmas
        comp = np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * self.sigmas * mass)
        return np.log(comp.mean(axis=1) + 1e-300)


def _categorical_probs(obs: Sequence, choices: tuple) -> np.ndarray:
    counts = np.ones(len(choices))  # one prior pseudo-count per choice
    for value in obs:
        counts[choices.index(value)] += 1
    return counts / counts.sum()


@dataclass
class TpeState:
    space: SearchSpace
    history: list[Trial] = field(default_factory=list)
    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValidationError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.n_candidates < 1:
            raise ValidationError("n_candidates must be >= 1")
        self.rng = np.random.default_rng(self.seed)

    def split(self) -> tuple[list[Trial], list[Trial]]:
        ranked = sorted(self.history, key=lambda t: t.rank_score, reverse=True)
        n_good = max(1, math.ceil(self.gamma * len(ranked)))
        return ranked[:n_good], ranked[n_good:]


def suggest(state: TpeState) -> Params:
    space, rng = state.space, state.rng
    if len(state.history) < state.n_startup:
        return space.sample_uniform(rng)
    good, bad = state.split()
    params: Params = {}
    for dim in space.dims:
        if not space.active(dim, params):
            continue
        g_obs = [t.params[dim.name] for t in good if dim.name in t.params]
        b_obs = [t.params[dim.name] for t in bad if dim.name in t.params]
        if isinstance(dim, Categorical):
            pl = _categorical_probs(g_obs, dim.choices)
            pg = _categorical_probs(b_obs, dim.choices)
            cand = rng.choice(len(dim.choices), size=state.n_candidates, p=pl)
            best = cand[np.argmax(np.log(pl[cand]) - np.log(pg[cand]))]
            params[dim.name] = dim.choices[int(best)]
        else:
            lo, hi = dim.bounds()
            l_est = _NumericParzen.fit([dim.to_internal(v) for v in g_obs], lo, hi)
            g_est = _NumericParzen.fit([dim.to_internal(v) for v in b_obs], lo, hi)
            cand = l_est.sample(rng, state.n_candidates)
            best = cand[np.argmax(l_est.log_pdf(cand) - g_est.log_pdf(cand))]
            params[dim.name] = dim.from_internal(float(best))
    return params


def optimize(
    space: SearchSpace,
    objective: Callable[[Params], float],
    n_trials: int = 50,
    seed: int = 0,
    gamma: float = 0.25,
    n_startup: int = 10,
    n_candidates: int = 24,
    on_trial: Callable[[Trial], None] | None = None,
) -> tuple[Trial, list[Trial]]:
    """Run ``n_trials`` sequential suggestions; return the best completed trial and the full history.

    Objective failures (:class:`HetkitError` subclasses or a non-finite
    score) are recorded as failed trials and rank below every completed one.
    """
    if n_trials < 1:
        raise ValidationError("n_trials must be >= 1")
    state = TpeState(space, gamma=gamma, n_startup=n_startup, n_candidates=n_candidates, seed=seed)
    for trial_id in range(n_trials):
        params = suggest(state)
        start = time.perf_counter()
        try:
            score = float(objective(params))
            status, message = ("complete", "") if math.isfinite(score) else ("failed", "non-finite score")
        except HetkitError as exc:
            score, status, message = -math.inf, "failed", str(exc)
        trial = Trial(trial_id, params, score, status, 1e3 * (time.perf_counter() - start), message)
        state.history.append(trial)
        if on_trial is not None:
            on_trial(trial)
    completed = [t for t in state.history if t.status == "complete"]
    if not completed:
        raise NoViableArchitectureError(f"all {n_trials} trials failed; last: {state.history[-1].message}")
    best = max(completed, key=lambda t: t.score)
    return best, state.history


def running_best(history: Sequence[Trial]) -> list[float]:
    out, best = [], -math.inf
    for t in history:
        best = max(best, t.rank_score)
        out.append(best)
    return out


# -- MLP trials --------------------------------------------------------------


@dataclass(frozen=True)
class Split:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray


def train_val_split(x: np.ndarray, y: np.ndarray, val_fraction: float = 0.2, seed: int = 0) -> Split:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    n_val = max(1, int(round(val_fraction * n)))
    if n_val >= n:
        raise ValidationError(f"cannot hold out {n_val} of {n} rows for validation")
    order = np.random.default_rng(seed).permutation(n)
    val, tr = order[:n_val], order[n_val:]
    return Split(x[tr], y[tr], x[val], y[val])


def architecture(params: Params) -> list[LayerSpec]:
    return [LayerSpec(int(params[f"width_{i}"]), params["activation"]) for i in range(int(params["n_layers"]))]


def build_from_params(params: Params, input_dim: int, output_dim: int, seed: int = 0) -> MLP:
    return build_mlp(input_dim, architecture(params), output_dim, "identity", seed=seed)


def train_config(params: Params, epochs: int, seed: int) -> TrainConfig:
    return TrainConfig(epochs=epochs, learning_rate=float(params["lr"]), optimizer=params["optimizer"], seed=seed)


def fit_params(params: Params, x: np.ndarray, y: np.ndarray, epochs: int = 500, seed: int = 0) -> MLP:
    y2 = y[:, None] if y.ndim == 1 else y
    net = build_from_params(params, x.shape[1], y2.shape[1], seed=seed)
    net, _ = train(net, x, y2, train_config(params, epochs, seed))
    return net


def score_params(params: Params, split: Split, epochs: int = 500, seed: int = 0) -> float:
    """Validation R^2 of a freshly trained network; raises :class:`TrialFailed` when undefined."""
    y_val = split.y_val
    if np.all(y_val == y_val.reshape(len(y_val), -1)[0]):
        raise TrialFailed("validation target has zero variance; R^2 undefined")
    net = fit_params(params, split.x_train, split.y_train, epochs, seed)
    with np.errstate(over="ignore", invalid="ignore"):
        score = r2_score(y_val, forward(net, split.x_val))
    if not math.isfinite(score):
        raise TrialFailed("non-finite validation score")
    return score


def run_trial(params: Params, split: Split, epochs: int = 500, seed: int = 0, trial_id: int = 0) -> Trial:
    if len(split.x_val) == 0:
        raise ValidationError("validation split is empty")
    start = time.perf_counter()
    try:
        score, status, message = score_params(params, split, epochs, seed), "complete", ""
    except HetkitError as exc:
        score, status, message = -math.inf, "failed", str(exc)
    return Trial(trial_id, params, score, status, 1e3 * (time.perf_counter() - start), message)


def mlp_objective(split: Split, epochs: int = 500, seed: int = 0) -> Callable[[Params], float]:
    return lambda params: score_params(params, split, epochs, seed)


HISTORY_COLUMNS = ("trial_id", "n_layers", "widths", "activation", "optimizer", "lr", "score", "status", "wall_ms")


def history_to_csv(history: Sequence[Trial]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for t in history:
        p = t.params
        n = int(p["n_layers"])
        writer.writerow(
            [
                t.trial_id,
                n,
                "-".join(str(int(p[f"width_{i}"])) for i in range(n)),
                p["activation"],
                p["optimizer"],
                repr(float(p["lr"])),
                repr(t.score),
                t.status,
                f"{t.wall_ms:.1f}",
            ]
        )
    return buf.getvalue()

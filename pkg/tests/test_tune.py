import csv
import io
import math

import numpy as np
import pytest

from hetkit.errors import NoViableArchitectureError, TrainingDivergedError, ValidationError
from hetkit.tune import (
    HISTORY_COLUMNS,
    Categorical,
    Float,
    Int,
    SearchSpace,
    TpeState,
    Trial,
    history_to_csv,
    mlp_objective,
    mlp_search_space,
    optimize,
    run_trial,
    running_best,
    suggest,
    train_val_split,
)


def branin_score(p):
    x1, x2 = p["x1"], p["x2"]
    b, c, t = 5.1 / (4 * math.pi**2), 5 / math.pi, 1 / (8 * math.pi)
    return -((x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10)


BRANIN = SearchSpace((Float("x1", -5, 10), Float("x2", 0, 15)))


def random_search_oracle(n_trials, seed):
    """Independent random search over the MLP space, consuming one generator in the documented order."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_trials):
        p = {"n_layers": min(max(int(round(rng.uniform(1.5, 6.5))), 2), 6)}
        for i in range(p["n_layers"]):
            w = int(round(math.exp(rng.uniform(math.log(3.5), math.log(128.5)))))
            p[f"width_{i}"] = min(max(w, 4), 128)
        p["activation"] = ("selu", "tanh", "relu")[int(rng.integers(3))]
        p["optimizer"] = ("sgd", "momentum", "adam")[int(rng.integers(3))]
        p["lr"] = min(max(math.exp(rng.uniform(math.log(1e-4), math.log(1e-1))), 1e-4), 1e-1)
        out.append(p)
    return out


def test_empty_history_is_uniform_and_in_bounds():
    space = mlp_search_space()
    state = TpeState(space, seed=1)
    p = suggest(state)
    assert space.contains(p)
    assert p == random_search_oracle(1, 1)[0]


def test_space_contains_rejects_out_of_bounds():
    space = mlp_search_space()
    good = random_search_oracle(1, 0)[0]
    assert space.contains(good)
    assert not space.contains({**good, "lr": 0.5})
    assert not space.contains({**good, "activation": "gelu"})
    extra = {**good, f"width_{good['n_layers']}": 8} if good["n_layers"] < 6 else {**good, "bogus": 1}
    assert not space.contains(extra)


def test_thousand_suggestions_within_bounds():
    space = mlp_search_space()
    rng = np.random.default_rng(0)
    state = TpeState(space, seed=3)
    for i, p in enumerate(random_search_oracle(25, 9)):
        state.history.append(Trial(i, p, float(rng.uniform()), "complete"))
    state.history.append(Trial(25, random_search_oracle(1, 4)[0], -math.inf, "failed"))
    for _ in range(1000):
        assert space.contains(suggest(state))


def test_int_and_log_dimensions_respect_bounds():
    space = SearchSpace((Int("k", 1, 3), Float("f", 1e-3, 1.0, log=True), Categorical("c", ("a", "b"))))
    state = TpeState(space, n_startup=2, seed=0)
    for i in range(40):
        p = suggest(state)
        assert space.contains(p)
        state.history.append(Trial(i, p, -abs(p["k"] - 2) - abs(math.log(p["f"])), "complete"))


def test_gamma_validated():
    with pytest.raises(ValidationError):
        TpeState(mlp_search_space(), gamma=1.0)


def test_startup_equivalent_to_random_search():
    seen = []
    best, hist = optimize(mlp_search_space(), lambda p: seen.append(p) or 0.0, n_trials=30, seed=11, n_startup=30)
    assert [t.params for t in hist] == random_search_oracle(30, 11)
    assert len(hist) == 30


def test_single_trial_history():
    best, hist = optimize(BRANIN, branin_score, n_trials=1, seed=0)
    assert len(hist) == 1 and best is hist[0]
    rng = np.random.default_rng(0)
    assert hist[0].params == {"x1": rng.uniform(-5, 10), "x2": rng.uniform(0, 15)}


def test_n_trials_validated():
    with pytest.raises(ValidationError):
        optimize(BRANIN, branin_score, n_trials=0)


def test_running_best_nondecreasing():
    best, hist = optimize(BRANIN, branin_score, n_trials=40, seed=2)
    rb = running_best(hist)
    assert all(b >= a for a, b in zip(rb, rb[1:]))
    assert rb[-1] == best.score == max(t.score for t in hist)


def test_optimize_deterministic():
    a = optimize(BRANIN, branin_score, n_trials=30, seed=5)[1]
    b = optimize(BRANIN, branin_score, n_trials=30, seed=5)[1]
    assert [t.params for t in a] == [t.params for t in b]


def test_planted_quadratic_optimum():
    space = SearchSpace((Float("x", 0.0, 10.0),))
    hits = 0
    for seed in range(10):
        best, _ = optimize(space, lambda p: -((p["x"] - 3.7) ** 2), n_trials=50, seed=seed)
        hits += abs(best.params["x"] - 3.7) <= 0.37
    assert hits >= 9


def test_tpe_beats_random_on_branin():
    tpe = [optimize(BRANIN, branin_score, 50, seed=s)[0].score for s in range(10)]
    rnd = [optimize(BRANIN, branin_score, 50, seed=s, n_startup=50)[0].score for s in range(10)]
    assert np.mean(tpe) >= np.mean(rnd)


def test_failures_are_recorded_and_ranked_last():
    def objective(p):
        if p["x1"] < 0:
            raise TrainingDivergedError(3, float("nan"))
        return branin_score(p)

    best, hist = optimize(BRANIN, objective, n_trials=25, seed=0)
    failed = [t for t in hist if t.status == "failed"]
    assert failed and all(t.score == -math.inf for t in failed)
    assert best.status == "complete"


def test_all_failed_raises():
    def objective(p):
        return float("nan")

    with pytest.raises(NoViableArchitectureError):
        optimize(BRANIN, objective, n_trials=3)


LINEAR_PARAMS = {"n_layers": 2, "width_0": 16, "width_1": 16, "activation": "tanh", "optimizer": "adam", "lr": 0.01}


def _linear_split():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(80, 2))
    y = 0.6 * x[:, 0] + 0.3 * x[:, 1]
    return train_val_split(x, y, 0.2, seed=0)


def test_constant_validation_target_fails():
    split = _linear_split()
    split = type(split)(split.x_train, split.y_train, split.x_val, np.full_like(split.y_val, 0.4))
    trial = run_trial(LINEAR_PARAMS, split)
    assert trial.status == "failed" and "zero variance" in trial.message
    assert trial.score == -math.inf


def test_linear_data_reaches_high_r2():
    trial = run_trial(LINEAR_PARAMS, _linear_split(), epochs=500)
    assert trial.status == "complete" and trial.score >= 0.99


def test_run_trial_deterministic():
    split = _linear_split()
    assert run_trial(LINEAR_PARAMS, split, epochs=50, seed=4).score == run_trial(LINEAR_PARAMS, split, epochs=50, seed=4).score


def test_split_disjoint_and_sized():
    x = np.arange(50.0)[:, None]
    s = train_val_split(x, x[:, 0], 0.2, seed=1)
    assert len(s.x_val) == 10 and len(s.x_train) == 40
    assert not set(s.x_val[:, 0]) & set(s.x_train[:, 0])


def test_history_csv_schema():
    split = _linear_split()
    _, hist = optimize(mlp_search_space(), mlp_objective(split, epochs=5), n_trials=3, seed=0)
    rows = list(csv.reader(io.StringIO(history_to_csv(hist))))
    assert tuple(rows[0]) == HISTORY_COLUMNS
    assert len(rows) == 4
    for row, t in zip(rows[1:], hist):
        assert int(row[1]) == t.params["n_layers"]
        assert len(row[2].split("-")) == t.params["n_layers"]

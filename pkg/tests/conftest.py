import csv
from importlib import resources

import numpy as np
import pytest

from hetkit.dataset import fit_scaler, load_fixture, scale


@pytest.fixture(scope="session")
def fixture_dataset():
    return load_fixture()


@pytest.fixture(scope="session")
def fixture_rows():
    """The shipped CSV read with the stdlib only, independent of the parser under test."""
    text = resources.files("hetkit").joinpath("data/thrusters.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()))
    return [{k: (v if k == "name" else float(v)) for k, v in r.items()} for r in rows]


@pytest.fixture(scope="session")
def fixture_scaled(fixture_dataset):
    scaler = fit_scaler(fixture_dataset)
    return scale(fixture_dataset, scaler), scaler


def central_difference(f, params, eps_rel=1e-6):
    """Central finite-difference gradient of scalar ``f()`` w.r.t. each array in ``params`` (mutated in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            h = eps_rel * max(1.0, abs(orig))
            flat[i] = orig + h
            up = f()
            flat[i] = orig - h
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


# Lines recorded by the acceptance suite, echoed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

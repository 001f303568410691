import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_difference
from hetkit.dataset import G0, Dataset, ThrusterRecord
from hetkit.errors import InsufficientDataError, TrainingDivergedError
from hetkit.physfit import COEFF_NAMES, JointData, fit_coefficients_gd, joint_grad, joint_loss
from hetkit.scaling import fit_scaling


def exact_dataset(c_h, c_m, c_p, c_t, n=8, seed=0):
    """Records that satisfy all four relations exactly for the given coefficients."""
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        d = rng.uniform(20, 120)
        u = rng.uniform(150, 500)
        h = c_h * d
        mdot = c_m * h * d
        power = c_p * u * d**2
        thrust = c_t * mdot * np.sqrt(u)
        recs.append(ThrusterRecord(f"s{i}", power, u, d, h, 1.5 * h, mdot, thrust, thrust / (mdot * G0) * 1e3))
    return Dataset(recs)


TRUE = (0.25, 0.003, 0.0005, 0.9)


def test_exact_synthetic_recovered():
    r = fit_coefficients_gd(exact_dataset(*TRUE))
    for name, c in zip(COEFF_NAMES, TRUE):
        assert r.coefficients[name] == pytest.approx(c, rel=1e-3)
    assert r.converged


def test_zero_noise_loss_below_threshold():
    r = fit_coefficients_gd(exact_dataset(*TRUE, seed=3))
    assert r.final_loss < 1e-10


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.1, 0.9),
    st.floats(1e-4, 1e-2),
    st.floats(1e-4, 1e-2),
    st.floats(0.3, 3.0),
    st.integers(0, 1000),
)
def test_recovery_property(c_h, c_m, c_p, c_t, seed):
    r = fit_coefficients_gd(exact_dataset(c_h, c_m, c_p, c_t, seed=seed))
    got = np.array([r.coefficients[n] for n in COEFF_NAMES])
    np.testing.assert_allclose(got, [c_h, c_m, c_p, c_t], rtol=1e-3)


def test_fixture_within_five_percent_of_least_squares(fixture_dataset):
    r = fit_coefficients_gd(fixture_dataset)
    ls = fit_scaling(fixture_dataset)
    for name in COEFF_NAMES:
        assert abs(r.coefficients[name] - getattr(ls, name)) / getattr(ls, name) <= 0.05
        assert r.divergence_pct[name] <= 5.0


def test_divergence_is_relative_to_least_squares(fixture_dataset):
    r = fit_coefficients_gd(fixture_dataset, epochs=3)
    for name in COEFF_NAMES:
        gd, ls = r.coefficients[name], r.least_squares[name]
        assert r.divergence_pct[name] == pytest.approx(100 * abs(gd - ls) / ls, rel=1e-12)


def test_zero_lr_keeps_init_and_is_not_converged(fixture_dataset):
    r = fit_coefficients_gd(fixture_dataset, lr=0.0, epochs=50)
    for name in COEFF_NAMES:
        assert r.coefficients[name] == pytest.approx(1.1 * r.least_squares[name], rel=1e-12)
    assert not r.converged


def test_loss_nonincreasing(fixture_dataset):
    hist = fit_coefficients_gd(fixture_dataset).loss_history
    assert all(b <= a + 1e-15 for a, b in zip(hist, hist[1:]))


def test_huge_lr_diverges_with_epoch(fixture_dataset):
    with pytest.raises(TrainingDivergedError) as err:
        fit_coefficients_gd(fixture_dataset, lr=5.0)
    assert err.value.epoch >= 1


def test_too_few_records(fixture_dataset):
    with pytest.raises(InsufficientDataError):
        fit_coefficients_gd(fixture_dataset.subset(fixture_dataset.names[:2]))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(fixture_dataset, seed):
    data = JointData.from_dataset(fixture_dataset)
    ls = np.array(fit_scaling(fixture_dataset).as_tuple())
    c = ls * np.random.default_rng(seed).uniform(0.7, 1.3, size=4)
    (numeric,) = central_difference(lambda: joint_loss(c, data), [c])
    np.testing.assert_allclose(joint_grad(c, data), numeric, rtol=1e-5)


def test_report_serializes(fixture_dataset):
    d = fit_coefficients_gd(fixture_dataset).to_dict()
    assert set(d["coefficients"]) == set(COEFF_NAMES)
    assert d["final_loss"] >= 0


def test_unit_curvature_normalization(fixture_dataset):
    data = JointData.from_dataset(fixture_dataset)
    s = data.scales()
    # Loss is quadratic per coefficient, so the second difference in theta gives the curvature.
    base = np.array(fit_scaling(fixture_dataset).as_tuple()) / s
    for k in range(4):
        e = np.zeros(4)
        e[k] = 1e-3
        curv = (joint_loss((base + e) * s, data) - 2 * joint_loss(base * s, data) + joint_loss((base - e) * s, data)) / 1e-6
        assert curv == pytest.approx(1.0, rel=1e-4)

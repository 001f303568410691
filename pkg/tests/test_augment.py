import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hetkit.augment import (
    BoundarySpec,
    GanConfig,
    boundary_filter,
    discriminator_accuracy,
    feature_mean_gap,
    generate,
    nearest_record_mape,
    similarity_mape,
    train_gan,
)
from hetkit.dataset import FEATURE_NAMES
from hetkit.errors import ShapeError, ValidationError
from hetkit.nn import LayerSpec

SMALL = GanConfig(
    epochs=200, generator=(LayerSpec(8), LayerSpec(8)), discriminator=(LayerSpec(8), LayerSpec(4)), seed=3
)


@pytest.fixture(scope="module")
def trained(fixture_scaled):
    scaled, scaler = fixture_scaled
    return train_gan(scaled, GanConfig(seed=0), FEATURE_NAMES, ~scaler.degenerate)


def test_default_bounds():
    spec = BoundarySpec.default(FEATURE_NAMES)
    bounds = dict(zip(spec.feature_names, spec.upper))
    assert bounds["thrust_mn"] == 2.0
    assert bounds["eta_anode"] == 1.4
    assert bounds["power_w"] == 1.5
    assert set(spec.lower) == {0.0}


def test_bounds_must_be_ordered():
    with pytest.raises(ValidationError):
        BoundarySpec(("a",), (1.0,), (1.0,))


def test_boundary_examples():
    spec = BoundarySpec.default(FEATURE_NAMES)
    eff = FEATURE_NAMES.index("eta_anode")
    thr = FEATURE_NAMES.index("thrust_mn")
    rows = np.full((3, len(FEATURE_NAMES)), 0.5)
    rows[1, eff] = 1.5
    rows[2, thr] = 2.01
    kept, out = boundary_filter(rows, spec)
    assert len(kept) == 1 and np.all(kept[0] == 0.5)
    assert len(out) == 2


def test_boundary_width_mismatch():
    with pytest.raises(ShapeError):
        boundary_filter(np.zeros((2, 3)), BoundarySpec.default(FEATURE_NAMES))


def test_nan_rows_are_outliers():
    spec = BoundarySpec.default(["a", "b"])
    kept, out = boundary_filter(np.array([[np.nan, 0.5]]), spec)
    assert len(kept) == 0 and len(out) == 1


@given(arrays(float, st.tuples(st.integers(0, 30), st.just(3)), elements=st.floats(-1, 3)))
def test_partition_is_order_stable(rows):
    spec = BoundarySpec(("a", "b", "c"), (0.0, 0.0, 0.0), (1.5, 2.0, 1.4))
    kept, out = boundary_filter(rows, spec)
    assert len(kept) + len(out) == len(rows)
    inside = [r for r in rows if np.all((r >= 0) & (r <= [1.5, 2.0, 1.4]))]
    outside = [r for r in rows if not np.all((r >= 0) & (r <= [1.5, 2.0, 1.4]))]
    np.testing.assert_array_equal(kept.reshape(-1, 3), np.array(inside).reshape(-1, 3))
    np.testing.assert_array_equal(out.reshape(-1, 3), np.array(outside).reshape(-1, 3))


def test_mape_identical_is_zero(fixture_scaled):
    scaled, _ = fixture_scaled
    assert similarity_mape(scaled, scaled) == 0.0


def test_mape_ten_percent():
    real = np.array([[0.2, 0.4, 0.8], [5.0, 5.0, 5.0]])
    assert similarity_mape(1.1 * real[:1], real) == pytest.approx(10.0, rel=1e-12)


def test_mape_skips_zero_features():
    real = np.array([[0.0, 0.5]])
    fake = np.array([[0.3, 0.55]])
    assert similarity_mape(fake, real) == pytest.approx(10.0)


def test_mape_zero_only_for_exact_matches():
    real = np.array([[0.1, 0.2], [0.3, 0.4]])
    assert similarity_mape(real[[1, 0, 1]], real) == 0.0
    assert similarity_mape(real[[1]] + 1e-9, real) > 0.0


def test_mape_preconditions():
    with pytest.raises(ValidationError):
        similarity_mape(np.zeros((0, 2)), np.ones((3, 2)))
    with pytest.raises(ShapeError):
        nearest_record_mape(np.ones((1, 3)), np.ones((3, 2)))


def test_mape_matches_bruteforce():
    rng = np.random.default_rng(0)
    real = rng.uniform(0, 1, size=(6, 4))
    real[2, 1] = 0.0
    fake = rng.uniform(0, 1, size=(9, 4))
    expected = []
    for f in fake:
        best = np.inf
        for r in real:
            terms = [abs(a - b) / abs(b) for a, b in zip(f, r) if b != 0]
            best = min(best, sum(terms) / len(terms))
        expected.append(100 * best)
    np.testing.assert_allclose(nearest_record_mape(fake, real), expected, rtol=1e-12)


def test_train_gan_rejects_tiny_dataset():
    with pytest.raises(ValidationError):
        train_gan(np.zeros((0, 3)), SMALL)
    with pytest.raises(ValidationError):
        train_gan(np.zeros((5, 3)), SMALL)


def test_gan_determinism(fixture_scaled):
    scaled, _ = fixture_scaled
    a = train_gan(scaled, SMALL)
    b = train_gan(scaled, SMALL)
    assert a.d_loss == b.d_loss and a.g_loss == b.g_loss
    ba, bb = generate(a, 40, seed=7), generate(b, 40, seed=7)
    np.testing.assert_array_equal(ba.rows, bb.rows)
    np.testing.assert_array_equal(ba.mape_pct, bb.mape_pct)


def test_generate_zero_rows(fixture_scaled):
    scaled, _ = fixture_scaled
    batch = generate(train_gan(scaled, SMALL), 0, seed=1)
    assert len(batch) == 0 and batch.mean_mape == 0 and batch.outlier_rate == 0


def test_degenerate_columns_held_at_half():
    rng = np.random.default_rng(2)
    data = rng.uniform(size=(10, 3))
    data[:, 1] = 0.5
    gan = train_gan(data, SMALL, active=np.array([True, False, True]))
    rows = generate(gan, 5, seed=0).rows
    assert np.all(rows[:, 1] == 0.5)
    assert gan.generator.output_dim == 2


@pytest.mark.slow
def test_fixture_batch_quality(trained, fixture_scaled):
    scaled, _ = fixture_scaled
    batch = generate(trained, 512, seed=0)
    assert batch.mean_mape <= 10.0
    assert batch.outlier_rate <= 0.01
    _, violating = boundary_filter(batch.rows[batch.kept], BoundarySpec.default(FEATURE_NAMES))
    assert len(violating) == 0
    assert feature_mean_gap(batch, scaled).max() <= 0.15


@pytest.mark.slow
def test_discriminator_equilibrium_band(trained):
    assert 0.4 < discriminator_accuracy(trained, seed=0) < 0.9

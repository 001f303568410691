"""Tabular GAN for enlarging the scaled thruster table.

A generator maps Gaussian noise to scaled feature rows; a sigmoid
discriminator separates real rows from generated ones. After sampling,
rows outside physical bounds (in scaled units) are flagged as outliers and
each row is scored by its MAPE against the nearest real record.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ShapeError, TrainingDivergedError, ValidationError
from .nn import MLP, Adam, LayerSpec, backprop, build_mlp, forward, forward_cache

MIN_ROWS = 8
_EPS = 1e-12

# scaled-space upper bounds; anything not listed gets DEFAULT_UPPER
UPPER_BOUNDS = {"thrust_mn": 2.0, "eta_anode": 1.4}
DEFAULT_UPPER = 1.5


@dataclass(frozen=True)
class GanConfig:
    noise_dim: int = 8
    generator: tuple[LayerSpec, ...] = (LayerSpec(32, "relu"), LayerSpec(32, "relu"))
    discriminator: tuple[LayerSpec, ...] = (LayerSpec(32, "relu"), LayerSpec(16, "relu"))
    epochs: int = 20000
    lr_gen: float = 1e-3
    lr_disc: float = 4e-3
    batch_size: int = 64  # generated rows per step; real rows are resampled to match
    label_smoothing: float = 0.9
    lr_final_fraction: float = 0.1  # learning rates decay linearly to this fraction
    seed: int = 0

    def __post_init__(self):
        if self.noise_dim < 1:
            raise ValidationError("noise_dim must be >= 1")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if not (self.lr_gen > 0 and self.lr_disc > 0):
            raise ValidationError("GAN learning rates must be positive")
        if not 0 < self.label_smoothing <= 1:
            raise ValidationError("label_smoothing must lie in (0, 1]")
        if not 0 < self.lr_final_fraction <= 1:
            raise ValidationError("lr_final_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class BoundarySpec:
    feature_names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if not len(self.feature_names) == len(self.lower) == len(self.upper):
            raise ShapeError("boundary names/lower/upper length mismatch")
        for name, lo, hi in zip(self.feature_names, self.lower, self.upper):
            if not lo < hi:
                raise ValidationError(f"bound for '{name}': lower {lo} must be below upper {hi}")

    @classmethod
    def default(cls, feature_names: Sequence[str]) -> "BoundarySpec":
        names = tuple(feature_names)
        return cls(
            names,
            tuple(0.0 for _ in names),
            tuple(UPPER_BOUNDS.get(n, DEFAULT_UPPER) for n in names),
        )


@dataclass
class GanModel:
    generator: MLP
    discriminator: MLP
    real: np.ndarray  # scaled training rows, full width
    active: np.ndarray  # bool mask of columns the GAN models; the rest are held at 0.5
    config: GanConfig
    feature_names: tuple[str, ...]
    d_loss: list[float] = field(default_factory=list)
    g_loss: list[float] = field(default_factory=list)


@dataclass
class SyntheticBatch:
    rows: np.ndarray
    mape_pct: np.ndarray
    kept: np.ndarray

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def outlier_rate(self) -> float:
        return float(np.mean(~self.kept)) if len(self.kept) else 0.0

    @property
    def mean_mape(self) -> float:
        return float(np.mean(self.mape_pct)) if len(self.mape_pct) else 0.0


def _bce(p: np.ndarray, label: float) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. the probabilities."""
    q = np.clip(p, _EPS, 1.0 - _EPS)
    m = p.shape[0]
    loss = -np.mean(label * np.log(q) + (1.0 - label) * np.log(1.0 - q))
    grad = -(label / q - (1.0 - label) / (1.0 - q)) / m
    return float(loss), grad


def train_gan(
    scaled: np.ndarray,
    config: GanConfig = GanConfig(),
    feature_names: Sequence[str] | None = None,
    active: np.ndarray | None = None,
) -> GanModel:
    """Alternate one discriminator step and one generator step per epoch.

    ``active`` selects the modelled columns (pass ``~scaler.degenerate``);
    inactive columns are emitted as 0.5.
    """
    real = np.asarray(scaled, dtype=float)
    if real.ndim != 2 or real.shape[0] < MIN_ROWS:
        got = real.shape[0] if real.ndim == 2 else 0
        raise ValidationError(f"GAN training needs at least {MIN_ROWS} scaled rows, got {got}")
    width = real.shape[1]
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(width))
    if len(names) != width:
        raise ShapeError(f"{width} columns but {len(names)} feature names")
    active = np.ones(width, bool) if active is None else np.asarray(active, bool)
    data = real[:, active]
    k = data.shape[1]

    rng = np.random.default_rng(config.seed)
    gen = build_mlp(config.noise_dim, config.generator, k, "identity", seed=int(rng.integers(2**31)))
    disc = build_mlp(k, config.discriminator, 1, "sigmoid", seed=int(rng.integers(2**31)))
    g_opt = Adam(config.lr_gen, beta1=0.5)
    d_opt = Adam(config.lr_disc, beta1=0.5)
    g_params, d_params = gen.parameters(), disc.parameters()
    m = config.batch_size
    d_hist, g_hist = [], []

    for epoch in range(config.epochs):
        frac = 1.0 - (1.0 - config.lr_final_fraction) * epoch / max(config.epochs - 1, 1)
        g_opt.learning_rate = config.lr_gen * frac
        d_opt.learning_rate = config.lr_disc * frac

        # discriminator: smoothed real labels vs zero-labelled fakes
        batch = data[rng.integers(0, len(data), size=m)]
        fake = forward(gen, rng.standard_normal((m, config.noise_dim)))
        c_real = forward_cache(disc, batch)
        c_fake = forward_cache(disc, fake)
        l_real, g_real = _bce(c_real[-1][1], config.label_smoothing)
        l_fake, g_fake = _bce(c_fake[-1][1], 0.0)
        grads_r, _ = backprop(disc, c_real, g_real)
        grads_f, _ = backprop(disc, c_fake, g_fake)
        d_opt.step(d_params, [a + b for a, b in zip(grads_r, grads_f)])

        # generator: push fakes toward the "real" side of the discriminator
        g_cache = forward_cache(gen, rng.standard_normal((m, config.noise_dim)))
        d_cache = forward_cache(disc, g_cache[-1][1])
        l_gen, g_prob = _bce(d_cache[-1][1], 1.0)
        _, g_input = backprop(disc, d_cache, g_prob)
        grads_g, _ = backprop(gen, g_cache, g_input)
        g_opt.step(g_params, grads_g)

        d_loss = l_real + l_fake
        if not (np.isfinite(d_loss) and np.isfinite(l_gen)):
            raise TrainingDivergedError(epoch, d_loss if not np.isfinite(d_loss) else l_gen, "GAN training")
        d_hist.append(d_loss)
        g_hist.append(l_gen)

    return GanModel(gen, disc, real.copy(), active, config, names, d_hist, g_hist)


def sample_rows(gan: GanModel, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` full-width scaled rows from the generator."""
    width = gan.real.shape[1]
    rows = np.full((n, width), 0.5)
    if n:
        rng = np.random.default_rng(seed)
        rows[:, gan.active] = forward(gan.generator, rng.standard_normal((n, gan.config.noise_dim)))
    return rows


def generate(gan: GanModel, n: int, seed: int, bounds: BoundarySpec | None = None) -> SyntheticBatch:
    if n < 0:
        raise ValidationError("n must be non-negative")
    rows = sample_rows(gan, n, seed)
    if n == 0:
        return SyntheticBatch(rows, np.zeros(0), np.zeros(0, bool))
    bounds = bounds or BoundarySpec.default(gan.feature_names)
    mape = nearest_record_mape(rows[:, gan.active], gan.real[:, gan.active])
    return SyntheticBatch(rows, mape, within_bounds(rows, bounds))


def within_bounds(rows: np.ndarray, bounds: BoundarySpec) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != len(bounds.lower):
        raise ShapeError(f"row width {rows.shape[1]} does not match {len(bounds.lower)} bounds")
    lo = np.asarray(bounds.lower)
    hi = np.asarray(bounds.upper)
    # nan compares False, so non-finite rows are outliers
    return np.all((rows >= lo) & (rows <= hi), axis=1)


def boundary_filter(rows: np.ndarray, bounds: BoundarySpec) -> tuple[np.ndarray, np.ndarray]:
    """Split rows into (kept, outliers), preserving input order within each part."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    mask = within_bounds(rows, bounds)
    return rows[mask], rows[~mask]


def nearest_record_mape(fake: np.ndarray, real: np.ndarray) -> np.ndarray:
    """Per fake row: the smallest mean absolute relative deviation to any real row, in percent.

    Features where the real value is exactly 0 are skipped for that pair.
    """
    fake = np.atleast_2d(np.asarray(fake, dtype=float))
    real = np.atleast_2d(np.asarray(real, dtype=float))
    if fake.shape[0] == 0 or real.shape[0] == 0:
        raise ValidationError("MAPE needs non-empty fake and real sets")
    if fake.shape[1] != real.shape[1]:
        raise ShapeError(f"fake width {fake.shape[1]} != real width {real.shape[1]}")
    usable = real != 0  # (r, f)
    denom = np.where(usable, np.abs(real), 1.0)
    counts = usable.sum(axis=1)  # (r,)
    rel = np.abs(fake[:, None, :] - real[None, :, :]) / denom[None]  # (n, r, f)
    rel = np.where(usable[None], rel, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_pair = rel.sum(axis=2) / counts[None, :]
    per_pair = np.where(counts[None, :] > 0, per_pair, np.inf)
    return 100.0 * per_pair.min(axis=1)


def similarity_mape(fake: np.ndarray, real: np.ndarray) -> float:
    """Mean nearest-record MAPE of a fake set against a real set, in percent."""
    return float(np.mean(nearest_record_mape(fake, real)))


def discriminator_accuracy(gan: GanModel, n_fake: int | None = None, seed: int = 0) -> float:
    """Fraction of a balanced real/fake mix the discriminator labels correctly at threshold 0.5."""
    real = gan.real[:, gan.active]
    n_fake = len(real) if n_fake is None else n_fake
    fake = sample_rows(gan, n_fake, seed)[:, gan.active]
    p_real = forward(gan.discriminator, real)[:, 0]
    p_fake = forward(gan.discriminator, fake)[:, 0]
    correct = np.sum(p_real >= 0.5) + np.sum(p_fake < 0.5)
    return float(correct / (len(real) + n_fake))


def feature_mean_gap(batch: SyntheticBatch, real: np.ndarray) -> np.ndarray:
    """Absolute per-feature difference between kept synthetic means and real means."""
    kept = batch.rows[batch.kept]
    if len(kept) == 0:
        return np.full(real.shape[1], np.inf)
    return np.abs(kept.mean(axis=0) - np.asarray(real).mean(axis=0))

"""Thruster table ingestion, min-max scaling and closed-form anode relations.

Units follow the CSV schema: power in W, voltage in V, geometry in mm,
anode mass flow in mg/s, thrust in mN and specific impulse in s.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import DomainError, ParseError, SchemaError, ShapeError, ValidationError

G0 = 9.80665  # m/s^2

CSV_COLUMNS = ("name", "power_w", "ud_v", "d_mm", "h_mm", "l_mm", "mdot_mg_s", "thrust_mn", "isp_s")
RAW_FEATURES = CSV_COLUMNS[1:]
DERIVED_FEATURES = ("log10_power", "volume_mm3", "power_density", "eta_anode")
FEATURE_NAMES = RAW_FEATURES + DERIVED_FEATURES


@dataclass(frozen=True)
class IngestBounds:
    power_max_w: float = 2000.0
    ud_min_v: float = 100.0
    ud_max_v: float = 600.0


DEFAULT_BOUNDS = IngestBounds()


@dataclass(frozen=True)
class ThrusterRecord:
    name: str
    power_w: float
    ud_v: float
    d_mm: float
    h_mm: float
    l_mm: float
    mdot_mg_s: float
    thrust_mn: float
    isp_s: float

    def validate(self, bounds: IngestBounds = DEFAULT_BOUNDS) -> None:
        for f in RAW_FEATURES:
            value = getattr(self, f)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"record '{self.name}': {f} must be positive, got {value!r}")
        if not self.h_mm < self.d_mm:
            raise ValidationError(
                f"record '{self.name}': channel width h_mm={self.h_mm} must be below d_mm={self.d_mm}"
            )
        if self.power_w > bounds.power_max_w:
            raise ValidationError(
                f"record '{self.name}': power_w={self.power_w} outside (0, {bounds.power_max_w}]"
            )
        if not bounds.ud_min_v <= self.ud_v <= bounds.ud_max_v:
            raise ValidationError(
                f"record '{self.name}': ud_v={self.ud_v} outside [{bounds.ud_min_v}, {bounds.ud_max_v}]"
            )

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in RAW_FEATURES)


@dataclass(frozen=True)
class DerivedFeatures:
    log10_power: float
    volume_mm3: float
    power_density: float
    eta_anode: float


@dataclass(frozen=True)
class Dataset:
    records: tuple[ThrusterRecord, ...]
    feature_names: tuple[str, ...] = FEATURE_NAMES
    # rows dropped by a permissive parse, as human-readable messages
    skipped: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.records:
            raise ValidationError("dataset is empty")
        names = [r.name for r in self.records]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValidationError(f"duplicate record names: {', '.join(dupes)}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.records]

    def column(self, feature: str) -> np.ndarray:
        return self.matrix()[:, self.feature_names.index(feature)]

    def matrix(self) -> np.ndarray:
        """Feature matrix in real units, one row per record, columns in ``feature_names`` order."""
        raw = np.array([r.values() for r in self.records], dtype=float)
        full = feature_matrix(raw)
        return full[:, [FEATURE_NAMES.index(f) for f in self.feature_names]]

    def subset(self, names: Sequence[str]) -> "Dataset":
        keep = set(names)
        return Dataset(tuple(r for r in self.records if r.name in keep), self.feature_names)

    def without(self, names: Sequence[str]) -> "Dataset":
        drop = set(names)
        return Dataset(tuple(r for r in self.records if r.name not in drop), self.feature_names)


def _parse_number(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"malformed number {text!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite number {text!r}", row=row, column=column)
    return value


def parse_dataset(
    csv_text: str, bounds: IngestBounds = DEFAULT_BOUNDS, permissive: bool = False
) -> Dataset:
    """Parse the thruster CSV into a validated :class:`Dataset`.

    Row numbers in error messages count the header as row 1. With
    ``permissive=True`` bad rows are dropped and described in
    ``Dataset.skipped`` instead of failing the whole file.
    """
    reader = csv.reader(io.StringIO(csv_text))
    header = next(reader, None)
    if header is None:
        raise SchemaError("empty file: expected header " + ",".join(CSV_COLUMNS))
    header = [h.strip() for h in header]
    if tuple(header) != CSV_COLUMNS:
        raise SchemaError(
            f"header mismatch: expected {','.join(CSV_COLUMNS)!r}, got {','.join(header)!r}"
        )

    records: list[ThrusterRecord] = []
    problems: list[str] = []
    seen: set[str] = set()
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            if len(row) != len(CSV_COLUMNS):
                raise ParseError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}", row=row_no)
            name = row[0].strip()
            if not name:
                raise ParseError("empty name", row=row_no, column="name")
            nums = [_parse_number(cell.strip(), row_no, col) for cell, col in zip(row[1:], RAW_FEATURES)]
            record = ThrusterRecord(name, *nums)
            try:
                record.validate(bounds)
            except ValidationError as exc:
                raise ValidationError(f"row {row_no}: {exc}") from None
            if name in seen:
                raise ValidationError(f"row {row_no}: duplicate record name '{name}'")
        except ValidationError as exc:
            if not permissive:
                raise
            problems.append(str(exc))
            continue
        seen.add(name)
        records.append(record)

    if not records:
        raise SchemaError("no valid data rows" + (f" ({len(problems)} rejected)" if problems else ""))
    return Dataset(tuple(records), skipped=tuple(problems))


def load_fixture() -> Dataset:
    """The 16 printed rows of the reference low-power thruster table."""
    text = resources.files("hetkit").joinpath("data/thrusters.csv").read_text()
    return parse_dataset(text)


def fixture_text() -> str:
    return resources.files("hetkit").joinpath("data/thrusters.csv").read_text()


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in dataset.records:
        writer.writerow([r.name, *(repr(v) for v in r.values())])
    return buf.getvalue()


# -- closed-form anode relations ---------------------------------------------


def anode_parameter(total_value: float, mdot_total: float, mdot_anode: float) -> float:
    """Refer a thruster-level quantity to the anode flow: ``value * mdot_total / mdot_anode``."""
    if not mdot_anode > 0:
        raise DomainError(f"anode mass flow must be positive, got {mdot_anode!r}")
    return total_value * mdot_total / mdot_anode


def isp_anode(thrust_mn, mdot_mg_s):
    """Anode specific impulse in seconds. Accepts scalars or arrays."""
    mdot = np.asarray(mdot_mg_s, dtype=float)
    thrust = np.asarray(thrust_mn, dtype=float)
    if np.any(mdot <= 0):
        raise DomainError("anode mass flow must be positive")
    if np.any(thrust < 0):
        raise DomainError("thrust must be non-negative")
    out = (thrust * 1e-3) / (mdot * 1e-6 * G0)
    return float(out) if out.ndim == 0 else out


def eta_anode(thrust_mn, mdot_mg_s, power_w):
    """Anode efficiency T^2 / (2 mdot P), in SI internally, dimensionless out."""
    mdot = np.asarray(mdot_mg_s, dtype=float)
    power = np.asarray(power_w, dtype=float)
    if np.any(mdot <= 0):
        raise DomainError("anode mass flow must be positive")
    if np.any(power <= 0):
        raise DomainError("discharge power must be positive")
    thrust = np.asarray(thrust_mn, dtype=float) * 1e-3
    out = thrust**2 / (2.0 * mdot * 1e-6 * power)
    return float(out) if out.ndim == 0 else out


def channel_volume(d_mm, h_mm, l_mm):
    return np.pi * np.asarray(d_mm, dtype=float) * np.asarray(h_mm, dtype=float) * np.asarray(l_mm, dtype=float)


def derive_features(record: ThrusterRecord) -> DerivedFeatures:
    volume = float(channel_volume(record.d_mm, record.h_mm, record.l_mm))
    return DerivedFeatures(
        log10_power=math.log10(record.power_w),
        volume_mm3=volume,
        power_density=record.power_w / volume,
        eta_anode=eta_anode(record.thrust_mn, record.mdot_mg_s, record.power_w),
    )


def feature_matrix(raw: np.ndarray) -> np.ndarray:
    """Append derived columns to an ``(n, 8)`` raw matrix in ``RAW_FEATURES`` order.

    Vectorized counterpart of :func:`derive_features`; no validation, so
    non-physical rows (e.g. synthetic ones) yield nan/inf where undefined.
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    if raw.shape[1] != len(RAW_FEATURES):
        raise ShapeError(f"expected {len(RAW_FEATURES)} raw columns, got {raw.shape[1]}")
    p, _, d, h, l, mdot, thrust, _ = raw.T
    with np.errstate(divide="ignore", invalid="ignore"):
        volume = channel_volume(d, h, l)
        derived = np.column_stack(
            [np.log10(p), volume, p / volume, (thrust * 1e-3) ** 2 / (2.0 * mdot * 1e-6 * p)]
        )
    return np.hstack([raw, derived])


# -- scaling -----------------------------------------------------------------


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature min/max in real units."""

    feature_names: tuple[str, ...]
    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def __post_init__(self):
        if not len(self.feature_names) == len(self.mins) == len(self.maxs):
            raise ShapeError("scaler names/mins/maxs length mismatch")
        for name, lo, hi in zip(self.feature_names, self.mins, self.maxs):
            if hi < lo:
                raise ValidationError(f"scaler feature '{name}': max {hi} below min {lo}")

    @property
    def degenerate(self) -> np.ndarray:
        """Mask of features that were constant when fitted (min == max)."""
        return np.asarray(self.mins) == np.asarray(self.maxs)

    def index(self, feature: str) -> int:
        return self.feature_names.index(feature)

    def to_dict(self) -> dict:
        return {"feature_names": list(self.feature_names), "mins": list(self.mins), "maxs": list(self.maxs)}

    @classmethod
    def from_dict(cls, data: dict) -> "ScalerParams":
        return cls(tuple(data["feature_names"]), tuple(map(float, data["mins"])), tuple(map(float, data["maxs"])))

    def select(self, features: Sequence[str]) -> "ScalerParams":
        idx = [self.index(f) for f in features]
        return ScalerParams(
            tuple(features), tuple(self.mins[i] for i in idx), tuple(self.maxs[i] for i in idx)
        )


def fit_scaler(data: Dataset | np.ndarray, feature_names: Sequence[str] | None = None) -> ScalerParams:
    if isinstance(data, Dataset):
        matrix = data.matrix()
        feature_names = data.feature_names
    else:
        matrix = np.atleast_2d(np.asarray(data, dtype=float))
        if feature_names is None:
            feature_names = tuple(f"x{i}" for i in range(matrix.shape[1]))
    if matrix.shape[0] == 0:
        raise ValidationError("cannot fit a scaler on an empty dataset")
    if matrix.shape[1] != len(feature_names):
        raise ShapeError(f"{matrix.shape[1]} columns but {len(feature_names)} feature names")
    return ScalerParams(
        tuple(feature_names),
        tuple(float(v) for v in matrix.min(axis=0)),
        tuple(float(v) for v in matrix.max(axis=0)),
    )


def _as_matrix(data: Dataset | np.ndarray, width: int) -> np.ndarray:
    matrix = data.matrix() if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    if matrix.shape[-1] != width:
        raise ShapeError(f"expected {width} features, got {matrix.shape[-1]}")
    return matrix


def scale(data: Dataset | np.ndarray, scaler: ScalerParams) -> np.ndarray:
    """Min-max map into [0, 1]. Out-of-range values are not clamped.

    Degenerate (constant) features map to 0.5.
    """
    matrix = _as_matrix(data, len(scaler.mins))
    lo = np.asarray(scaler.mins)
    span = np.asarray(scaler.maxs) - lo
    degenerate = span == 0
    out = (matrix - lo) / np.where(degenerate, 1.0, span)
    out[..., degenerate] = 0.5
    return out


def unscale(matrix: np.ndarray, scaler: ScalerParams) -> np.ndarray:
    matrix = _as_matrix(matrix, len(scaler.mins))
    lo = np.asarray(scaler.mins)
    span = np.asarray(scaler.maxs) - lo
    return matrix * span + lo


def record_from_values(name: str, values: Sequence[float]) -> ThrusterRecord:
    return ThrusterRecord(name, *(float(v) for v in values))


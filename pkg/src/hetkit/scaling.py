"""Linear scaling laws for annular Hall thrusters.

Four through-origin relations link geometry, flow, power and thrust::

    h    = c_h * d
    mdot = c_m * h * d
    P    = c_p * U * d**2
    T    = c_t * mdot * sqrt(U)

Each coefficient is the least-squares slope sum(x*y) / sum(x*x) of its
relation. Given a (P, U) target the chain is inverted into a full design.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import Dataset, eta_anode, isp_anode
from .errors import DomainError, InsufficientDataError

Z95 = 1.96
MIN_RECORDS = 3

# relation key -> (coefficient attribute, regressor label, response label)
RELATIONS = {
    "h": ("c_h", "d", "h"),
    "m": ("c_m", "h*d", "mdot"),
    "p": ("c_p", "U*d^2", "P"),
    "t": ("c_t", "mdot*sqrt(U)", "T"),
}


@dataclass(frozen=True)
class ScalingCoefficients:
    c_h: float
    c_m: float
    c_p: float
    c_t: float
    # mean squared through-origin residual per relation, in response units squared
    residual_variance: dict[str, float]
    r_squared: dict[str, float]
    n_records: int

    def __post_init__(self):
        for key in ("c_h", "c_m", "c_p", "c_t"):
            if not getattr(self, key) > 0:
                raise DomainError(f"scaling coefficient {key} must be positive, got {getattr(self, key)!r}")
        if not self.c_h < 1:
            raise DomainError(f"c_h must be below 1 (h < d), got {self.c_h!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.c_h, self.c_m, self.c_p, self.c_t)

    def sigma(self, relation: str) -> float:
        return math.sqrt(self.residual_variance[relation])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScalingCoefficients":
        return cls(**data)


def relation_data(dataset: Dataset) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Regressor/response arrays for each relation, keyed as in ``RELATIONS``."""
    recs = dataset.records
    d = np.array([r.d_mm for r in recs])
    h = np.array([r.h_mm for r in recs])
    u = np.array([r.ud_v for r in recs])
    p = np.array([r.power_w for r in recs])
    mdot = np.array([r.mdot_mg_s for r in recs])
    thrust = np.array([r.thrust_mn for r in recs])
    return {
        "h": (d, h),
        "m": (h * d, mdot),
        "p": (u * d**2, p),
        "t": (mdot * np.sqrt(u), thrust),
    }


def through_origin_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.dot(x, y) / np.dot(x, x))


def _r_squared(y: np.ndarray, fitted: np.ndarray) -> float:
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - fitted) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")


def fit_scaling(dataset: Dataset) -> ScalingCoefficients:
    if len(dataset) < MIN_RECORDS:
        raise InsufficientDataError(
            f"scaling fit needs at least {MIN_RECORDS} records, got {len(dataset)}"
        )
    slopes, variance, r2 = {}, {}, {}
    for key, (x, y) in relation_data(dataset).items():
        slope = through_origin_slope(x, y)
        fitted = slope * x
        slopes[RELATIONS[key][0]] = slope
        variance[key] = float(np.mean((y - fitted) ** 2))
        r2[key] = _r_squared(y, fitted)
    return ScalingCoefficients(
        **slopes, residual_variance=variance, r_squared=r2, n_records=len(dataset)
    )


def prediction_band(residual_variance: float, x_new: float, slope: float = 1.0) -> tuple[float, float]:
    """Gaussian 95% band ``slope*x +/- 1.96*sigma`` around a through-origin prediction."""
    point = slope * x_new
    half = Z95 * math.sqrt(residual_variance)
    return point - half, point + half


@dataclass(frozen=True)
class DesignPoint:
    power_w: float
    ud_v: float
    d_mm: float
    h_mm: float
    mdot_mg_s: float
    thrust_mn: float
    isp_s: float
    eta_anode: float
    bands: dict[str, tuple[float, float]]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["bands"] = {k: list(v) for k, v in self.bands.items()}
        return out


def synthesize_design(power_w: float, ud_v: float, coeffs: ScalingCoefficients) -> DesignPoint:
    """Chain the scaling relations from a (power, voltage) target to a sized thruster.

    Bands: h, mdot and T take +/-1.96 sigma of their own relation; d is the
    inverse of the power relation evaluated at P +/- 1.96 sigma_P; Isp and
    efficiency are carried through the thrust band. Lower edges are clamped
    at zero.
    """
    if not (power_w > 0 and ud_v > 0):
        raise DomainError(f"power and voltage must be positive, got P={power_w!r}, U={ud_v!r}")
    d = math.sqrt(power_w / (coeffs.c_p * ud_v))
    h = coeffs.c_h * d
    mdot = coeffs.c_m * h * d
    thrust = coeffs.c_t * mdot * math.sqrt(ud_v)
    isp = isp_anode(thrust, mdot)
    eta = eta_anode(thrust, mdot, power_w)

    def clamp(band):
        return (max(band[0], 0.0), band[1])

    p_lo, p_hi = prediction_band(coeffs.residual_variance["p"], power_w)
    t_band = clamp(prediction_band(coeffs.residual_variance["t"], thrust))
    bands = {
        "d_mm": (
            math.sqrt(max(p_lo, 0.0) / (coeffs.c_p * ud_v)),
            math.sqrt(p_hi / (coeffs.c_p * ud_v)),
        ),
        "h_mm": clamp(prediction_band(coeffs.residual_variance["h"], h)),
        "mdot_mg_s": clamp(prediction_band(coeffs.residual_variance["m"], mdot)),
        "thrust_mn": t_band,
        "isp_s": (isp_anode(t_band[0], mdot), isp_anode(t_band[1], mdot)),
        "eta_anode": (eta_anode(t_band[0], mdot, power_w), eta_anode(t_band[1], mdot, power_w)),
    }
    return DesignPoint(power_w, ud_v, d, h, mdot, thrust, isp, eta, bands)

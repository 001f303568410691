"""Gradient-descent recovery of the scaling coefficients from the joint residual.

The four geometric/performance relations are fitted together by minimizing

    L(c) = sum_r w_r * mean_i (y_ri - c_r x_ri)^2,   w_r = 1 / var(y_r)

and the result is compared with the closed-form through-origin fit. Descent
runs on normalized coordinates theta_r = c_r / s_r with s_r = 1 / sqrt(2 w_r mean(x_r^2)),
which gives every relation unit curvature regardless of units or spread, so
any learning rate in (0, 2) converges.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import Dataset
from .errors import DomainError, InsufficientDataError, TrainingDivergedError
from .scaling import RELATIONS, fit_scaling, relation_data

KEYS = tuple(RELATIONS)  # h, m, p, t
COEFF_NAMES = tuple(RELATIONS[k][0] for k in KEYS)


@dataclass(frozen=True)
class JointData:
    x: tuple[np.ndarray, ...]
    y: tuple[np.ndarray, ...]
    weights: np.ndarray

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "JointData":
        rel = relation_data(dataset)
        xs = tuple(rel[k][0] for k in KEYS)
        ys = tuple(rel[k][1] for k in KEYS)
        weights = []
        for y in ys:
            var = float(np.var(y))
            # A constant left-hand side has no spread to normalize by; fall back to its mean square.
            weights.append(1.0 / var if var > 0 else 1.0 / float(np.mean(y**2)))
        return cls(xs, ys, np.array(weights))

    def scales(self) -> np.ndarray:
        return np.array([1.0 / np.sqrt(2.0 * w * np.mean(x**2)) for x, w in zip(self.x, self.weights)])


def relation_losses(coeffs: np.ndarray, data: JointData) -> np.ndarray:
    """Weighted mean squared residual of each relation."""
    return np.array(
        [w * np.mean((y - c * x) ** 2) for c, x, y, w in zip(coeffs, data.x, data.y, data.weights)]
    )


def joint_loss(coeffs: np.ndarray, data: JointData) -> float:
    return float(relation_losses(np.asarray(coeffs, dtype=float), data).sum())


def joint_grad(coeffs: np.ndarray, data: JointData) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    return np.array(
        [-2.0 * w * np.mean(x * (y - c * x)) for c, x, y, w in zip(coeffs, data.x, data.y, data.weights)]
    )


@dataclass
class PhysFitReport:
    coefficients: dict[str, float]
    least_squares: dict[str, float]
    divergence_pct: dict[str, float]
    residual_rms: dict[str, float]
    loss_history: list[float]
    epochs_run: int
    converged: bool
    grad_norm: float
    seed: int

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["final_loss"] = self.final_loss
        out["loss_history"] = self.loss_history[:: max(1, len(self.loss_history) // 100)]
        return out


def fit_coefficients_gd(
    dataset: Dataset,
    lr: float = 0.5,
    epochs: int = 2000,
    seed: int = 0,
    tol: float = 1e-10,
    init_factor: float = 1.1,
) -> PhysFitReport:
    """Full-batch gradient descent from the least-squares coefficients times ``init_factor``.

    ``converged`` means the gradient norm in normalized coordinates fell below ``tol``.
    The fit is deterministic; ``seed`` is carried into the report for the run record.
    """
    if len(dataset) < 3:
        raise InsufficientDataError(f"coefficient fit needs at least 3 records, got {len(dataset)}")
    if lr < 0 or not np.isfinite(lr):
        raise DomainError(f"learning rate must be finite and >= 0, got {lr}")
    if epochs < 0:
        raise DomainError(f"epochs must be >= 0, got {epochs}")

    ls = np.array(fit_scaling(dataset).as_tuple())
    data = JointData.from_dataset(dataset)
    scale = data.scales()
    theta = init_factor * ls / scale

    history = [joint_loss(theta * scale, data)]
    grad = joint_grad(theta * scale, data) * scale
    epochs_run = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, epochs + 1):
            if np.linalg.norm(grad) < tol:
                break
            theta = theta - lr * grad
            loss = joint_loss(theta * scale, data)
            if not np.isfinite(loss) or loss > 1e6 * (history[0] + 1.0):
                raise TrainingDivergedError(epoch, loss, "coefficient fit")
            history.append(loss)
            grad = joint_grad(theta * scale, data) * scale
            epochs_run = epoch

    coeffs = theta * scale
    if np.any(coeffs <= 0):
        raise DomainError(f"gradient descent produced non-positive coefficients {coeffs.tolist()}")
    grad_norm = float(np.linalg.norm(grad))
    residual_rms = [float(np.sqrt(np.mean((y - c * x) ** 2))) for c, x, y in zip(coeffs, data.x, data.y)]
    return PhysFitReport(
        coefficients=dict(zip(COEFF_NAMES, coeffs.tolist())),
        least_squares=dict(zip(COEFF_NAMES, ls.tolist())),
        divergence_pct=dict(zip(COEFF_NAMES, (100 * np.abs(coeffs - ls) / ls).tolist())),
        residual_rms=dict(zip(KEYS, residual_rms)),
        loss_history=history,
        epochs_run=epochs_run,
        converged=grad_norm < tol,
        grad_norm=grad_norm,
        seed=seed,
    )

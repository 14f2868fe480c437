"""Maps from training loss to downstream error rates.

The raw map is a shifted power law K*(loss - shift_x)^kappa + M. Benchmarks
with a guessing baseline get a soft minimum against that chance floor, so the
curve saturates smoothly instead of crossing it. The soft minimum used here is
the temperature form -(1/alpha)*log(exp(-alpha*x) + exp(-alpha*y)): its value
always lies within ln(2)/alpha below the hard minimum, approaching it as the
arguments separate.

Fitting is ordinary least squares in raw error space. Log-space residuals are
the wrong tool here: near the chance floor the quantity error - floor swings
through zero and its log is meaningless.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .core import NumericalError, ValidationError


@dataclass(frozen=True)
class ErrorMap:
    """Fitted loss-to-error curve, optionally saturating at a chance floor."""

    K: float
    kappa: float
    M: float
    shift_x: float
    chance_floor: float | None = None
    softmin_alpha: float = 10.0
    degenerate_plateau: bool = False

    def __post_init__(self):
        if not (self.K > 0):
            raise ValidationError(f"K must be positive, got {self.K!r}")
        if not (self.kappa > 0):
            raise ValidationError(f"kappa must be positive, got {self.kappa!r}")
        if not np.isfinite(self.M):
            raise ValidationError(f"M must be finite, got {self.M!r}")
        if not (self.shift_x >= 0):
            raise ValidationError(f"shift_x must be nonnegative, got {self.shift_x!r}")
        if self.chance_floor is not None and not (0 < self.chance_floor < 1):
            raise ValidationError(f"chance_floor must lie in (0, 1), got {self.chance_floor!r}")
        if not (self.softmin_alpha > 0):
            raise ValidationError(f"softmin_alpha must be positive, got {self.softmin_alpha!r}")


def softmin(a, b, alpha: float):
    """-(1/alpha) * log(exp(-alpha*a) + exp(-alpha*b)), computed stably.

    Equals min(a, b) - log1p(exp(-alpha*|a - b|))/alpha, so the result sits in
    [min - ln(2)/alpha, min): ln(2)/alpha below the hard minimum at a tie,
    converging to it as |a - b| grows.
    """
    lo = np.minimum(a, b)
    return lo - np.log1p(np.exp(-alpha * np.abs(a - b))) / alpha


def predict_error(error_map: ErrorMap, train_loss):
    """Evaluate the map at one or many training losses."""
    t = np.asarray(train_loss, dtype=float)
    scalar = np.isscalar(train_loss)
    if np.any(t <= error_map.shift_x):
        raise ValidationError(f"train_loss must exceed the map's shift_x={error_map.shift_x}")
    raw = error_map.K * (t - error_map.shift_x) ** error_map.kappa + error_map.M
    if error_map.chance_floor is not None:
        raw = softmin(error_map.chance_floor, raw, error_map.softmin_alpha)
    if not np.all(np.isfinite(raw)):
        raise NumericalError("error map evaluated to a non-finite value")
    return float(raw) if scalar else raw


def fit_error_map(
    points: list[tuple[float, float]],
    shift_x: float,
    use_floor: bool,
    softmin_alpha: float = 10.0,
) -> ErrorMap:
    """Fit the map to (train_loss, error) points in raw error space.

    Needs 4 points without the floor, 5 with it; errors must lie strictly in
    (0, 1). Initialization: M starts at 0.9 * min(error), (K, kappa) from the
    log-log fit at that fixed M, and the floor at max(error).

    An all-flat error plateau cannot constrain the power-law branch; with a
    floor requested the plateau value is returned as the floor, marked
    degenerate, and a warning is emitted.
    """
    t = np.array([p[0] for p in points], dtype=float)
    err = np.array([p[1] for p in points], dtype=float)
    needed = 5 if use_floor else 4
    if len(t) < needed:
        raise ValidationError(f"need at least {needed} points, got {len(t)}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(err))):
        raise ValidationError("points must be finite")
    if np.any((err <= 0) | (err >= 1)):
        raise ValidationError("errors must lie strictly in (0, 1)")
    if not (shift_x >= 0):
        raise ValidationError(f"shift_x must be nonnegative, got {shift_x!r}")
    if np.any(t <= shift_x):
        raise ValidationError(f"every train_loss must exceed shift_x={shift_x}")

    if np.all(err == err[0]):
        if not use_floor:
            raise ValidationError("errors have zero variance; a floor-free map cannot fit a plateau")
        warnings.warn(
            "all errors sit at one value; returning it as the chance floor with "
            "an unconstrained power-law branch",
            stacklevel=2,
        )
        # The plateau pins only the floor. Saturation keeps the unconstrained
        # branch irrelevant at the fitted points: raw >> floor there.
        return ErrorMap(
            K=1.0, kappa=1.0, M=1.0, shift_x=float(shift_x),
            chance_floor=float(err[0]), softmin_alpha=softmin_alpha,
            degenerate_plateau=True,
        )

    m0 = 0.9 * err.min()
    slope, intercept = np.polyfit(np.log(t - shift_x), np.log(err - m0), 1)
    k0 = float(np.exp(np.clip(intercept, -300, 300)))
    kappa0 = max(float(slope), 1e-3)
    u = t - shift_x
    ln_u = np.log(u)

    if use_floor:
        floor0 = min(float(err.max()), 1.0 - 1e-9)
        x0 = [k0, kappa0, m0, floor0]
        lower = [1e-12, 1e-12, -np.inf, 1e-9]
        upper = [np.inf, np.inf, np.inf, 1.0 - 1e-9]
    else:
        x0 = [k0, kappa0, m0]
        lower = [1e-12, 1e-12, -np.inf]
        upper = [np.inf, np.inf, np.inf]

    def model(theta):
        raw = theta[0] * u ** theta[1] + theta[2]
        if use_floor:
            return softmin(theta[3], raw, softmin_alpha)
        return raw

    def residuals(theta):
        return model(theta) - err

    def jacobian(theta):
        u_k = u ** theta[1]
        d_raw = np.stack([u_k, theta[0] * u_k * ln_u, np.ones_like(u)], axis=-1)
        if not use_floor:
            return d_raw
        raw = theta[0] * u_k + theta[2]
        # soft-min gates each branch by a logistic in the gap
        gate_raw = 1.0 / (1.0 + np.exp(-softmin_alpha * (theta[3] - raw)))
        return np.concatenate(
            [d_raw * gate_raw[:, None], (1.0 - gate_raw)[:, None]], axis=-1
        )

    result = least_squares(residuals, x0=x0, jac=jacobian, bounds=(lower, upper), method="trf")
    if not (result.success and np.all(np.isfinite(result.x))):
        raise NumericalError("error-map fit did not converge")
    theta = result.x
    return ErrorMap(
        K=float(theta[0]),
        kappa=float(theta[1]),
        M=float(theta[2]),
        shift_x=float(shift_x),
        chance_floor=float(theta[3]) if use_floor else None,
        softmin_alpha=softmin_alpha,
    )

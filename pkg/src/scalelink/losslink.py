"""Shifted power-law relationships between losses on different distributions.

A link y = K*(x - shift_x)^kappa + shift_y is linear on a shifted log-log
scale, so the fixed-shift fit is closed-form least squares there. When the
target shift is unknown it is fit as a free parameter in raw loss space,
seeded from the fixed-shift solution.

Links act on laws: translating a nested-form law through a link gives another
nested-form law, and links chain end to end when their shifts agree.
"""

from dataclasses import replace

import numpy as np
from scipy.optimize import least_squares

from .core import (
    DatasetId,
    LinkKind,
    LossLink,
    MetricId,
    NumericalError,
    PairedPoint,
    RunRecord,
    ScalingLaw,
    ValidationError,
)
from .lawfit import FitConfig, fit_law


class _Free:
    def __repr__(self):
        return "FREE"


# Sentinel: pass as shift_y to fit it as a free parameter.
FREE = _Free()

Endpoint = tuple[DatasetId, MetricId]


def fit_link(
    pairs: list[PairedPoint],
    shift_x: float,
    shift_y,
    kind: LinkKind,
    source: Endpoint | None = None,
    target: Endpoint | None = None,
) -> LossLink:
    """Fit a link to paired losses observed at matched (N, D).

    shift_y is either a known constant or FREE. Fixed-shift fits need at
    least 3 pairs, free-shift fits at least 4. Pairs at or below shift_x are
    an error, never silently dropped: dropping them would bias the slope.
    """
    x = np.array([p.loss_x for p in pairs], dtype=float)
    y = np.array([p.loss_y for p in pairs], dtype=float)
    return fit_link_arrays(x, y, shift_x, shift_y, kind, source=source, target=target)


def fit_link_arrays(
    loss_x,
    loss_y,
    shift_x: float,
    shift_y,
    kind: LinkKind,
    source: Endpoint | None = None,
    target: Endpoint | None = None,
) -> LossLink:
    """fit_link on bare arrays; the record-free entry point used by estimators."""
    x = np.asarray(loss_x, dtype=float)
    y = np.asarray(loss_y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("loss_x and loss_y must be 1-d arrays of equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("paired losses must be finite")
    if not (shift_x >= 0):
        raise ValidationError(f"shift_x must be nonnegative, got {shift_x!r}")
    free = isinstance(shift_y, _Free)
    needed = 4 if free else 3
    if len(x) < needed:
        raise ValidationError(f"need at least {needed} pairs, got {len(x)}")
    if np.any(x <= shift_x):
        raise ValidationError(
            f"every loss_x must exceed shift_x={shift_x}; offending minimum {x.min()}"
        )
    if len(np.unique(x)) < 2:
        raise ValidationError("all loss_x identical; slope is undetermined")

    if free:
        k, kappa, sy = _fit_free_shift(x, y, shift_x)
    else:
        sy = float(shift_y)
        if not (sy >= 0):
            raise ValidationError(f"shift_y must be nonnegative, got {shift_y!r}")
        if np.any(y <= sy):
            raise ValidationError(
                f"every loss_y must exceed the fixed shift_y={sy}; offending minimum {y.min()}"
            )
        k, kappa = _ols_log_log(x, y, shift_x, sy)

    return LossLink(
        kind=kind,
        K=k,
        kappa=kappa,
        shift_x=float(shift_x),
        shift_y=sy,
        shift_y_fitted_free=free,
        source=source,
        target=target,
    )


def _ols_log_log(x, y, shift_x, shift_y):
    """Closed-form slope and level on the shifted log-log scale."""
    slope, intercept = np.polyfit(np.log(x - shift_x), np.log(y - shift_y), 1)
    if not (np.isfinite(slope) and np.isfinite(intercept)):
        raise NumericalError("log-log regression produced non-finite coefficients")
    return float(np.exp(intercept)), float(slope)


def _fit_free_shift(x, y, shift_x):
    """Least squares over (K, kappa, shift_y) in raw loss space.

    Initialized from the fixed-shift fit with shift_y at 0.9 * min(loss_y);
    shift_y stays in [0, min(loss_y)) so the power law remains real on the data.
    """
    y_min = y.min()
    sy0 = 0.9 * y_min
    k0, kappa0 = _ols_log_log(x, y, shift_x, sy0)
    u = x - shift_x
    ln_u = np.log(u)

    def residuals(theta):
        k, kappa, sy = theta
        return k * u**kappa + sy - y

    def jacobian(theta):
        k, kappa, _ = theta
        u_k = u**kappa
        return np.stack([u_k, k * u_k * ln_u, np.ones_like(u)], axis=-1)

    sy_hi = np.nextafter(y_min, 0.0)
    result = least_squares(
        residuals,
        x0=[k0, kappa0, sy0],
        jac=jacobian,
        bounds=([1e-12, 1e-12, 0.0], [np.inf, np.inf, sy_hi]),
        method="trf",
    )
    if not (result.success and np.all(np.isfinite(result.x))):
        raise NumericalError("free-shift link fit did not converge")
    k, kappa, sy = result.x
    return float(k), float(kappa), float(sy)


def apply_link(link: LossLink, loss_x):
    """Map a source loss through the link; scalar in, float out."""
    x = np.asarray(loss_x, dtype=float)
    scalar = np.isscalar(loss_x)
    if np.any(x <= link.shift_x):
        raise ValidationError(f"loss_x must exceed the link's shift_x={link.shift_x}")
    val = link.K * (x - link.shift_x) ** link.kappa + link.shift_y
    if not np.all(np.isfinite(val)):
        raise NumericalError("link evaluated to a non-finite value")
    return float(val) if scalar else val


def identity_link(
    shift: float = 0.0,
    kind: LinkKind = "general",
    source: Endpoint | None = None,
    target: Endpoint | None = None,
) -> LossLink:
    """The do-nothing link y = x, with both shifts at the same level."""
    return LossLink(
        kind=kind, K=1.0, kappa=1.0, shift_x=shift, shift_y=shift,
        source=source, target=target,
    )


def translate_law(law: ScalingLaw, link: LossLink) -> ScalingLaw:
    """Push a nested-form law through a link, yielding the target-side law.

    The parameter maps are alpha' = kappa*alpha, beta' = kappa*beta,
    A' = K^(1/(kappa*alpha)) * A, B' = K^(1/(kappa*beta)) * B, E' = shift_y.
    With these, predicting then linking equals translating then predicting,
    exactly; the link must be anchored at the law's own floor (shift_x = E)
    for that identity to hold.
    """
    if law.form != "nested":
        raise ValidationError(f"translation requires the nested form, got {law.form!r}")
    if abs(link.shift_x - law.E) > 1e-9:
        raise ValidationError(
            f"link shift_x={link.shift_x} does not match the law's floor E={law.E}"
        )
    ln_k = np.log(link.K)
    alpha1 = link.kappa * law.alpha
    beta1 = link.kappa * law.beta
    return ScalingLaw(
        form="nested",
        E=link.shift_y,
        A=float(np.exp(ln_k / alpha1 + np.log(law.A))),
        B=float(np.exp(ln_k / beta1 + np.log(law.B))),
        alpha=alpha1,
        beta=beta1,
        fit_meta=None,
    )


def compose_links(first: LossLink, second: LossLink) -> LossLink:
    """Chain two links into one equivalent link.

    Valid only when the first link's target is the second's source and their
    shifts agree there; no silent re-anchoring.
    """
    if first.target != second.source:
        raise ValidationError(
            f"cannot compose: first.target={first.target!r} != second.source={second.source!r}"
        )
    if abs(second.shift_x - first.shift_y) > 1e-9:
        raise ValidationError(
            f"cannot compose: second.shift_x={second.shift_x} does not meet "
            f"first.shift_y={first.shift_y}"
        )
    return LossLink(
        kind="general",
        K=float(second.K * first.K**second.kappa),
        kappa=float(first.kappa * second.kappa),
        shift_x=first.shift_x,
        shift_y=second.shift_y,
        source=first.source,
        target=second.target,
    )


def estimate_conditional_entropy(records: list[RunRecord], cfg: FitConfig | None = None) -> float:
    """Irreducible loss of one distribution's metric under another's training data.

    This is the floor E of the nested-form law fit to the given records; the
    records are evaluations of a single metric, keyed by the evaluated model's
    training (N, D).
    """
    return fit_law(records, "nested", cfg).E


def with_endpoints(link: LossLink, source: Endpoint | None, target: Endpoint | None) -> LossLink:
    """A copy of the link with its endpoints set; fit parameters untouched."""
    return replace(link, source=source, target=target)

"""Fitting and evaluating parametric loss surfaces L(N, D).

The fit minimizes a Huber loss on log residuals over a grid of starting
points, refining every start with damped second-order descent and keeping the
best. Parameters travel through the optimizer as (E, log A, log B, alpha,
beta): A and B are positive by construction, E is clamped at zero by
projection. The winner is selected by objective value; near-ties go to the
flattest exponents (lowest alpha + beta) so the result is deterministic no
matter how starts are scheduled.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from ._optim import clipped_exp, huber, huber_weights, refine_starts
from .core import (
    FitMeta,
    LawForm,
    NumericalError,
    RunRecord,
    ScalingLaw,
    ValidationError,
)

_LN10 = np.log(10.0)

# Projection bounds for (E, ln A, ln B, alpha, beta).
_LAW_LOWER = np.array([0.0, -60.0, -60.0, 1e-4, 1e-4])
_LAW_UPPER = np.array([np.inf, 90.0, 90.0, 2.9999, 2.9999])


@dataclass(frozen=True)
class StartGrid:
    """Initialization values, one list per parameter; the fit tries the full product."""

    e: tuple[float, ...] = (0.25, 0.5, 1.0, 1.5, 2.0, 2.5)
    log10_a: tuple[float, ...] = (4.0, 6.0, 8.0, 10.0)
    log10_b: tuple[float, ...] = (6.0, 8.0, 10.0, 12.0)
    alpha: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)
    beta: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)

    def __post_init__(self):
        for name in ("e", "log10_a", "log10_b", "alpha", "beta"):
            if len(getattr(self, name)) == 0:
                raise ValidationError(f"start grid for {name} must be non-empty")

    @property
    def n_starts(self) -> int:
        return (
            len(self.e) * len(self.log10_a) * len(self.log10_b) * len(self.alpha) * len(self.beta)
        )


@dataclass(frozen=True)
class FitConfig:
    huber_delta: float = 1e-3
    grid: StartGrid = field(default_factory=StartGrid)
    max_iters: int = 500
    convergence_tol: float = 1e-10

    def __post_init__(self):
        if not (self.huber_delta > 0):
            raise ValidationError("huber_delta must be positive")
        if not (isinstance(self.max_iters, int) and self.max_iters > 0):
            raise ValidationError("max_iters must be a positive integer")
        if not (self.convergence_tol > 0):
            raise ValidationError("convergence_tol must be positive")


def _nested_model(ln_n, ln_d):
    """Batched L = E + ((A/N)^(a/b) + B/D)^b with its raw-space jacobian.

    All powers are taken through clipped exponentials of log-space sums, so a
    wild start produces a huge finite objective instead of an overflow.
    """

    def model(params, with_jac):
        e = params[:, 0:1]
        ln_a = params[:, 1:2]
        ln_b = params[:, 2:3]
        alpha = params[:, 3:4]
        beta = params[:, 4:5]

        lt1 = (alpha / beta) * (ln_a - ln_n)
        lt2 = ln_b - ln_d
        ln_s = np.logaddexp(lt1, lt2)
        s_beta = clipped_exp(beta * ln_s)
        pred = e + s_beta
        if not with_jac:
            return pred, None

        # t1 * S^(beta-1), kept in log space: the factors can individually
        # overflow even when the product is tame.
        g = clipped_exp(lt1 + (beta - 1.0) * ln_s)
        jac = np.stack(
            [
                np.ones_like(pred),
                alpha * g,
                beta * clipped_exp(lt2 + (beta - 1.0) * ln_s),
                (ln_a - ln_n) * g,
                s_beta * ln_s - (alpha / beta) * (ln_a - ln_n) * g,
            ],
            axis=-1,
        )
        return pred, jac

    return model


def _additive_model(ln_n, ln_d):
    """Batched L = E + A/N^a + B/D^b with its raw-space jacobian."""

    def model(params, with_jac):
        e = params[:, 0:1]
        u1 = clipped_exp(params[:, 1:2] - params[:, 3:4] * ln_n)
        u2 = clipped_exp(params[:, 2:3] - params[:, 4:5] * ln_d)
        pred = e + u1 + u2
        if not with_jac:
            return pred, None
        jac = np.stack(
            [np.ones_like(pred), u1, u2, -u1 * ln_n, -u2 * ln_d],
            axis=-1,
        )
        return pred, jac

    return model


def _model_for(form: LawForm, ln_n, ln_d):
    if form == "nested":
        return _nested_model(ln_n, ln_d)
    if form == "additive":
        return _additive_model(ln_n, ln_d)
    raise ValidationError(f"unknown law form {form!r}")


def law_objective(params, n_params, n_tokens, losses, form: LawForm, huber_delta: float = 1e-3):
    """Fit objective and its analytic gradient at one parameter point.

    params is (E, log A, log B, alpha, beta) with natural logs. Returns
    (value, gradient) where value = sum_i Huber(log pred_i - log loss_i).
    """
    p = np.asarray(params, dtype=float)
    if p.shape != (5,):
        raise ValidationError(f"expected 5 parameters (E, log A, log B, alpha, beta), got shape {p.shape}")
    ln_n, ln_d, y = _as_log_points(n_params, n_tokens, losses)
    model = _model_for(form, ln_n, ln_d)
    pred, jac = model(p[None, :], with_jac=True)
    r = np.log(pred[0]) - np.log(y)
    value = float(huber(r, huber_delta).sum())
    psi = huber_weights(r, huber_delta) * r
    grad = psi @ (jac[0] / pred[0][:, None])
    return value, grad


def fit_law(records: list[RunRecord], form: LawForm, cfg: FitConfig | None = None) -> ScalingLaw:
    """Fit a loss surface to run records from one (dataset, metric).

    Requires at least 6 records spanning at least 2 distinct N and 2 distinct
    D; mixed datasets or metrics are rejected rather than silently pooled.
    """
    if len(records) < 6:
        raise ValidationError(f"need at least 6 records to fit a law, got {len(records)}")
    keys = {(r.train_dataset, r.metric) for r in records}
    if len(keys) > 1:
        raise ValidationError(f"records mix (dataset, metric) keys: {sorted(k[0].name for k in keys)}")
    n = np.array([r.n_params for r in records], dtype=float)
    d = np.array([r.n_tokens for r in records], dtype=float)
    y = np.array([r.loss for r in records], dtype=float)
    return fit_law_points(n, d, y, form, cfg)


def fit_law_points(n_params, d_tokens, losses, form: LawForm, cfg: FitConfig | None = None) -> ScalingLaw:
    """fit_law on bare arrays; the record-free entry point used by estimators."""
    cfg = cfg or FitConfig()
    ln_n, ln_d, y = _as_log_points(n_params, d_tokens, losses)
    if len(np.unique(ln_n)) < 2 or len(np.unique(ln_d)) < 2:
        raise ValidationError("degenerate grid: need at least 2 distinct N and 2 distinct D")

    g = cfg.grid
    starts = np.array(
        list(
            itertools.product(
                g.e,
                (a * _LN10 for a in g.log10_a),
                (b * _LN10 for b in g.log10_b),
                g.alpha,
                g.beta,
            )
        ),
        dtype=float,
    )
    model = _model_for(form, ln_n, ln_d)
    params, obj = refine_starts(
        model,
        y,
        starts,
        _LAW_LOWER,
        _LAW_UPPER,
        delta=cfg.huber_delta,
        max_iters=cfg.max_iters,
        tol=cfg.convergence_tol,
    )
    best = _select_winner(params, obj)
    e, ln_a, ln_b, alpha, beta = params[best]
    return ScalingLaw(
        form=form,
        E=float(e),
        A=float(np.exp(ln_a)),
        B=float(np.exp(ln_b)),
        alpha=float(alpha),
        beta=float(beta),
        fit_meta=FitMeta(objective=float(obj[best]), n_points=len(y), n_starts=len(starts)),
    )


def _select_winner(params, obj) -> int:
    """Lowest objective wins; near-ties resolved by lowest alpha + beta, then index."""
    if not np.isfinite(obj).any():
        raise NumericalError("optimizer produced a non-finite objective on every start")
    best_obj = obj.min()
    tied = np.flatnonzero(obj <= best_obj + max(1e-12, 1e-9 * abs(best_obj)))
    flatness = params[tied, 3] + params[tied, 4]
    return int(tied[np.argmin(flatness)])


def predict_loss(law: ScalingLaw, n_params, n_tokens):
    """Evaluate the loss surface; scalars in give a float back, arrays give arrays.

    Evaluation runs in log space so extreme N, D cannot overflow the inner
    power; a non-finite result is an error, never a silent inf.
    """
    scalar = np.isscalar(n_params) and np.isscalar(n_tokens)
    n = np.asarray(n_params, dtype=float)
    d = np.asarray(n_tokens, dtype=float)
    if not (np.all(n > 0) and np.all(d > 0)):
        raise ValidationError("n_params and n_tokens must be positive")
    ln_n = np.log(n)
    ln_d = np.log(d)
    with np.errstate(over="ignore"):
        if law.form == "nested":
            ln_s = np.logaddexp(
                (law.alpha / law.beta) * (np.log(law.A) - ln_n), np.log(law.B) - ln_d
            )
            val = law.E + np.exp(law.beta * ln_s)
        else:
            val = (
                law.E
                + np.exp(np.log(law.A) - law.alpha * ln_n)
                + np.exp(np.log(law.B) - law.beta * ln_d)
            )
    if not np.all(np.isfinite(val)):
        raise NumericalError("loss surface evaluated to a non-finite value")
    return float(val) if scalar else val


def optimal_model_size(law: ScalingLaw, flop_budget) -> float:
    """Compute-optimal N for a budget C under C = 6*N*D: (G*C/6)^a.

    Here a = beta/(alpha+beta) and G = alpha*A^(alpha/beta)/(beta*B). Only the
    nested form admits this closed form.
    """
    if law.form != "nested":
        raise ValidationError(f"optimal_model_size requires the nested form, got {law.form!r}")
    c = np.asarray(flop_budget, dtype=float)
    scalar = np.isscalar(flop_budget)
    if not np.all(c > 0):
        raise ValidationError("flop_budget must be positive")
    a = law.beta / (law.alpha + law.beta)
    ln_g = (
        np.log(law.alpha)
        - np.log(law.beta)
        + (law.alpha / law.beta) * np.log(law.A)
        - np.log(law.B)
    )
    val = np.exp(a * (ln_g + np.log(c) - np.log(6.0)))
    if not np.all(np.isfinite(val)):
        raise NumericalError("optimal model size evaluated to a non-finite value")
    return float(val) if scalar else val


def r_squared(predictor, records: list[RunRecord]) -> float:
    """Coefficient of determination in raw loss space.

    predictor is a ScalingLaw or any callable (n_params, n_tokens) -> loss.
    """
    if len(records) < 2:
        raise ValidationError("r_squared needs at least 2 records")
    y = np.array([r.loss for r in records], dtype=float)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValidationError("r_squared undefined: zero variance in target losses")
    n = np.array([r.n_params for r in records], dtype=float)
    d = np.array([r.n_tokens for r in records], dtype=float)
    if isinstance(predictor, ScalingLaw):
        pred = predict_loss(predictor, n, d)
    else:
        pred = np.asarray([predictor(ni, di) for ni, di in zip(n, d)], dtype=float)
    if not np.all(np.isfinite(pred)):
        raise NumericalError("predictor produced non-finite values")
    ss_res = float(((pred - y) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class DecayCurve:
    """Fitted compute-to-loss curve L = E + F * C^(-gamma)."""

    E: float
    F: float
    gamma: float
    fit_meta: FitMeta | None = None

    def __post_init__(self):
        if not (self.E >= 0):
            raise ValidationError("E must be nonnegative")
        if not (self.F > 0):
            raise ValidationError("F must be positive")
        if not (0 < self.gamma < 3):
            raise ValidationError("gamma must lie in (0, 3)")


def fit_decay_curve(flops, losses, cfg: FitConfig | None = None) -> DecayCurve:
    """Fit L = E + F * C^(-gamma) to (compute, loss) points.

    Needs at least 4 distinct budgets. Starts pair floor guesses below the
    observed minimum with the alpha grid as decay guesses; each start's log F
    is then the closed-form log-residual mean, so only (E, gamma) need guessing.
    """
    cfg = cfg or FitConfig()
    c = np.asarray(flops, dtype=float)
    y = np.asarray(losses, dtype=float)
    if c.shape != y.shape or c.ndim != 1:
        raise ValidationError("flops and losses must be 1-d arrays of equal length")
    if not (np.all(np.isfinite(c)) and np.all(c > 0) and np.all(np.isfinite(y)) and np.all(y > 0)):
        raise ValidationError("flops and losses must be finite and positive")
    if len(np.unique(c)) < 4:
        raise ValidationError("need at least 4 distinct compute budgets")

    ln_c = np.log(c)
    y_min = y.min()
    starts = []
    for e0 in (0.0, 0.5 * y_min, 0.9 * y_min, 0.99 * y_min):
        resid = np.log(np.maximum(y - e0, 1e-12))
        for gamma0 in cfg.grid.alpha:
            starts.append([e0, float(np.mean(resid + gamma0 * ln_c)), gamma0])
    starts = np.array(starts, dtype=float)

    def model(params, with_jac):
        e = params[:, 0:1]
        u = clipped_exp(params[:, 1:2] - params[:, 2:3] * ln_c)
        pred = e + u
        if not with_jac:
            return pred, None
        return pred, np.stack([np.ones_like(pred), u, -u * ln_c], axis=-1)

    lower = np.array([0.0, -60.0, 1e-4])
    upper = np.array([np.inf, 200.0, 2.9999])
    params, obj = refine_starts(
        model, y, starts, lower, upper,
        delta=cfg.huber_delta, max_iters=cfg.max_iters, tol=cfg.convergence_tol,
    )
    if not np.isfinite(obj).any():
        raise NumericalError("optimizer produced a non-finite objective on every start")
    best = int(np.argmin(obj))
    e, ln_f, gamma = params[best]
    return DecayCurve(
        E=float(e),
        F=float(np.exp(ln_f)),
        gamma=float(gamma),
        fit_meta=FitMeta(objective=float(obj[best]), n_points=len(y), n_starts=len(starts)),
    )


def predict_decay(curve: DecayCurve, flops):
    """Evaluate a compute-to-loss curve at one or many budgets."""
    c = np.asarray(flops, dtype=float)
    scalar = np.isscalar(flops)
    if not np.all(c > 0):
        raise ValidationError("flops must be positive")
    val = curve.E + np.exp(np.log(curve.F) - curve.gamma * np.log(c))
    if not np.all(np.isfinite(val)):
        raise NumericalError("decay curve evaluated to a non-finite value")
    return float(val) if scalar else val


def _as_log_points(n_params, d_tokens, losses):
    n = np.asarray(n_params, dtype=float)
    d = np.asarray(d_tokens, dtype=float)
    y = np.asarray(losses, dtype=float)
    if not (n.shape == d.shape == y.shape) or n.ndim != 1:
        raise ValidationError("n_params, n_tokens, losses must be 1-d arrays of equal length")
    if not (np.all(np.isfinite(n)) and np.all(np.isfinite(d)) and np.all(np.isfinite(y))):
        raise ValidationError("inputs must be finite")
    if not (np.all(n > 0) and np.all(d > 0)):
        raise ValidationError("n_params and n_tokens must be positive")
    if not np.all(y > 0):
        raise ValidationError("losses must be positive")
    return np.log(n), np.log(d), y

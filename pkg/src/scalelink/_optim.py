"""Batched robust curve fitting.

Implements Huber-loss Levenberg-Marquardt on log residuals, refining every
grid start simultaneously as one vectorized batch. Residuals are
log(prediction) - log(target), so the loss is scale-free and multiplicative
noise becomes symmetric.

The Huber influence is folded in by iteratively reweighted least squares:
a residual r gets weight 1 inside the quadratic region and delta/|r| outside,
which makes psi(r) = w*r exactly the Huber influence function.
"""

import numpy as np

# Exponents are clipped so exp() stays finite; 700 < log(float64 max).
EXP_MAX = 700.0
EXP_MIN = -745.0

_LAMBDA_INIT = 1e-3
_LAMBDA_CAP = 1e12
_LAMBDA_UP = 10.0
_LAMBDA_DOWN = 3.0


def clipped_exp(x):
    return np.exp(np.clip(x, EXP_MIN, EXP_MAX))


def huber(r, delta):
    """Elementwise Huber loss: quadratic inside |r| <= delta, linear outside."""
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


def huber_weights(r, delta):
    """IRLS weights w such that w*r is the Huber influence function."""
    a = np.abs(r)
    with np.errstate(divide="ignore"):
        return np.where(a <= delta, 1.0, delta / np.maximum(a, 1e-300))


def _batch_objective(log_pred, log_y, delta):
    """Sum of Huber losses per batch row; non-finite rows get +inf."""
    r = log_pred - log_y
    obj = huber(r, delta).sum(axis=-1)
    return np.where(np.isfinite(obj), obj, np.inf)


def _solve_damped(H, lam, grad):
    """Solve (H + lam*diag(H) + eps*I) step = -grad for each batch row.

    Rows whose system is singular get a NaN step, which the caller rejects.
    """
    K, P = grad.shape
    diag = np.einsum("kii->ki", H)
    damped = H + lam[:, None, None] * (diag[:, None, :] * np.eye(P)) + 1e-14 * np.eye(P)
    try:
        return np.linalg.solve(damped, -grad[..., None])[..., 0]
    except np.linalg.LinAlgError:
        steps = np.full((K, P), np.nan)
        for k in range(K):
            try:
                steps[k] = np.linalg.solve(damped[k], -grad[k])
            except np.linalg.LinAlgError:
                pass
        return steps


def refine_starts(model, y, starts, lower, upper, *, delta, max_iters, tol):
    """Refine a batch of parameter starts against positive targets y.

    model(params, with_jac) maps a (K, P) parameter batch to raw-space
    predictions (K, n) and, when asked, the jacobian (K, n, P) of those raw
    predictions. Bounds are enforced by projection; damping follows the
    Marquardt convention of scaling the Hessian diagonal.

    Returns (params, objectives): the refined batch and its Huber objectives,
    with +inf marking starts that never produced a finite fit.
    """
    params = np.clip(np.asarray(starts, dtype=float), lower, upper)
    K, P = params.shape
    log_y = np.log(np.asarray(y, dtype=float))

    with np.errstate(all="ignore"):
        pred, _ = model(params, with_jac=False)
        obj = _batch_objective(np.log(np.maximum(pred, 1e-300)), log_y, delta)

    lam = np.full(K, _LAMBDA_INIT)
    active = np.isfinite(obj)

    for _ in range(max_iters):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        p_act = params[idx]

        with np.errstate(all="ignore"):
            pred, jac = model(p_act, with_jac=True)
            pred = np.maximum(pred, 1e-300)
            r = np.log(pred) - log_y
            # jacobian of log(pred) = raw jacobian / pred
            j_log = jac / pred[..., None]

            bad = ~(np.isfinite(r).all(axis=1) & np.isfinite(j_log).all(axis=(1, 2)))
            r = np.where(bad[:, None], 0.0, r)
            j_log = np.where(bad[:, None, None], 0.0, j_log)

            w = huber_weights(r, delta)
            grad = np.einsum("kn,knp->kp", w * r, j_log)
            H = np.einsum("kn,knp,knq->kpq", w, j_log, j_log)

            step = _solve_damped(H, lam[idx], grad)
            trial = np.clip(p_act + step, lower, upper)
            trial_pred, _ = model(trial, with_jac=False)
            trial_obj = _batch_objective(np.log(np.maximum(trial_pred, 1e-300)), log_y, delta)
        trial_obj = np.where(np.isfinite(step).all(axis=1), trial_obj, np.inf)

        accept = trial_obj < obj[idx]
        improved = obj[idx] - trial_obj
        params[idx[accept]] = trial[accept]
        obj[idx[accept]] = trial_obj[accept]
        lam[idx[accept]] /= _LAMBDA_DOWN
        lam[idx[~accept]] = np.minimum(lam[idx[~accept]] * _LAMBDA_UP, _LAMBDA_CAP)

        # A start is done when an accepted step stops mattering, or damping
        # is maxed out with no acceptable step left, or it started dead.
        done = np.zeros(len(idx), dtype=bool)
        done[accept] = improved[accept] <= tol * np.maximum(1.0, obj[idx[accept]])
        done[~accept] = lam[idx[~accept]] >= _LAMBDA_CAP
        done |= bad
        active[idx[done]] = False

    obj = np.where(np.isfinite(obj), obj, np.inf)
    return params, obj

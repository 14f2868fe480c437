"""Monte-Carlo simulator for sketched linear regression with power-law spectra.

The generative model: features x have diagonal covariance with eigenvalues
lambda_i = i^-(beta+1), a teacher w ~ N(0, sigma_w^2 I) labels them as y = x.w,
and the student only sees the N-dimensional sketch phi = V x with projection
entries V_ai ~ N(0, sigma_v^2/M). Ordinary least squares on (phi, y) gives
theta*, and the validation loss is evaluated analytically as its exact
expectation 0.5 * (V'theta - w)' Sigma (V'theta - w), so seeds differ only
through training randomness.

Sampling detail: the simulation never needs the D x M feature matrix itself.
Given (V, w), each training row contributes only (phi, y) = (V x, w.x), which
is jointly Gaussian with the (N+1) x (N+1) covariance [V; w] Sigma [V; w]'.
Drawing those sufficient statistics directly from that exact joint law leaves
every downstream quantity's distribution unchanged and cuts the cost per seed
from O(D*M) memory to O(N*M). A direct sampler that does materialize X is kept
for the equivalence test.

Closed forms: delta_closed gives the dense-spectrum (M -> infinity) resolvent
constant; delta_bisect solves the finite-M self-consistency sum exactly;
theory_loss and expansion_loss evaluate the matching loss predictions.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import NumericalError, ValidationError

_MAX_REGENERATIONS = 5


@dataclass(frozen=True)
class LinSimConfig:
    """One simulation setting.

    Requires N < D (underparametrized regime). The closed forms assume the
    spectrum is much longer than the model, N, D << M; that is the caller's
    responsibility since small-M configs are legitimate for the exact
    finite-M solver.
    """

    M: int
    N: int
    D: int
    beta: float
    sigma_v: float = 1.0
    sigma_w: float = 1.0
    seeds: int = 200
    base_seed: int = 0

    def __post_init__(self):
        for name in ("M", "N", "D"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        if not (self.N < self.D):
            raise ValidationError(f"need N < D, got N={self.N}, D={self.D}")
        if not (self.beta > 0):
            raise ValidationError(f"beta must be positive, got {self.beta!r}")
        if not (self.sigma_v > 0 and self.sigma_w > 0):
            raise ValidationError("sigma_v and sigma_w must be positive")
        if not (isinstance(self.seeds, int) and self.seeds >= 1):
            raise ValidationError(f"seeds must be a positive integer, got {self.seeds!r}")
        if not isinstance(self.base_seed, int):
            raise ValidationError(f"base_seed must be an integer, got {self.base_seed!r}")


@dataclass(frozen=True)
class LinSimResult:
    mc_mean: float
    mc_stderr: float
    theory: float
    theory_finite_m: float
    regenerations: int = 0

    def __post_init__(self):
        if not (self.mc_mean >= 0 and self.mc_stderr >= 0):
            raise ValidationError("losses and standard errors must be nonnegative")


def spectrum(m: int, beta: float):
    """Eigenvalues lambda_i = i^-(beta+1) for i = 1..M."""
    return np.arange(1, m + 1, dtype=float) ** -(beta + 1.0)


def simulate_loss(cfg: LinSimConfig) -> LinSimResult:
    """Run all seeds and aggregate against both theory predictions.

    Per-seed generators derive from (base_seed, seed_index, attempt), so
    results are bit-identical however seeds are scheduled. A numerically
    singular draw is regenerated under the next attempt index, at most
    5 times per seed; regenerations are counted in the result.
    """
    lam = spectrum(cfg.M, cfg.beta)
    losses = np.empty(cfg.seeds)
    regenerations = 0
    for k in range(cfg.seeds):
        loss, used = _one_seed(cfg, lam, k)
        losses[k] = loss
        regenerations += used
    if not np.all(np.isfinite(losses)):
        raise NumericalError("simulation produced a non-finite loss")
    mc_mean = float(losses.mean())
    mc_stderr = float(losses.std(ddof=1) / math.sqrt(cfg.seeds)) if cfg.seeds > 1 else 0.0
    return LinSimResult(
        mc_mean=mc_mean,
        mc_stderr=mc_stderr,
        theory=theory_loss(cfg),
        theory_finite_m=float(0.5 * cfg.sigma_w**2 * delta_bisect(cfg) / (1.0 - cfg.N / cfg.D)),
        regenerations=regenerations,
    )


def _one_seed(cfg: LinSimConfig, lam, seed_index: int) -> tuple[float, int]:
    for attempt in range(_MAX_REGENERATIONS + 1):
        rng = np.random.default_rng([cfg.base_seed, seed_index, attempt])
        try:
            return _simulate_one(cfg, lam, rng), attempt
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        f"singular system on all {_MAX_REGENERATIONS + 1} attempts for seed {seed_index}"
    )


def _draw_teacher_and_projection(cfg: LinSimConfig, rng):
    w = rng.normal(0.0, cfg.sigma_w, cfg.M)
    v = rng.normal(0.0, cfg.sigma_v / math.sqrt(cfg.M), (cfg.N, cfg.M))
    return w, v


def _validation_loss(lam, v, w, theta) -> float:
    r = v.T @ theta - w
    return float(0.5 * np.sum(lam * r * r))


def _solve_ols(phi, y):
    # Cholesky of the Gram matrix; explicit inversion is deliberately avoided.
    gram = phi.T @ phi
    return cho_solve(cho_factor(gram), phi.T @ y)


def _simulate_one(cfg: LinSimConfig, lam, rng) -> float:
    """One seed via the exact joint law of the sufficient statistics (phi, y)."""
    w, v = _draw_teacher_and_projection(cfg, rng)
    b = np.vstack([v, w])
    cov = (b * lam) @ b.T
    chol = np.linalg.cholesky(cov)
    g = rng.standard_normal((cfg.D, cfg.N + 1)) @ chol.T
    theta = _solve_ols(g[:, :-1], g[:, -1])
    return _validation_loss(lam, v, w, theta)


def _simulate_one_direct(cfg: LinSimConfig, lam, rng) -> float:
    """One seed materializing the full D x M feature matrix; equivalence oracle."""
    w, v = _draw_teacher_and_projection(cfg, rng)
    x = rng.standard_normal((cfg.D, cfg.M)) * np.sqrt(lam)
    theta = _solve_ols(x @ v.T, x @ w)
    return _validation_loss(lam, v, w, theta)


def delta_bisect(cfg: LinSimConfig) -> float:
    """The unique Delta > 0 with sum_i lambda_i/(Delta + N*lambda_i) = 1.

    The left side strictly decreases in Delta from M/N at 0+ to 0, so a root
    exists iff M > N. Bisection runs on log Delta between 1e-300 and
    sum(lambda), to 1e-12 relative width.
    """
    if cfg.M <= cfg.N:
        raise ValidationError(f"no solution: need M > N, got M={cfg.M}, N={cfg.N}")
    lam = spectrum(cfg.M, cfg.beta)
    n = float(cfg.N)

    def excess(delta: float) -> float:
        return float(np.sum(lam / (delta + n * lam))) - 1.0

    lo, hi = 1e-300, float(lam.sum())
    if excess(lo) < 0 or excess(hi) > 0:
        raise NumericalError("bisection bracket does not straddle the root")
    ln_lo, ln_hi = math.log(lo), math.log(hi)
    while ln_hi - ln_lo > 1e-12:
        mid = 0.5 * (ln_lo + ln_hi)
        if excess(math.exp(mid)) > 0:
            ln_lo = mid
        else:
            ln_hi = mid
    return math.exp(0.5 * (ln_lo + ln_hi))


def delta_closed(n: int, beta: float) -> float:
    """Dense-spectrum resolvent constant N pi^(b+1) (csc(pi/(b+1))/(1+N(b+1)+b))^(b+1)."""
    if not (n >= 1):
        raise ValidationError(f"N must be >= 1, got {n!r}")
    if not (beta > 0):
        raise ValidationError(f"beta must be positive, got {beta!r}")
    p = beta + 1.0
    csc = 1.0 / math.sin(math.pi / p)
    return n * math.pi**p * (csc / (1.0 + n * p + beta)) ** p


def theory_loss(cfg: LinSimConfig) -> float:
    """Dense-spectrum prediction (sigma_w^2/2) * delta_closed / (1 - N/D)."""
    return 0.5 * cfg.sigma_w**2 * delta_closed(cfg.N, cfg.beta) / (1.0 - cfg.N / cfg.D)


def expansion_loss(cfg: LinSimConfig) -> float:
    """Leading-order expansion (sigma_w^2/2) (N^-b + N^(1-b)/D) (pi csc(pi/(b+1))/(b+1))^(b+1)."""
    p = cfg.beta + 1.0
    prefactor = (math.pi / (math.sin(math.pi / p) * p)) ** p
    terms = cfg.N ** -cfg.beta + cfg.N ** (1.0 - cfg.beta) / cfg.D
    return 0.5 * cfg.sigma_w**2 * terms * prefactor

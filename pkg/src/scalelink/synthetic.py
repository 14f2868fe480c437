"""Synthetic worlds with known ground truth, for tests and demos.

A twin world consists of two training distributions whose train losses follow
known nested-form laws connected by an exact link, plus a shared test metric
reached from each side by its own exact link. Because links compose and
translate in closed form, every quantity a workflow estimates has an exact
target value here, and noise enters only as explicit multiplicative log-normal
perturbations.
"""

from dataclasses import dataclass

import numpy as np

from .core import DatasetId, LossLink, MetricId, RunRecord, ScalingLaw
from .lawfit import optimal_model_size, predict_loss
from .losslink import apply_link, translate_law
from .workflows import ScenarioSpec

# Positions (budget index, model index) of the few-run subset. Seven undersized
# models at the three cheapest budgets plus one undersized top-budget anchor:
# the paired losses then cover the eval range (the link interpolates), while the
# one-limb geometry leaves a direct law fit on these runs poorly constrained.
SMALL_PICKS = ((0, 0), (0, 2), (0, 4), (1, 1), (1, 3), (2, 0), (2, 2), (7, 3))


def flop_budgets(lo: float = 2e17, hi: float = 4.84e19, n: int = 8):
    return np.geomspace(lo, hi, n)


def grid_keys(law: ScalingLaw, budgets, per_budget: int = 11, spread: float = 8.0):
    """(N, D) keys: per budget, models log-spaced around the compute-optimal size."""
    keys = []
    for c in np.asarray(budgets, dtype=float):
        n_star = optimal_model_size(law, c)
        for n in np.geomspace(n_star / spread, n_star * spread, per_budget):
            n_int = max(1, int(round(n)))
            d_int = max(1, int(round(c / (6.0 * n_int))))
            keys.append((n_int, d_int))
    return keys


def runs_from_law(
    law: ScalingLaw,
    keys,
    dataset: DatasetId,
    metric: MetricId,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    link: LossLink | None = None,
) -> list[RunRecord]:
    """Records whose losses follow the law, optionally mapped through a link.

    Noise multiplies each loss by exp(noise_sigma * z); the link, when given,
    is applied to the noiseless law value first, so a zero-noise world keeps
    the link relationship exact.
    """
    if noise_sigma > 0 and rng is None:
        raise ValueError("noise requested but no rng given")
    out = []
    for n, d in keys:
        loss = predict_loss(law, n, d)
        if link is not None:
            loss = apply_link(link, loss)
        if noise_sigma > 0:
            loss *= float(np.exp(noise_sigma * rng.standard_normal()))
        out.append(
            RunRecord(train_dataset=dataset, n_params=n, n_tokens=d, metric=metric, loss=loss)
        )
    return out


@dataclass(frozen=True)
class TwinWorld:
    """Two linked training distributions, a shared test metric, and their runs."""

    law_source: ScalingLaw
    law_target: ScalingLaw
    link_train: LossLink        # source train loss -> target train loss
    link_source_test: LossLink  # source train loss -> test loss of source-trained models
    link_target_test: LossLink  # target train loss -> test loss of target-trained models
    source_dataset: DatasetId
    target_dataset: DatasetId
    train_metric: MetricId
    test_metric: MetricId
    source_runs: list[RunRecord]
    target_runs_small: list[RunRecord]
    target_runs_eval: list[RunRecord]
    large_train: RunRecord
    large_test: RunRecord
    actual_large_test: float

    def scenario(self) -> ScenarioSpec:
        return ScenarioSpec(
            source_runs=self.source_runs,
            target_runs_small=self.target_runs_small,
            target_runs_eval=self.target_runs_eval,
            test_metric=self.test_metric,
        )


def make_twin_world(
    seed: int = 0,
    noise_sigma: float = 0.01,
    budgets=None,
    per_budget: int = 11,
    spread: float = 32.0,
    small_picks=SMALL_PICKS,
    large_multiple: float = 20.0,
    with_test_runs: bool = True,
) -> TwinWorld:
    """Build the standard twin world.

    The source law and the link levels sit in the ranges typical of web-scale
    pretraining corpora (floors near 2 nats, compute-optimal losses 2.4 to 3.5
    over the grid, badly undersized models reaching past 6), so fits run in a
    realistic numeric regime. The large run sits at large_multiple times the
    top grid budget, at its compute-optimal size.
    """
    rng = np.random.default_rng(seed)
    budgets = flop_budgets() if budgets is None else np.asarray(budgets, dtype=float)

    law_source = ScalingLaw(form="nested", E=1.97, A=6.68e7, B=8.90e8, alpha=0.41, beta=0.46)
    link_train = LossLink(
        kind="train_to_train", K=0.60, kappa=1.07, shift_x=law_source.E, shift_y=1.32
    )
    link_source_test = LossLink(
        kind="train_to_test", K=0.93, kappa=1.08, shift_x=law_source.E, shift_y=2.12
    )
    link_target_test = LossLink(
        kind="train_to_test", K=0.85, kappa=1.04, shift_x=link_train.shift_y, shift_y=2.05
    )
    law_target = translate_law(law_source, link_train)

    ds0 = DatasetId("webtext-a")
    ds1 = DatasetId("webtext-b")
    train_metric = MetricId("ce", "train")
    test_metric = MetricId("heldout-ce", "test")

    keys = grid_keys(law_source, budgets, per_budget=per_budget, spread=spread)
    for b, m in small_picks:
        if not (0 <= b < len(budgets) and 0 <= m < per_budget):
            raise ValueError(
                f"small pick {(b, m)} outside the {len(budgets)} x {per_budget} grid"
            )
    small_keys = [keys[b * per_budget + m] for b, m in small_picks]

    source_runs = runs_from_law(law_source, keys, ds0, train_metric, noise_sigma, rng)
    target_small = runs_from_law(law_target, small_keys, ds1, train_metric, noise_sigma, rng)
    target_eval = runs_from_law(law_target, keys, ds1, train_metric, noise_sigma, rng)
    if with_test_runs:
        source_runs += runs_from_law(
            law_source, keys, ds0, test_metric, noise_sigma, rng, link=link_source_test
        )
        target_small += runs_from_law(
            law_target, small_keys, ds1, test_metric, noise_sigma, rng, link=link_target_test
        )

    c_large = large_multiple * float(budgets[-1])
    n_large = max(1, int(round(optimal_model_size(law_source, c_large))))
    d_large = max(1, int(round(c_large / (6.0 * n_large))))
    (large_train,) = runs_from_law(
        law_source, [(n_large, d_large)], ds0, train_metric, noise_sigma, rng
    )
    (large_test,) = runs_from_law(
        law_source, [(n_large, d_large)], ds0, test_metric, noise_sigma, rng,
        link=link_source_test,
    )
    actual = apply_link(link_target_test, predict_loss(law_target, n_large, d_large))

    return TwinWorld(
        law_source=law_source,
        law_target=law_target,
        link_train=link_train,
        link_source_test=link_source_test,
        link_target_test=link_target_test,
        source_dataset=ds0,
        target_dataset=ds1,
        train_metric=train_metric,
        test_metric=test_metric,
        source_runs=source_runs,
        target_runs_small=target_small,
        target_runs_eval=target_eval,
        large_train=large_train,
        large_test=large_test,
        actual_large_test=actual,
    )

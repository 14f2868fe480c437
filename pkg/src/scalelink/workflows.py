"""End-to-end scenarios built from the fitting primitives.

Two practitioner workflows live here. The first takes a full run grid on one
training distribution plus a handful of runs on a new one, and produces a full
law for the new distribution by fitting a link on the paired runs and pushing
the source law through it; baseline and skyline fits bracket its score. The
second predicts a large model's test loss from small runs by five methods
(two loss links, a compute curve, an independent law, and the identity
carry-over) so their relative errors can be compared.

Record lists in a scenario are heterogeneous bags: train-loss rows and
test-metric rows side by side, selected by metric where each step needs them.
"""

from dataclasses import dataclass

import numpy as np

from .core import MetricId, RunRecord, ScalingLaw, ValidationError, pair_records
from .lawfit import (
    FitConfig,
    fit_decay_curve,
    fit_law,
    predict_decay,
    predict_loss,
    r_squared,
)
from .losslink import (
    FREE,
    apply_link,
    estimate_conditional_entropy,
    fit_link,
    translate_law,
)

PREDICTION_METHODS = (
    "general_train_to_test",
    "test_to_test",
    "flops_to_loss",
    "indep_scaling_law",
    "identity",
)


@dataclass(frozen=True)
class ScenarioSpec:
    """Inputs for both scenarios.

    source_runs: the full grid on the source distribution; may carry both
    train-loss and test-metric rows. target_runs_small: the few runs on the
    new distribution. target_runs_eval: held-out scoring rows on the new
    distribution. Every small-run (N, D) must also exist in source_runs,
    otherwise pairing is impossible by construction.
    """

    source_runs: list[RunRecord]
    target_runs_small: list[RunRecord]
    target_runs_eval: list[RunRecord]
    test_metric: MetricId | None = None

    def __post_init__(self):
        if not self.source_runs:
            raise ValidationError("source_runs must be non-empty")
        if not self.target_runs_small:
            raise ValidationError("target_runs_small must be non-empty")
        _sole_dataset(self.source_runs, "source_runs")
        target = _sole_dataset(self.target_runs_small, "target_runs_small")
        if self.target_runs_eval:
            eval_ds = _sole_dataset(self.target_runs_eval, "target_runs_eval")
            if eval_ds != target:
                raise ValidationError(
                    f"target_runs_eval dataset {eval_ds.name!r} differs from "
                    f"target_runs_small dataset {target.name!r}"
                )
        source_keys = {r.key for r in self.source_runs}
        missing = {r.key for r in self.target_runs_small} - source_keys
        if missing:
            raise ValidationError(
                f"target_runs_small keys missing from source_runs: {sorted(missing)}"
            )


@dataclass(frozen=True)
class TranslateScenarioResult:
    """Translated law with its brackets; absent entries mean the fit was impossible."""

    translated: ScalingLaw
    baseline: ScalingLaw | None
    skyline: ScalingLaw | None
    r2_translated: float
    r2_baseline: float | None
    r2_skyline: float | None


def translate_law_scenario(spec: ScenarioSpec, cfg: FitConfig | None = None) -> TranslateScenarioResult:
    """Fit the source grid, link it to the small runs, and score the translation.

    The link is fit on train-loss pairs at shared (N, D) with the source
    law's floor as the known source shift and the target shift free. The
    baseline fits the small runs alone and the skyline fits the evaluation
    grid itself; either may be impossible (too few or degenerate runs), in
    which case it is returned absent rather than failing the translation.
    """
    source_train = _train_records(spec.source_runs, "source_runs")
    target_small = _train_records(spec.target_runs_small, "target_runs_small")
    eval_records = _train_records(spec.target_runs_eval, "target_runs_eval")
    if not eval_records:
        raise ValidationError("target_runs_eval has no train-loss records to score against")

    source_law = fit_law(source_train, "nested", cfg)
    pairs = pair_records(source_train, target_small)
    link = fit_link(
        pairs,
        shift_x=source_law.E,
        shift_y=FREE,
        kind="train_to_train",
        source=(source_train[0].train_dataset, source_train[0].metric),
        target=(target_small[0].train_dataset, target_small[0].metric),
    )
    translated = translate_law(source_law, link)

    baseline = _try_fit(target_small, cfg)
    skyline = _try_fit(eval_records, cfg)
    return TranslateScenarioResult(
        translated=translated,
        baseline=baseline,
        skyline=skyline,
        r2_translated=r_squared(translated, eval_records),
        r2_baseline=r_squared(baseline, eval_records) if baseline else None,
        r2_skyline=r_squared(skyline, eval_records) if skyline else None,
    )


def predict_large_test(
    spec: ScenarioSpec,
    large_source: tuple[RunRecord, RunRecord],
    method: str,
    cfg: FitConfig | None = None,
) -> float:
    """Predict the large model's test loss by the chosen method.

    large_source is the big source-trained model's (train-loss record,
    test-loss record) at one (N, D). Loss-link methods regress the small
    runs' test losses on the paired source losses and map the large model's
    own loss through; the remaining methods extrapolate from the small target
    runs alone, or simply carry the large test loss over.
    """
    if method not in PREDICTION_METHODS:
        raise ValidationError(f"unknown method {method!r}; expected one of {PREDICTION_METHODS}")
    if spec.test_metric is None:
        raise ValidationError("spec.test_metric is required for test-loss prediction")
    large_train, large_test = large_source
    if large_train.key != large_test.key:
        raise ValidationError(
            f"large-model records disagree on (N, D): {large_train.key} vs {large_test.key}"
        )
    if large_test.metric != spec.test_metric:
        raise ValidationError(
            f"large test record metric {large_test.metric} is not spec.test_metric {spec.test_metric}"
        )

    if method == "identity":
        return large_test.loss

    target_test = _metric_records(spec.target_runs_small, spec.test_metric)
    if method == "flops_to_loss":
        curve = fit_decay_curve(
            [r.flops for r in target_test], [r.loss for r in target_test], cfg
        )
        return predict_decay(curve, large_train.flops)
    if method == "indep_scaling_law":
        law = fit_law(target_test, "nested", cfg)
        return predict_loss(law, large_test.n_params, large_test.n_tokens)

    if method == "general_train_to_test":
        source_side = _train_records(spec.source_runs, "source_runs")
        shift_x = fit_law(source_side, "nested", cfg).E
        kind = "general"
        large_x = large_train.loss
    else:  # test_to_test
        source_side = _metric_records(spec.source_runs, spec.test_metric)
        shift_x = estimate_conditional_entropy(source_side, cfg)
        kind = "test_to_test"
        large_x = large_test.loss
    pairs = pair_records(source_side, target_test)
    link = fit_link(
        pairs,
        shift_x=shift_x,
        shift_y=FREE,
        kind=kind,
        source=(source_side[0].train_dataset, source_side[0].metric),
        target=(target_test[0].train_dataset, target_test[0].metric),
    )
    return apply_link(link, large_x)


def relative_error(pred: float, actual: float) -> float:
    """|pred - actual| / actual."""
    if not np.isfinite(pred) or not np.isfinite(actual):
        raise ValidationError("pred and actual must be finite")
    if not (actual > 0):
        raise ValidationError(f"actual must be positive, got {actual!r}")
    return abs(pred - actual) / actual


def _try_fit(records: list[RunRecord], cfg: FitConfig | None) -> ScalingLaw | None:
    """A fit that reports impossibility as absence instead of an exception."""
    try:
        return fit_law(records, "nested", cfg)
    except (ValidationError,):
        return None


def _train_records(records: list[RunRecord], where: str) -> list[RunRecord]:
    out = [r for r in records if r.metric.split == "train"]
    metrics = {r.metric for r in out}
    if len(metrics) > 1:
        raise ValidationError(f"{where} has multiple train metrics: {sorted(m.name for m in metrics)}")
    return out


def _metric_records(records: list[RunRecord], metric: MetricId) -> list[RunRecord]:
    out = [r for r in records if r.metric == metric]
    if not out:
        raise ValidationError(f"no records with metric {metric} found")
    return out


def _sole_dataset(records: list[RunRecord], where: str):
    datasets = {r.train_dataset for r in records}
    if len(datasets) != 1:
        raise ValidationError(f"{where} must come from one training dataset, got {sorted(d.name for d in datasets)}")
    return next(iter(datasets))

"""Shared domain types: run records, fitted parameter sets, and record pairing.

All losses are cross-entropies in nats. Model scale is carried as exact integer
counts (N parameters, D training tokens) so records from different datasets can
be joined on (N, D) by exact match, never by a tolerance comparison.
"""

from dataclasses import dataclass, field
from typing import Literal


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class NumericalError(RuntimeError):
    """A computation produced a non-finite value or an unsolvable system."""


Split = Literal["train", "test"]
LawForm = Literal["nested", "additive"]
LinkKind = Literal["train_to_train", "train_to_test", "test_to_test", "general"]

LAW_FORMS = ("nested", "additive")
LINK_KINDS = ("train_to_train", "train_to_test", "test_to_test", "general")


@dataclass(frozen=True)
class DatasetId:
    """Case-sensitive name of a training or evaluation distribution."""

    name: str

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name.strip():
            raise ValidationError("dataset name must be a non-empty, non-whitespace string")


@dataclass(frozen=True)
class MetricId:
    """An evaluation metric; (name, split) is the unique key."""

    name: str
    split: Split = "train"

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name.strip():
            raise ValidationError("metric name must be a non-empty, non-whitespace string")
        if self.split not in ("train", "test"):
            raise ValidationError(f"metric split must be 'train' or 'test', got {self.split!r}")


@dataclass(frozen=True)
class RunRecord:
    """One trained model's loss observation.

    flops defaults to 6*N*D when not supplied; an explicit value is honored
    because embedding-aware FLOP counts differ between codebases.
    """

    train_dataset: DatasetId
    n_params: int
    n_tokens: int
    metric: MetricId
    loss: float
    flops: float | None = None

    def __post_init__(self):
        if not isinstance(self.n_params, int) or self.n_params < 1:
            raise ValidationError(f"n_params must be a positive integer, got {self.n_params!r}")
        if not isinstance(self.n_tokens, int) or self.n_tokens < 1:
            raise ValidationError(f"n_tokens must be a positive integer, got {self.n_tokens!r}")
        if not (self.loss > 0):
            raise ValidationError(f"loss must be positive, got {self.loss!r}")
        if self.flops is None:
            object.__setattr__(self, "flops", float(flops_of(self.n_params, self.n_tokens)))
        elif not (self.flops > 0):
            raise ValidationError(f"flops must be positive when given, got {self.flops!r}")

    @property
    def key(self) -> tuple[int, int]:
        """The (N, D) join key."""
        return (self.n_params, self.n_tokens)


@dataclass(frozen=True)
class PairedPoint:
    """Two losses observed at identical (N, D), the unit of loss-to-loss regression."""

    n_params: int
    n_tokens: int
    loss_x: float
    loss_y: float

    def __post_init__(self):
        if self.n_params < 1 or self.n_tokens < 1:
            raise ValidationError("paired point requires positive (N, D) counts")
        if not (self.loss_x > 0 and self.loss_y > 0):
            raise ValidationError("paired losses must be positive")


@dataclass(frozen=True)
class FitMeta:
    """Bookkeeping from an optimizer run: winning objective, data size, starts used."""

    objective: float
    n_points: int
    n_starts: int


@dataclass(frozen=True)
class ScalingLaw:
    """Fitted loss surface L(N, D).

    form "nested":   L = E + ((A/N)^(alpha/beta) + B/D)^beta
    form "additive": L = E + A/N^alpha + B/D^beta

    The nested form is the one closed under power-law loss links (a link maps
    it to another nested law); the additive form is the classic sum of powers.
    Both decrease strictly in N and D and approach the floor E in the joint
    limit.
    """

    form: LawForm
    E: float
    A: float
    B: float
    alpha: float
    beta: float
    fit_meta: FitMeta | None = None

    def __post_init__(self):
        if self.form not in LAW_FORMS:
            raise ValidationError(f"unknown law form {self.form!r}; expected one of {LAW_FORMS}")
        if not (self.E >= 0):
            raise ValidationError(f"E must be nonnegative, got {self.E!r}")
        if not (self.A > 0 and self.B > 0):
            raise ValidationError("A and B must be positive")
        if not (0 < self.alpha < 3 and 0 < self.beta < 3):
            raise ValidationError(
                f"alpha and beta must lie in (0, 3), got alpha={self.alpha!r} beta={self.beta!r}"
            )


@dataclass(frozen=True)
class LossLink:
    """Shifted power law y = K*(x - shift_x)^kappa + shift_y between two losses.

    kind records which splits sit on each axis; source/target name the
    (dataset, metric) endpoints when known, so links can be chained safely.
    """

    kind: LinkKind
    K: float
    kappa: float
    shift_x: float
    shift_y: float
    shift_y_fitted_free: bool = False
    source: tuple[DatasetId, MetricId] | None = None
    target: tuple[DatasetId, MetricId] | None = None

    def __post_init__(self):
        if self.kind not in LINK_KINDS:
            raise ValidationError(f"unknown link kind {self.kind!r}; expected one of {LINK_KINDS}")
        if not (self.K > 0):
            raise ValidationError(f"K must be positive, got {self.K!r}")
        if not (self.kappa > 0):
            raise ValidationError(f"kappa must be positive, got {self.kappa!r}")
        if not (self.shift_x >= 0 and self.shift_y >= 0):
            raise ValidationError("shifts must be nonnegative")


def flops_of(n_params: int, n_tokens: int):
    """Training compute under the C = 6*N*D convention.

    Integer inputs give an exact integer product, so equal counts can never
    disagree by a rounding artifact.
    """
    if n_params < 1 or n_tokens < 1:
        raise ValidationError("flops_of requires counts >= 1")
    return 6 * n_params * n_tokens


def pair_records(xs: list[RunRecord], ys: list[RunRecord]) -> list[PairedPoint]:
    """Join two record lists on exact (N, D) keys.

    Keys present on only one side are dropped; a duplicate key within either
    side is an error because the pairing would be ambiguous. Output is sorted
    by (N, D) so downstream fits are order-independent.
    """
    by_key_x = _index_by_key(xs, "xs")
    by_key_y = _index_by_key(ys, "ys")
    shared = sorted(by_key_x.keys() & by_key_y.keys())
    return [
        PairedPoint(
            n_params=n,
            n_tokens=d,
            loss_x=by_key_x[(n, d)].loss,
            loss_y=by_key_y[(n, d)].loss,
        )
        for n, d in shared
    ]


def _index_by_key(records: list[RunRecord], side: str) -> dict[tuple[int, int], RunRecord]:
    out: dict[tuple[int, int], RunRecord] = {}
    for rec in records:
        if rec.key in out:
            raise ValidationError(f"duplicate (N, D) key {rec.key} in {side}")
        out[rec.key] = rec
    return out

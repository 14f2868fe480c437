"""CSV run tables and JSON documents.

The run-table schema is one flat CSV with the exact header
dataset,split,metric,n_params,n_tokens,flops,loss (UTF-8, '.' decimal).
A blank flops cell means 6*N*D. Bad rows are reported all at once with their
line numbers, never silently dropped.

Documents are strict JSON: schema_version checked, unknown fields rejected so
format drift fails loudly, floats round-tripped exactly. A document may carry
provenance (input digest, resolved config, tool version) but never timestamps,
so reruns are byte-identical.
"""

import csv
import hashlib
import json
from dataclasses import dataclass

from .core import (
    DatasetId,
    FitMeta,
    LossLink,
    MetricId,
    RunRecord,
    ScalingLaw,
    ValidationError,
)

RUN_HEADER = ["dataset", "split", "metric", "n_params", "n_tokens", "flops", "loss"]
SCHEMA_VERSION = 1


def read_runs(path) -> list[RunRecord]:
    """Parse and validate a run table; all row errors are reported together."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValidationError(f"{path}: empty file, expected header {','.join(RUN_HEADER)}")
    if rows[0] != RUN_HEADER:
        raise ValidationError(
            f"{path}: bad header {','.join(rows[0])!r}; expected {','.join(RUN_HEADER)}"
        )
    records = []
    seen: dict[tuple, int] = {}
    problems = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or row == [""]:
            continue
        try:
            records.append(_parse_row(row))
            rec = records[-1]
            key = (rec.train_dataset.name, rec.metric.name, rec.metric.split, rec.n_params, rec.n_tokens)
            if key in seen:
                problems.append(f"line {lineno}: duplicate key {key} (first at line {seen[key]})")
                records.pop()
            else:
                seen[key] = lineno
        except (ValidationError, ValueError) as exc:
            problems.append(f"line {lineno}: {exc}")
    if problems:
        raise ValidationError(f"{path}: {len(problems)} bad row(s)\n" + "\n".join(problems))
    return records


def _parse_row(row) -> RunRecord:
    if len(row) != len(RUN_HEADER):
        raise ValidationError(f"expected {len(RUN_HEADER)} columns, got {len(row)}")
    dataset, split, metric, n_params, n_tokens, flops, loss = row
    return RunRecord(
        train_dataset=DatasetId(dataset),
        metric=MetricId(metric, split),
        n_params=int(n_params),
        n_tokens=int(n_tokens),
        flops=float(flops) if flops.strip() else None,
        loss=float(loss),
    )


def write_runs(path, records: list[RunRecord]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.train_dataset.name,
                    r.metric.split,
                    r.metric.name,
                    r.n_params,
                    r.n_tokens,
                    repr(r.flops),
                    repr(r.loss),
                ]
            )


@dataclass(frozen=True)
class LawDocument:
    law: ScalingLaw
    dataset: str | None = None
    metric: MetricId | None = None
    provenance: dict | None = None


@dataclass(frozen=True)
class LinkDocument:
    link: LossLink
    provenance: dict | None = None


def make_provenance(input_digest: str | None, config: dict) -> dict:
    from . import __version__

    return {"input_digest": input_digest, "config": config, "tool_version": __version__}


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def save_law_document(path, doc: LawDocument):
    law = doc.law
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "scaling_law",
        "form": law.form,
        "params": {"E": law.E, "A": law.A, "B": law.B, "alpha": law.alpha, "beta": law.beta},
        "fit_meta": None
        if law.fit_meta is None
        else {
            "objective": law.fit_meta.objective,
            "n_points": law.fit_meta.n_points,
            "n_starts": law.fit_meta.n_starts,
        },
        "dataset": doc.dataset,
        "metric": None if doc.metric is None else {"name": doc.metric.name, "split": doc.metric.split},
        "provenance": doc.provenance,
    }
    _dump(path, payload)


def load_law_document(path) -> LawDocument:
    payload = _load(path, kind="scaling_law")
    _check_fields(
        payload,
        {"schema_version", "kind", "form", "params", "fit_meta", "dataset", "metric", "provenance"},
        path,
    )
    params = payload["params"]
    _check_fields(params, {"E", "A", "B", "alpha", "beta"}, path)
    meta = payload["fit_meta"]
    if meta is not None:
        _check_fields(meta, {"objective", "n_points", "n_starts"}, path)
        meta = FitMeta(objective=meta["objective"], n_points=meta["n_points"], n_starts=meta["n_starts"])
    metric = payload["metric"]
    if metric is not None:
        _check_fields(metric, {"name", "split"}, path)
        metric = MetricId(metric["name"], metric["split"])
    law = ScalingLaw(
        form=payload["form"],
        E=params["E"],
        A=params["A"],
        B=params["B"],
        alpha=params["alpha"],
        beta=params["beta"],
        fit_meta=meta,
    )
    return LawDocument(law=law, dataset=payload["dataset"], metric=metric, provenance=payload["provenance"])


def save_link_document(path, doc: LinkDocument):
    link = doc.link
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "loss_link",
        "link_kind": link.kind,
        "params": {
            "K": link.K,
            "kappa": link.kappa,
            "shift_x": link.shift_x,
            "shift_y": link.shift_y,
        },
        "shift_y_fitted_free": link.shift_y_fitted_free,
        "source": _endpoint_to_json(link.source),
        "target": _endpoint_to_json(link.target),
        "provenance": doc.provenance,
    }
    _dump(path, payload)


def load_link_document(path) -> LinkDocument:
    payload = _load(path, kind="loss_link")
    _check_fields(
        payload,
        {"schema_version", "kind", "link_kind", "params", "shift_y_fitted_free", "source", "target", "provenance"},
        path,
    )
    params = payload["params"]
    _check_fields(params, {"K", "kappa", "shift_x", "shift_y"}, path)
    link = LossLink(
        kind=payload["link_kind"],
        K=params["K"],
        kappa=params["kappa"],
        shift_x=params["shift_x"],
        shift_y=params["shift_y"],
        shift_y_fitted_free=payload["shift_y_fitted_free"],
        source=_endpoint_from_json(payload["source"], path),
        target=_endpoint_from_json(payload["target"], path),
    )
    return LinkDocument(link=link, provenance=payload["provenance"])


def _endpoint_to_json(endpoint):
    if endpoint is None:
        return None
    dataset, metric = endpoint
    return {"dataset": dataset.name, "metric": {"name": metric.name, "split": metric.split}}


def _endpoint_from_json(payload, path):
    if payload is None:
        return None
    _check_fields(payload, {"dataset", "metric"}, path)
    _check_fields(payload["metric"], {"name", "split"}, path)
    return (DatasetId(payload["dataset"]), MetricId(payload["metric"]["name"], payload["metric"]["split"]))


def _dump(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(path, kind: str):
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"{path}: unsupported schema_version {version!r}")
    if payload.get("kind") != kind:
        raise ValidationError(f"{path}: expected a {kind} document, got kind={payload.get('kind')!r}")
    return payload


def _check_fields(payload, allowed: set, path):
    if not isinstance(payload, dict):
        raise ValidationError(f"{path}: expected a JSON object, got {type(payload).__name__}")
    unknown = set(payload) - allowed
    if unknown:
        raise ValidationError(f"{path}: unknown field(s) {sorted(unknown)}")
    missing = allowed - set(payload)
    if missing:
        raise ValidationError(f"{path}: missing field(s) {sorted(missing)}")

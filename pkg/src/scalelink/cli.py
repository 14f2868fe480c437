"""Command-line front end.

Exit codes: 0 success, 1 validation error (including flag misuse), 2 numerical
failure. Every command takes --seed and --out; outputs carry no timestamps, so
a rerun writes byte-identical files.
"""

import argparse
import csv
import itertools
import json
import sys

import numpy as np

from .core import NumericalError, ValidationError, pair_records
from .io import (
    LawDocument,
    LinkDocument,
    load_law_document,
    load_link_document,
    make_provenance,
    read_runs,
    save_law_document,
    save_link_document,
    sha256_of,
)
from .lawfit import FitConfig, StartGrid, fit_law, optimal_model_size, predict_loss
from .linsim import LinSimConfig, simulate_loss
from .losslink import FREE, apply_link, compose_links, fit_link, translate_law
from .workflows import (
    PREDICTION_METHODS,
    ScenarioSpec,
    predict_large_test,
    relative_error,
    translate_law_scenario,
)

SIM_HEADER = ["M", "N", "D", "beta", "mc_mean", "mc_stderr", "theory", "theory_finite_m"]


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; that code is reserved for
    # numerical failures here, so usage errors become validation errors.
    def error(self, message):
        raise ValidationError(message)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.error("a subcommand is required (see --help)")
        return args.func(args) or 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scalelink", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = _sub(sub, "ingest", "validate a run table and summarize it")
    p.add_argument("--runs", required=True)
    p.set_defaults(func=cmd_ingest)

    p = _sub(sub, "fit-law", "fit a loss surface to one (dataset, metric)")
    p.add_argument("--runs", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--metric", required=True)
    p.add_argument("--split", default="train", choices=["train", "test"])
    p.add_argument("--form", default="nested", choices=["nested", "additive"])
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit_law)

    p = _sub(sub, "fit-link", "fit a loss-to-loss link between two record sets")
    p.add_argument("--runs", required=True)
    p.add_argument("--source-dataset", required=True)
    p.add_argument("--source-metric", required=True)
    p.add_argument("--source-split", default="train", choices=["train", "test"])
    p.add_argument("--target-dataset", required=True)
    p.add_argument("--target-metric", required=True)
    p.add_argument("--target-split", default="train", choices=["train", "test"])
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--shift-x", type=float, help="known source shift")
    group.add_argument("--shift-x-law", help="law document whose floor E is the source shift")
    p.add_argument("--shift-y", required=True, help="target shift value, or 'free' to fit it")
    p.add_argument(
        "--kind",
        default="general",
        choices=["train_to_train", "train_to_test", "test_to_test", "general"],
    )
    p.set_defaults(func=cmd_fit_link)

    p = _sub(sub, "translate", "push a law through a link")
    p.add_argument("--law", required=True)
    p.add_argument("--link", required=True)
    p.set_defaults(func=cmd_translate)

    p = _sub(sub, "compose", "chain two links end to end")
    p.add_argument("--first", required=True)
    p.add_argument("--second", required=True)
    p.set_defaults(func=cmd_compose)

    p = _sub(sub, "scenario", "run a translation or large-model prediction scenario")
    p.add_argument("--task", required=True, choices=["translate", "predict"])
    p.add_argument("--source", required=True, help="run table for the source distribution")
    p.add_argument("--target-small", required=True, help="run table with the few target runs")
    p.add_argument("--target-eval", help="run table scored against (translate task)")
    p.add_argument("--test-metric", help="metric name of the test loss")
    p.add_argument("--test-split", default="test", choices=["train", "test"])
    p.add_argument("--large", help="run table with the large model's train and test rows")
    p.add_argument("--method", default="all", choices=["all", *PREDICTION_METHODS])
    p.add_argument("--actual", type=float, help="true large-model test loss, if known")
    p.add_argument("--out-law", help="write the translated law document here")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_scenario)

    p = _sub(sub, "simulate", "sketched-regression sweep; comma lists sweep a grid")
    p.add_argument("--m", required=True, help="feature count(s), e.g. 50000 or 1e4,1e5")
    p.add_argument("--n", required=True, help="parameter count(s)")
    p.add_argument("--d", required=True, help="train sample count(s)")
    p.add_argument("--beta", required=True, help="spectrum exponent(s)")
    p.add_argument("--sigma-v", type=float, default=1.0)
    p.add_argument("--sigma-w", type=float, default=1.0)
    p.add_argument("--seeds", type=int, default=200)
    p.set_defaults(func=cmd_simulate)

    p = _sub(sub, "plot-series", "emit (x, y, series) rows for external plotting")
    p.add_argument("--law", help="law document; paired with --runs")
    p.add_argument("--link", help="link document; paired with --runs")
    p.add_argument("--sim", help="simulate output table")
    p.add_argument("--runs", help="run table backing a law/link plot")
    p.set_defaults(func=cmd_plot_series)

    p = _sub(sub, "show", "echo a saved document as a table")
    p.add_argument("--doc", required=True)
    p.set_defaults(func=cmd_show)

    return parser


def _sub(sub, name, help_text):
    p = sub.add_parser(name, help=help_text, description=help_text)
    p.add_argument("--seed", type=int, default=0, help="base random seed where applicable")
    p.add_argument("--out", help="output file path")
    return p


def _add_fit_flags(p):
    g = p.add_argument_group("fit flags")
    g.add_argument("--huber-delta", type=float, default=1e-3)
    g.add_argument("--max-iters", type=int, default=500)
    g.add_argument("--convergence-tol", type=float, default=1e-10)
    g.add_argument("--grid-e", help="comma-separated floor starts")
    g.add_argument("--grid-log10-a", help="comma-separated log10 A starts")
    g.add_argument("--grid-log10-b", help="comma-separated log10 B starts")
    g.add_argument("--grid-alpha", help="comma-separated alpha starts")
    g.add_argument("--grid-beta", help="comma-separated beta starts")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"bad numeric list {text!r}: {exc}") from exc


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(round(x)) for x in _floats(text))


def _fit_config(args) -> FitConfig:
    default = StartGrid()
    grid = StartGrid(
        e=_floats(args.grid_e) if args.grid_e else default.e,
        log10_a=_floats(args.grid_log10_a) if args.grid_log10_a else default.log10_a,
        log10_b=_floats(args.grid_log10_b) if args.grid_log10_b else default.log10_b,
        alpha=_floats(args.grid_alpha) if args.grid_alpha else default.alpha,
        beta=_floats(args.grid_beta) if args.grid_beta else default.beta,
    )
    return FitConfig(
        huber_delta=args.huber_delta,
        grid=grid,
        max_iters=args.max_iters,
        convergence_tol=args.convergence_tol,
    )


def _fit_config_dict(cfg: FitConfig) -> dict:
    return {
        "huber_delta": cfg.huber_delta,
        "grid": {
            "e": list(cfg.grid.e),
            "log10_a": list(cfg.grid.log10_a),
            "log10_b": list(cfg.grid.log10_b),
            "alpha": list(cfg.grid.alpha),
            "beta": list(cfg.grid.beta),
        },
        "max_iters": cfg.max_iters,
        "convergence_tol": cfg.convergence_tol,
    }


def _select(records, dataset: str, metric: str, split: str):
    available = sorted({r.train_dataset.name for r in records})
    if dataset not in available:
        raise ValidationError(f"dataset {dataset!r} not found; available: {', '.join(available)}")
    out = [
        r
        for r in records
        if r.train_dataset.name == dataset and r.metric.name == metric and r.metric.split == split
    ]
    if not out:
        metrics = sorted({f"{r.metric.name}/{r.metric.split}" for r in records if r.train_dataset.name == dataset})
        raise ValidationError(
            f"no records for metric {metric!r} split {split!r} in dataset {dataset!r}; "
            f"available metrics: {', '.join(metrics)}"
        )
    return out


def _law_table(law) -> str:
    a_exp = law.beta / (law.alpha + law.beta)
    header = f"{'form':<10}{'A':>13}{'B':>13}{'E':>10}{'alpha':>9}{'beta':>9}{'a':>9}"
    row = (
        f"{law.form:<10}{law.A:>13.5e}{law.B:>13.5e}{law.E:>10.5f}"
        f"{law.alpha:>9.5f}{law.beta:>9.5f}{a_exp:>9.5f}"
    )
    return header + "\n" + row


def _link_table(link) -> str:
    header = f"{'kind':<16}{'K':>10}{'kappa':>10}{'shift_x':>10}{'shift_y':>10}"
    row = (
        f"{link.kind:<16}{link.K:>10.5f}{link.kappa:>10.5f}"
        f"{link.shift_x:>10.5f}{link.shift_y:>10.5f}"
    )
    return header + "\n" + row


def cmd_ingest(args) -> int:
    records = read_runs(args.runs)
    datasets = sorted({r.train_dataset.name for r in records})
    metrics = sorted({f"{r.metric.name}/{r.metric.split}" for r in records})
    print(f"ok: {len(records)} records")
    print(f"datasets: {', '.join(datasets)}")
    print(f"metrics: {', '.join(metrics)}")
    if args.out:
        from .io import write_runs

        write_runs(args.out, records)
    return 0


def cmd_fit_law(args) -> int:
    records = read_runs(args.runs)
    selected = _select(records, args.dataset, args.metric, args.split)
    cfg = _fit_config(args)
    law = fit_law(selected, args.form, cfg)
    print(_law_table(law))
    if args.out:
        provenance = make_provenance(
            sha256_of(args.runs),
            {
                "dataset": args.dataset,
                "metric": args.metric,
                "split": args.split,
                "form": args.form,
                "fit": _fit_config_dict(cfg),
            },
        )
        save_law_document(
            args.out,
            LawDocument(
                law=law,
                dataset=args.dataset,
                metric=selected[0].metric,
                provenance=provenance,
            ),
        )
    return 0


def cmd_fit_link(args) -> int:
    records = read_runs(args.runs)
    xs = _select(records, args.source_dataset, args.source_metric, args.source_split)
    ys = _select(records, args.target_dataset, args.target_metric, args.target_split)
    if args.shift_x_law is not None:
        shift_x = load_law_document(args.shift_x_law).law.E
    else:
        shift_x = args.shift_x
    shift_y = FREE if args.shift_y.strip().lower() == "free" else float(args.shift_y)
    pairs = pair_records(xs, ys)
    link = fit_link(
        pairs,
        shift_x=shift_x,
        shift_y=shift_y,
        kind=args.kind,
        source=(xs[0].train_dataset, xs[0].metric),
        target=(ys[0].train_dataset, ys[0].metric),
    )
    print(f"pairs: {len(pairs)}")
    print(_link_table(link))
    if args.out:
        provenance = make_provenance(
            sha256_of(args.runs),
            {
                "source": [args.source_dataset, args.source_metric, args.source_split],
                "target": [args.target_dataset, args.target_metric, args.target_split],
                "shift_x": shift_x,
                "shift_y": "free" if shift_y is FREE else shift_y,
                "kind": args.kind,
            },
        )
        save_link_document(args.out, LinkDocument(link=link, provenance=provenance))
    return 0


def cmd_translate(args) -> int:
    law_doc = load_law_document(args.law)
    link_doc = load_link_document(args.link)
    translated = translate_law(law_doc.law, link_doc.link)
    print(_law_table(translated))
    if args.out:
        target = link_doc.link.target
        provenance = make_provenance(
            sha256_of(args.law), {"link_digest": sha256_of(args.link)}
        )
        save_law_document(
            args.out,
            LawDocument(
                law=translated,
                dataset=None if target is None else target[0].name,
                metric=None if target is None else target[1],
                provenance=provenance,
            ),
        )
    return 0


def cmd_compose(args) -> int:
    first = load_link_document(args.first)
    second = load_link_document(args.second)
    composed = compose_links(first.link, second.link)
    print(_link_table(composed))
    if args.out:
        provenance = make_provenance(
            sha256_of(args.first), {"second_digest": sha256_of(args.second)}
        )
        save_link_document(args.out, LinkDocument(link=composed, provenance=provenance))
    return 0


def cmd_scenario(args) -> int:
    cfg = _fit_config(args)
    test_metric = None
    if args.test_metric:
        from .core import MetricId

        test_metric = MetricId(args.test_metric, args.test_split)
    if args.task == "translate":
        if not args.target_eval:
            raise ValidationError("--target-eval is required for the translate task")
        spec = ScenarioSpec(
            source_runs=read_runs(args.source),
            target_runs_small=read_runs(args.target_small),
            target_runs_eval=read_runs(args.target_eval),
            test_metric=test_metric,
        )
        result = translate_law_scenario(spec, cfg)
        rows = [
            ("translated", result.r2_translated),
            ("baseline", result.r2_baseline),
            ("skyline", result.r2_skyline),
        ]
        print(f"{'model':<12}{'r_squared':>12}")
        for name, score in rows:
            printed = "absent" if score is None else f"{score:.6f}"
            print(f"{name:<12}{printed:>12}")
        if args.out_law:
            save_law_document(
                args.out_law,
                LawDocument(
                    law=result.translated,
                    dataset=spec.target_runs_small[0].train_dataset.name,
                    metric=spec.target_runs_small[0].metric,
                    provenance=make_provenance(sha256_of(args.source), {"task": "translate"}),
                ),
            )
        if args.out:
            _write_csv(args.out, ["model", "r_squared"], [
                (name, "" if score is None else repr(score)) for name, score in rows
            ])
        return 0

    # predict task
    if not args.large:
        raise ValidationError("--large is required for the predict task")
    if test_metric is None:
        raise ValidationError("--test-metric is required for the predict task")
    spec = ScenarioSpec(
        source_runs=read_runs(args.source),
        target_runs_small=read_runs(args.target_small),
        target_runs_eval=read_runs(args.target_eval) if args.target_eval else [],
        test_metric=test_metric,
    )
    large_records = read_runs(args.large)
    large_train = [r for r in large_records if r.metric.split == "train"]
    large_test = [r for r in large_records if r.metric == test_metric]
    if len(large_train) != 1 or len(large_test) != 1:
        raise ValidationError(
            "--large must hold exactly one train-loss row and one test-metric row"
        )
    methods = list(PREDICTION_METHODS) if args.method == "all" else [args.method]
    rows = []
    for method in methods:
        pred = predict_large_test(spec, (large_train[0], large_test[0]), method, cfg)
        rel = relative_error(pred, args.actual) if args.actual is not None else None
        rows.append((method, pred, rel))
    print(f"{'method':<24}{'prediction':>12}{'rel_error':>12}")
    for method, pred, rel in rows:
        rel_text = "" if rel is None else f"{rel:.6f}"
        print(f"{method:<24}{pred:>12.6f}{rel_text:>12}")
    if args.out:
        _write_csv(
            args.out,
            ["method", "prediction", "rel_error"],
            [(m, repr(p), "" if r is None else repr(r)) for m, p, r in rows],
        )
    return 0


def cmd_simulate(args) -> int:
    rows = []
    for m, n, d, beta in itertools.product(
        _ints(args.m), _ints(args.n), _ints(args.d), _floats(args.beta)
    ):
        cfg = LinSimConfig(
            M=m, N=n, D=d, beta=beta,
            sigma_v=args.sigma_v, sigma_w=args.sigma_w,
            seeds=args.seeds, base_seed=args.seed,
        )
        result = simulate_loss(cfg)
        rows.append(
            (m, n, d, beta, result.mc_mean, result.mc_stderr, result.theory, result.theory_finite_m)
        )
    header = "".join(f"{h:>16}" for h in SIM_HEADER)
    print(header)
    for row in rows:
        m, n, d, beta, mc, se, th, thm = row
        print(f"{m:>16}{n:>16}{d:>16}{beta:>16g}{mc:>16.6f}{se:>16.6f}{th:>16.6f}{thm:>16.6f}")
    if args.out:
        _write_csv(args.out, SIM_HEADER, [tuple(repr(v) for v in row) for row in rows])
    return 0


def cmd_plot_series(args) -> int:
    chosen = [name for name in ("law", "link", "sim") if getattr(args, name)]
    if len(chosen) != 1:
        raise ValidationError("exactly one of --law, --link, --sim is required")
    if not args.out:
        raise ValidationError("--out is required for plot-series")

    if args.sim:
        rows = _sim_series(args.sim)
    elif args.law:
        rows = _law_series(args)
    else:
        rows = _link_series(args)
    if not rows:
        raise ValidationError("nothing to plot; refusing to write an empty series file")
    _write_csv(args.out, ["x", "y", "series"], rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _law_series(args):
    if not args.runs:
        raise ValidationError("--runs is required with --law")
    doc = load_law_document(args.law)
    if doc.dataset is None or doc.metric is None:
        raise ValidationError("law document carries no dataset/metric; cannot select data rows")
    records = _select(read_runs(args.runs), doc.dataset, doc.metric.name, doc.metric.split)
    rows = [(repr(float(r.flops)), repr(r.loss), "data") for r in records]
    if doc.law.form == "nested":
        # fitted curve along the compute-optimal frontier
        flops = np.array([r.flops for r in records], dtype=float)
        for c in np.geomspace(flops.min(), flops.max(), 200):
            n_star = optimal_model_size(doc.law, c)
            loss = predict_loss(doc.law, n_star, c / (6.0 * n_star))
            rows.append((repr(float(c)), repr(float(loss)), "fit"))
    return rows


def _link_series(args):
    if not args.runs:
        raise ValidationError("--runs is required with --link")
    doc = load_link_document(args.link)
    link = doc.link
    if link.source is None or link.target is None:
        raise ValidationError("link document carries no endpoints; cannot select data rows")
    records = read_runs(args.runs)
    xs = _select(records, link.source[0].name, link.source[1].name, link.source[1].split)
    ys = _select(records, link.target[0].name, link.target[1].name, link.target[1].split)
    pairs = pair_records(xs, ys)
    if not pairs:
        return []
    rows = [(repr(p.loss_x), repr(p.loss_y), "data") for p in pairs]
    lo = min(p.loss_x for p in pairs)
    hi = max(p.loss_x for p in pairs)
    for x in np.linspace(lo, hi, 200):
        rows.append((repr(float(x)), repr(float(apply_link(link, x))), "fit"))
    return rows


def _sim_series(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            table = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    if not table or table[0] != SIM_HEADER:
        raise ValidationError(f"{path}: expected a simulate output table with header {','.join(SIM_HEADER)}")
    body = [row for row in table[1:] if row and row != [""]]
    if not body:
        return []
    columns = {name: [row[i] for row in body] for i, name in enumerate(SIM_HEADER)}
    swept = [name for name in ("M", "N", "D", "beta") if len(set(columns[name])) > 1]
    if len(swept) > 1:
        raise ValidationError(f"sim table sweeps several columns {swept}; plot one sweep at a time")
    x_name = swept[0] if swept else "D"
    rows = []
    for row in body:
        x = row[SIM_HEADER.index(x_name)]
        rows.append((x, row[SIM_HEADER.index("mc_mean")], "mc"))
    for row in body:
        x = row[SIM_HEADER.index(x_name)]
        rows.append((x, row[SIM_HEADER.index("theory")], "theory"))
    return rows


def cmd_show(args) -> int:
    try:
        with open(args.doc, encoding="utf-8") as fh:
            kind = json.load(fh).get("kind")
    except OSError as exc:
        raise ValidationError(f"cannot read {args.doc}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{args.doc}: not valid JSON: {exc}") from exc
    if kind == "scaling_law":
        doc = load_law_document(args.doc)
        if doc.dataset:
            print(f"dataset: {doc.dataset}")
        print(_law_table(doc.law))
    elif kind == "loss_link":
        doc = load_link_document(args.doc)
        print(_link_table(doc.link))
    else:
        raise ValidationError(f"{args.doc}: unknown document kind {kind!r}")
    return 0


def _write_csv(path, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc


if __name__ == "__main__":
    sys.exit(main())
